//! Benchmark geometries: square well, sawtooth, two-cut, and a 3D tumor with
//! a vessel beneath it.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryField;
use crate::error::{Error, Result};
use crate::feedback::{Compounding, PlantSpec};
use crate::graph::{default_power_set, SamplerConfig};
use crate::model::{replay, LaserAction, TissueParams, TissueSurface};
use crate::superposition::SolverConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Slack allowed when checking `constraint ≤ objective ≤ initial`.
const ORDER_TOLERANCE: f64 = 1e-12;

/// Constraint offset `z_c(x) = z_d(x) − a·|x| − b` (in 3D, `|x|` is the
/// lateral radius).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintOffset {
    pub a: f64,
    pub b: f64,
}

impl Default for ConstraintOffset {
    fn default() -> Self {
        Self { a: 0.05, b: 0.02 }
    }
}

impl ConstraintOffset {
    fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return Err(Error::Invalid(format!(
                "constraint offsets must be >= 0, got a={} b={}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    pub fn apply(&self, objective: &BoundaryField) -> Result<BoundaryField> {
        self.validate()?;
        objective.map(|h, x, y| h - self.a * x.hypot(y) - self.b)
    }
}

/// Problem size. `Desk` is the reduced scale used for CI.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Full,
    Desk,
}

impl Preset {
    pub fn points_2d(self) -> usize {
        match self {
            Preset::Full => 100,
            Preset::Desk => 50,
        }
    }

    pub fn grid_3d(self) -> usize {
        match self {
            Preset::Full => 100,
            Preset::Desk => 30,
        }
    }

    /// Node budget per search. The same at both scales: a full 3D tree of
    /// 10⁵ states of 10⁴ points would not fit in memory.
    pub fn k_f(self) -> usize {
        10_000
    }
}

/// Everything needed to plan, execute, and score one problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    pub dimension: usize,
    pub initial_surface: TissueSurface,
    pub objective: BoundaryField,
    pub constraint: BoundaryField,
    pub nominal_params: TissueParams,
    /// Signed fractional error of the plant's `β` and `φ`.
    pub perturbation: f64,
    pub compounding: Compounding,
    /// Offset that produced the constraint, when it was generated that way.
    pub constraint_offset: Option<ConstraintOffset>,
    pub sampler: SamplerConfig,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Scenario {
    /// Assembles a scenario with default planner settings sized for `preset`.
    pub fn new(
        name: impl Into<String>,
        initial_surface: TissueSurface,
        objective: BoundaryField,
        constraint: BoundaryField,
        nominal_params: TissueParams,
        preset: Preset,
    ) -> Result<Self> {
        let sampler = SamplerConfig {
            power_set: default_power_set(&initial_surface, &objective, &nominal_params)?,
            k_f: preset.k_f(),
            ..SamplerConfig::default()
        };
        let s = Self {
            schema: SCHEMA_VERSION,
            name: name.into(),
            dimension: initial_surface.dimension(),
            initial_surface,
            objective,
            constraint,
            nominal_params,
            perturbation: 0.0,
            compounding: Compounding::Single,
            constraint_offset: None,
            sampler,
            solver: SolverConfig::default(),
            seed: 0,
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks the schema, dimensions, parameters, and the ordering
    /// `constraint ≤ objective ≤ initial` at every knot.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        self.nominal_params.validate()?;
        let dims = [
            self.initial_surface.dimension(),
            self.objective.dimension(),
            self.constraint.dimension(),
        ];
        for d in dims {
            if d != self.dimension {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    actual: d,
                });
            }
        }
        if !(self.perturbation > -1.0 && self.perturbation.is_finite()) {
            return Err(Error::Invalid(format!(
                "perturbation must be > -1, got {}",
                self.perturbation
            )));
        }
        let mut bad = Vec::new();
        for (k, (x, y)) in self.constraint.knots().enumerate() {
            if self.constraint.heights()[k] > self.objective.interpolate([x, y])? + ORDER_TOLERANCE
            {
                bad.push(k);
            }
        }
        for (k, (x, y)) in self.objective.knots().enumerate() {
            if self.objective.heights()[k]
                > self.initial_surface.height_at([x, y])? + ORDER_TOLERANCE
            {
                bad.push(k);
            }
        }
        if !bad.is_empty() {
            bad.sort_unstable();
            bad.dedup();
            return Err(Error::Infeasible { violating: bad });
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<PlantSpec> {
        PlantSpec::new(self.nominal_params, self.perturbation, self.compounding)
    }

    /// Same scenario with the constraint raised onto the objective.
    pub fn with_pseudo_constraint(&self) -> Self {
        Self {
            constraint: self.objective.clone(),
            constraint_offset: Some(ConstraintOffset { a: 0.0, b: 0.0 }),
            ..self.clone()
        }
    }
}

/// Parameters shared by the benchmark generators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub preset: Preset,
    /// Overrides the preset's point count (per axis in 3D).
    pub resolution: Option<usize>,
    /// Half-width of the lateral domain, centred on 0.
    pub domain: f64,
    pub params: TissueParams,
    pub offset: ConstraintOffset,
}

/// Default desk-scale tissue constants.
pub fn default_params() -> TissueParams {
    TissueParams {
        beta: 1.0,
        phi: 0.5,
        w: 0.15,
        dt: 1.0,
    }
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Full,
            resolution: None,
            domain: 1.0,
            params: default_params(),
            offset: ConstraintOffset::default(),
        }
    }
}

impl GenConfig {
    pub fn desk() -> Self {
        Self {
            preset: Preset::Desk,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.offset.validate()?;
        if !(self.domain > 0.0 && self.domain.is_finite()) {
            return Err(Error::Invalid(format!(
                "domain must be > 0, got {}",
                self.domain
            )));
        }
        if self.resolution.is_some_and(|n| n < 2) {
            return Err(Error::Invalid("resolution must be >= 2".into()));
        }
        Ok(())
    }

    fn axis(&self, default: usize) -> Vec<f64> {
        let n = self.resolution.unwrap_or(default);
        (0..n)
            .map(|i| -self.domain + 2.0 * self.domain * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn xs(&self) -> Vec<f64> {
        self.axis(self.preset.points_2d())
    }

    fn finish(
        &self,
        name: &str,
        initial: TissueSurface,
        objective: BoundaryField,
    ) -> Result<Scenario> {
        let constraint = self.offset.apply(&objective)?;
        let mut s = Scenario::new(
            name,
            initial,
            objective,
            constraint,
            self.params,
            self.preset,
        )?;
        s.constraint_offset = Some(self.offset);
        Ok(s)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be > 0, got {v}")))
    }
}

/// Flat tissue with a rectangular well `|x| ≤ half_width` of the given depth.
pub fn gen_square_well(cfg: &GenConfig, half_width: f64, depth: f64) -> Result<Scenario> {
    cfg.validate()?;
    positive("half width", half_width)?;
    positive("depth", depth)?;
    let xs = cfg.xs();
    let initial = TissueSurface::flat_line(&xs, 0.0)?;
    let objective =
        BoundaryField::from_fn(
            xs,
            None,
            |x, _| if x.abs() <= half_width { -depth } else { 0.0 },
        )?;
    cfg.finish("square-well", initial, objective)
}

/// `count` teeth across `|x| ≤ extent`. Each tooth ramps down linearly to
/// `−depth` and then jumps back to the surface.
pub fn gen_sawtooth(cfg: &GenConfig, extent: f64, depth: f64, count: usize) -> Result<Scenario> {
    cfg.validate()?;
    positive("extent", extent)?;
    positive("depth", depth)?;
    if count == 0 {
        return Err(Error::Invalid("tooth count must be >= 1".into()));
    }
    let xs = cfg.xs();
    let width = 2.0 * extent / count as f64;
    let min_teeth_points = xs.iter().filter(|x| x.abs() <= extent).count();
    if min_teeth_points < 2 * count {
        return Err(Error::Invalid(format!(
            "{count} teeth need more than {min_teeth_points} points"
        )));
    }
    let tooth = |x: f64| {
        if x.abs() > extent {
            return 0.0;
        }
        let u = (x + extent) / width;
        let frac = u - u.floor();
        // the right end of the last tooth belongs to it, not to a new one
        let frac = if u >= count as f64 { 1.0 } else { frac };
        -depth * frac
    };
    let initial = TissueSurface::flat_line(&xs, 0.0)?;
    let objective = BoundaryField::from_fn(xs, None, |x, _| tooth(x))?;
    cfg.finish("sawtooth", initial, objective)
}

/// Objective made by simulating `actions` on a flat surface, resampled at the
/// flat surface's points.
pub fn gen_two_cut(cfg: &GenConfig, actions: [LaserAction; 2]) -> Result<Scenario> {
    cfg.validate()?;
    for a in &actions {
        a.validate()?;
        if a.angles[1] != 0.0 || a.position[1] != 0.0 {
            return Err(Error::Invalid("two-cut actions must be planar".into()));
        }
    }
    let xs = cfg.xs();
    let initial = TissueSurface::flat_line(&xs, 0.0)?;
    let cut = replay(&initial, &actions, &cfg.params);
    if cut.heights().all(|z| z == 0.0) {
        return Err(Error::Degenerate("the two cuts ablate nothing".into()));
    }
    let heights = xs
        .iter()
        .map(|&x| cut.height_at([x, 0.0]))
        .collect::<Result<Vec<_>>>()?;
    let objective = BoundaryField::line(xs, heights)?;
    cfg.finish("two-cut", initial, objective)
}

/// Default two-cut inputs: two tilted cuts of different strength.
pub fn default_two_cut_actions() -> [LaserAction; 2] {
    [
        LaserAction::planar(-0.3, 0.3, 0.95),
        LaserAction::planar(0.25, -0.2, 0.8),
    ]
}

/// Gaussian indentation `amplitude · exp(−r² / (2σ²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBlob {
    pub center: [f64; 2],
    pub amplitude: f64,
    pub sigma: f64,
}

impl GaussianBlob {
    pub fn depth(&self, x: f64, y: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let r2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        self.amplitude * (-r2 / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Integral over the whole plane.
    pub fn volume(&self) -> f64 {
        self.amplitude * 2.0 * PI * self.sigma * self.sigma
    }
}

/// A quarter of a horizontal torus: tube of radius `minor` around a circle of
/// radius `major` centred at `center` (height `center[2]`), covering the
/// angles `[start_angle, start_angle + π/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarterTorus {
    pub center: [f64; 3],
    pub major: f64,
    pub minor: f64,
    pub start_angle: f64,
}

impl QuarterTorus {
    /// Height of the tube's upper surface over `(x, y)`, if it lies there.
    pub fn top(&self, x: f64, y: f64) -> Option<f64> {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let off = dx.hypot(dy) - self.major;
        if off.abs() > self.minor {
            return None;
        }
        let sweep = (dy.atan2(dx) - self.start_angle).rem_euclid(2.0 * PI);
        if sweep > FRAC_PI_2 {
            return None;
        }
        Some(self.center[2] + (self.minor * self.minor - off * off).sqrt())
    }

    pub fn highest(&self) -> f64 {
        self.center[2] + self.minor
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TumorSpec {
    pub blobs: Vec<GaussianBlob>,
    pub vessel: Option<QuarterTorus>,
    /// Height of the flat tissue plane.
    pub plane: f64,
    /// Depth of the constraint below the objective away from the vessel.
    pub margin: f64,
}

impl Default for TumorSpec {
    fn default() -> Self {
        Self {
            blobs: vec![
                GaussianBlob {
                    center: [-0.05, 0.0],
                    amplitude: 0.3,
                    sigma: 0.22,
                },
                GaussianBlob {
                    center: [0.22, 0.18],
                    amplitude: 0.15,
                    sigma: 0.14,
                },
            ],
            vessel: Some(QuarterTorus {
                center: [0.45, -0.45, -0.19],
                major: 0.35,
                minor: 0.07,
                start_angle: FRAC_PI_2,
            }),
            plane: 0.0,
            margin: 0.02,
        }
    }
}

impl TumorSpec {
    /// Analytic tumor volume, ignoring truncation at the domain edge.
    pub fn analytic_volume(&self) -> f64 {
        self.blobs.iter().map(GaussianBlob::volume).sum()
    }
}

/// Flat tissue plane with a multi-Gaussian tumor to remove and an optional
/// vessel below it.
///
/// The constraint is the objective minus `margin`, raised onto the vessel's
/// upper surface where the vessel lies above that, and never above the
/// objective. The offset of `cfg` is not used.
pub fn gen_tumor_3d(cfg: &GenConfig, spec: &TumorSpec) -> Result<Scenario> {
    cfg.validate()?;
    for b in &spec.blobs {
        if !(b.amplitude >= 0.0 && b.sigma > 0.0) {
            return Err(Error::Invalid(
                "blob amplitude must be >= 0 and sigma > 0".into(),
            ));
        }
    }
    if let Some(t) = &spec.vessel {
        positive("torus major radius", t.major)?;
        positive("torus minor radius", t.minor)?;
        if t.highest() >= spec.plane {
            return Err(Error::Degenerate(format!(
                "vessel top {} reaches the tissue plane at {}",
                t.highest(),
                spec.plane
            )));
        }
    }
    let axis = cfg.axis(cfg.preset.grid_3d());
    let initial = TissueSurface::flat_grid(&axis, &axis, spec.plane)?;
    let objective = BoundaryField::from_fn(axis.clone(), Some(axis), |x, y| {
        spec.plane - spec.blobs.iter().map(|b| b.depth(x, y)).sum::<f64>()
    })?;
    if !(spec.margin >= 0.0) {
        return Err(Error::Invalid(format!(
            "margin must be >= 0, got {}",
            spec.margin
        )));
    }
    let offset = ConstraintOffset {
        a: 0.0,
        b: spec.margin,
    };
    let constraint = offset.apply(&objective)?.map(|h, x, y| {
        let zd = objective.interpolate([x, y]).unwrap_or(h);
        let floor = match spec.vessel.as_ref().and_then(|t| t.top(x, y)) {
            Some(top) => h.max(top),
            None => h,
        };
        floor.min(zd)
    })?;
    let mut s = Scenario::new(
        "tumor-3d", initial, objective, constraint, cfg.params, cfg.preset,
    )?;
    s.constraint_offset = Some(offset);
    Ok(s)
}

/// Named desk-scale or full-scale benchmark with default geometry.
pub fn builtin(name: &str, preset: Preset) -> Result<Scenario> {
    let cfg = GenConfig {
        preset,
        ..GenConfig::default()
    };
    match name {
        "square-well" => gen_square_well(&cfg, 0.5, 0.4),
        "sawtooth" => gen_sawtooth(&cfg, 0.75, 0.4, 3),
        "two-cut" => gen_two_cut(&cfg, default_two_cut_actions()),
        "tumor-3d" => gen_tumor_3d(&cfg, &TumorSpec::default()),
        other => Err(Error::Invalid(format!(
            "unknown scenario {other:?}; expected square-well, sawtooth, two-cut, or tumor-3d"
        ))),
    }
}
