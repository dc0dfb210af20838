//! Single-spot Gaussian ablation model and the point-cloud surface it acts on.
//!
//! A cut is a laser axis (incidence point on the `z = 0` reference plane plus a
//! tilt) and a power. Every surface point is pushed along the axis direction by
//! a depth that decays as a Gaussian of the point's orthogonal distance to the
//! axis, clamped at zero below the ablation threshold.
//!
//! Points are stored as `[x, y, z]`. Planar (2D) surfaces keep `y = 0` and only
//! use the first angle of an action; the same geometry code serves both cases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `[x, y, z]` with `z` the vertical (depth) coordinate.
pub type Point = [f64; 3];

/// Tissue and laser constants of the steady-state ablation model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueParams {
    /// Energy per unit depth (density times ablation enthalpy).
    pub beta: f64,
    /// Energy threshold below which nothing is removed.
    pub phi: f64,
    /// Beam spot size.
    pub w: f64,
    /// Exposure time per cut.
    pub dt: f64,
}

impl TissueParams {
    pub fn new(beta: f64, phi: f64, w: f64, dt: f64) -> Result<Self> {
        let params = Self { beta, phi, w, dt };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.beta.is_finite()
            && self.beta > 0.0
            && self.phi.is_finite()
            && self.phi >= 0.0
            && self.w.is_finite()
            && self.w > 0.0
            && self.dt.is_finite()
            && self.dt > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "tissue parameters need beta > 0, phi >= 0, w > 0, dt > 0 (got {self:?})"
            )))
        }
    }

    /// Energy delivered on the beam axis by a cut of the given power.
    pub fn axial_energy(&self, power: f64) -> f64 {
        power * self.dt
    }

    /// Largest power that still removes nothing anywhere.
    pub fn threshold_power(&self) -> f64 {
        self.phi / self.dt
    }
}

/// Inputs of one cut.
///
/// `position` is the incidence point on the reference plane and `angles` the
/// tilt from vertical about each lateral axis. Planar cuts leave the second
/// component of both at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserAction {
    pub position: [f64; 2],
    pub angles: [f64; 2],
    pub power: f64,
}

impl LaserAction {
    pub fn planar(x: f64, theta: f64, power: f64) -> Self {
        Self {
            position: [x, 0.0],
            angles: [theta, 0.0],
            power,
        }
    }

    pub fn vertical(x: f64, power: f64) -> Self {
        Self::planar(x, 0.0, power)
    }

    pub fn volumetric(x: f64, y: f64, theta_x: f64, theta_y: f64, power: f64) -> Self {
        Self {
            position: [x, y],
            angles: [theta_x, theta_y],
            power,
        }
    }

    pub fn is_vertical(&self) -> bool {
        self.angles == [0.0, 0.0]
    }

    pub fn validate(&self) -> Result<()> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let angles_ok = self
            .angles
            .iter()
            .all(|a| a.is_finite() && a.abs() < half_pi);
        let position_ok = self.position.iter().all(|p| p.is_finite());
        if !(self.power.is_finite() && self.power >= 0.0) {
            return Err(Error::Invalid(format!(
                "laser power must be >= 0, got {}",
                self.power
            )));
        }
        if !angles_ok || !position_ok {
            return Err(Error::Invalid(format!("invalid laser action {self:?}")));
        }
        Ok(())
    }

    pub fn axis(&self) -> LaserAxis {
        axis_from_action(self)
    }
}

/// Beam centre line: crosses `z = 0` at `origin` and points into the tissue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaserAxis {
    pub origin: Point,
    pub direction: Point,
}

impl LaserAxis {
    pub fn distance_to(&self, point: &Point) -> f64 {
        orthogonal_distance(self, point)
    }
}

/// Builds the beam axis for an action.
///
/// The direction is `(tan θx, tan θy, -1)` normalised, which reduces to
/// `(sin θ, 0, -cos θ)` for planar cuts.
pub fn axis_from_action(action: &LaserAction) -> LaserAxis {
    let origin = [action.position[0], action.position[1], 0.0];
    let [tx, ty] = action.angles;
    let direction = if ty == 0.0 {
        [tx.sin(), 0.0, -tx.cos()]
    } else {
        let raw = [tx.tan(), ty.tan(), -1.0];
        let norm = dot(&raw, &raw).sqrt();
        [raw[0] / norm, raw[1] / norm, raw[2] / norm]
    };
    LaserAxis { origin, direction }
}

/// Perpendicular distance from `point` to the infinite line of `axis`.
pub fn orthogonal_distance(axis: &LaserAxis, point: &Point) -> f64 {
    let rel = sub(point, &axis.origin);
    let along = dot(&rel, &axis.direction);
    let perp = [
        rel[0] - along * axis.direction[0],
        rel[1] - along * axis.direction[1],
        rel[2] - along * axis.direction[2],
    ];
    dot(&perp, &perp).sqrt()
}

/// Squared distance beyond which a cut certainly removes nothing, padded so
/// that skipping those points never changes a result.
fn reach_squared(params: &TissueParams, power: f64) -> f64 {
    let ratio = params.axial_energy(power) / params.phi;
    if !(ratio > 1.0) {
        return if params.phi == 0.0 {
            f64::INFINITY
        } else {
            -1.0
        };
    }
    let w2 = params.w * params.w;
    0.5 * w2 * ratio.ln() * (1.0 + 1e-6) + 1e-9 * w2
}

fn perpendicular_squared(axis: &LaserAxis, point: &Point) -> f64 {
    let rel = sub(point, &axis.origin);
    let along = dot(&rel, &axis.direction);
    (dot(&rel, &rel) - along * along).max(0.0)
}

/// Depth removed at orthogonal distance `d` from the axis of a cut with `power`.
///
/// `(1/β) max(0, E Δt exp(-2 d²/w²) - φ)`
pub fn point_displacement(params: &TissueParams, power: f64, d: f64) -> f64 {
    let energy = params.axial_energy(power) * (-2.0 * d * d / (params.w * params.w)).exp();
    (energy - params.phi).max(0.0) / params.beta
}

/// How the points of a surface were laid out at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Planar profile: points ordered along `x`, `y = 0`.
    Line,
    /// Row-major `nx × ny` grid, index `iy * nx + ix`.
    Grid { nx: usize, ny: usize },
}

impl Layout {
    pub fn dimension(&self) -> usize {
        match self {
            Layout::Line => 2,
            Layout::Grid { .. } => 3,
        }
    }
}

/// Ordered point cloud of the air-tissue boundary.
///
/// Point order is fixed at construction; ablation returns a new surface with
/// the same order and count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueSurface {
    layout: Layout,
    points: Vec<Point>,
}

impl TissueSurface {
    pub fn new(layout: Layout, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("surface needs at least one point".into()));
        }
        if let Layout::Grid { nx, ny } = layout {
            if nx * ny != points.len() {
                return Err(Error::DimensionMismatch {
                    expected: nx * ny,
                    actual: points.len(),
                });
            }
        }
        if layout == Layout::Line && points.iter().any(|p| p[1] != 0.0) {
            return Err(Error::Invalid(
                "planar surface points must have y = 0".into(),
            ));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("surface coordinates must be finite".into()));
        }
        Ok(Self { layout, points })
    }

    /// Planar profile with points at `xs`, all at height `z`.
    pub fn flat_line(xs: &[f64], z: f64) -> Result<Self> {
        Self::new(Layout::Line, xs.iter().map(|&x| [x, 0.0, z]).collect())
    }

    /// Grid-initialised cloud at height `z`.
    pub fn flat_grid(xs: &[f64], ys: &[f64], z: f64) -> Result<Self> {
        let points = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| [x, y, z]))
            .collect();
        Self::new(
            Layout::Grid {
                nx: xs.len(),
                ny: ys.len(),
            },
            points,
        )
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dimension(&self) -> usize {
        self.layout.dimension()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lateral(&self, i: usize) -> [f64; 2] {
        [self.points[i][0], self.points[i][1]]
    }

    pub fn heights(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p[2])
    }

    /// Surface height at a lateral location.
    ///
    /// Planar surfaces interpolate linearly between the two neighbouring points
    /// in `x`; volumetric clouds return the height of the laterally nearest
    /// point. Both are exact at point locations.
    pub fn height_at(&self, lateral: [f64; 2]) -> Result<f64> {
        match self.layout {
            Layout::Line => {
                let mut sorted: Vec<(f64, f64)> =
                    self.points.iter().map(|p| (p[0], p[2])).collect();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let x = lateral[0];
                let (lo, hi) = (sorted[0].0, sorted[sorted.len() - 1].0);
                if !(lo..=hi).contains(&x) {
                    return Err(Error::OutOfDomain { x, y: lateral[1] });
                }
                let k = sorted.partition_point(|s| s.0 < x);
                if sorted[k].0 == x || k == 0 {
                    return Ok(sorted[k].1);
                }
                let (x0, z0) = sorted[k - 1];
                let (x1, z1) = sorted[k];
                Ok(z0 + (z1 - z0) * (x - x0) / (x1 - x0))
            }
            Layout::Grid { .. } => {
                let nearest = self
                    .points
                    .iter()
                    .min_by(|a, b| {
                        let da = (a[0] - lateral[0]).powi(2) + (a[1] - lateral[1]).powi(2);
                        let db = (b[0] - lateral[0]).powi(2) + (b[1] - lateral[1]).powi(2);
                        da.total_cmp(&db)
                    })
                    .expect("surface is nonempty");
                Ok(nearest[2])
            }
        }
    }

    /// Simulates one cut; see [`apply_ablation`].
    pub fn ablate(&self, action: &LaserAction, params: &TissueParams) -> AblationOutcome {
        apply_ablation(self, action, params)
    }

    /// Same layout, new coordinates. Used by file readers after validation.
    pub(crate) fn with_points(&self, points: Vec<Point>) -> Self {
        debug_assert_eq!(points.len(), self.points.len());
        Self {
            layout: self.layout,
            points,
        }
    }
}

/// Result of one simulated cut.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationOutcome {
    pub surface: TissueSurface,
    /// Depth removed at each point, along the cut's axis.
    pub displacement: Vec<f64>,
    pub max_displacement: f64,
}

impl AblationOutcome {
    pub fn is_noop(&self) -> bool {
        self.max_displacement == 0.0
    }
}

/// Moves every point of `surface` along the cut's axis by its modelled depth.
pub fn apply_ablation(
    surface: &TissueSurface,
    action: &LaserAction,
    params: &TissueParams,
) -> AblationOutcome {
    let cut = Cut::new(action, params);
    let mut displacement = Vec::with_capacity(surface.len());
    let mut max_displacement = 0.0_f64;
    let points = surface
        .points
        .iter()
        .map(|p| {
            let (dp, q) = cut.displace(p);
            displacement.push(dp);
            max_displacement = max_displacement.max(dp);
            q
        })
        .collect();
    AblationOutcome {
        surface: surface.with_points(points),
        displacement,
        max_displacement,
    }
}

/// Indices and new positions of the points a cut displaces, in index order.
/// Agrees bit for bit with [`apply_ablation`] without copying the surface.
pub fn moved_points(
    surface: &TissueSurface,
    action: &LaserAction,
    params: &TissueParams,
) -> Vec<(usize, Point)> {
    let cut = Cut::new(action, params);
    surface
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| match cut.displace(p) {
            (dp, q) if dp > 0.0 => Some((i, q)),
            _ => None,
        })
        .collect()
}

struct Cut<'a> {
    axis: LaserAxis,
    reach: f64,
    power: f64,
    params: &'a TissueParams,
}

impl<'a> Cut<'a> {
    fn new(action: &LaserAction, params: &'a TissueParams) -> Self {
        Self {
            axis: axis_from_action(action),
            reach: reach_squared(params, action.power),
            power: action.power,
            params,
        }
    }

    #[inline]
    fn displace(&self, p: &Point) -> (f64, Point) {
        if perpendicular_squared(&self.axis, p) > self.reach {
            return (0.0, *p);
        }
        let dp = point_displacement(self.params, self.power, orthogonal_distance(&self.axis, p));
        if dp == 0.0 {
            return (0.0, *p);
        }
        let d = self.axis.direction;
        (dp, [p[0] + dp * d[0], p[1] + dp * d[1], p[2] + dp * d[2]])
    }
}

/// Applies `actions` in order and returns the final surface.
pub fn replay<'a>(
    surface: &TissueSurface,
    actions: impl IntoIterator<Item = &'a LaserAction>,
    params: &TissueParams,
) -> TissueSurface {
    actions.into_iter().fold(surface.clone(), |s, a| {
        apply_ablation(&s, a, params).surface
    })
}

/// Total depth at each of `xs` after one vertical cut at every `xs[i]` with
/// power `powers[i]`.
///
/// Vertical cuts commute, so this equals any sequential application of the
/// same cuts.
pub fn superposed_depth(xs: &[f64], powers: &[f64], params: &TissueParams) -> Result<Vec<f64>> {
    if xs.len() != powers.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: powers.len(),
        });
    }
    let mut depth = vec![0.0; xs.len()];
    for (&xi, &power) in xs.iter().zip(powers) {
        if params.axial_energy(power) <= params.phi {
            continue;
        }
        for (dj, &xj) in depth.iter_mut().zip(xs) {
            *dj += point_displacement(params, power, (xi - xj).abs());
        }
    }
    Ok(depth)
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
