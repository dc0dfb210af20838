//! Open-loop and receding-horizon execution against a plant whose tissue
//! parameters differ from the planner's nominal model.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryField;
use crate::error::Result;
use crate::graph::{search_with, RootPolicy, SamplerConfig};
use crate::metrics::{mse, violation, MetricsReport, DEFAULT_VIOLATION_TOLERANCE};
use crate::model::{apply_ablation, LaserAction, TissueParams, TissueSurface};
use crate::rng::{derive_seed, seeded};
use crate::superposition::{assemble, solve_with_starts, SolverConfig};

/// How a fractional error is applied to `β`, which is the product of density
/// and ablation enthalpy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compounding {
    /// `β` and `φ` each scaled once by `1 + p`.
    #[default]
    Single,
    /// Density and enthalpy each scaled: `β · (1 + p)²`, `φ · (1 + p)`.
    PerFactor,
}

/// Nominal model used by the controller and the true model used by the plant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub nominal_params: TissueParams,
    pub true_params: TissueParams,
    /// Signed fractional error applied to `β` and `φ`.
    pub perturbation: f64,
    pub compounding: Compounding,
}

impl PlantSpec {
    pub fn new(nominal: TissueParams, perturbation: f64, compounding: Compounding) -> Result<Self> {
        let scale = 1.0 + perturbation;
        let beta_scale = match compounding {
            Compounding::Single => scale,
            Compounding::PerFactor => scale * scale,
        };
        let true_params = TissueParams::new(
            nominal.beta * beta_scale,
            nominal.phi * scale,
            nominal.w,
            nominal.dt,
        )?;
        Ok(Self {
            nominal_params: nominal,
            true_params,
            perturbation,
            compounding,
        })
    }

    pub fn exact(nominal: TissueParams) -> Self {
        Self {
            nominal_params: nominal,
            true_params: nominal,
            perturbation: 0.0,
            compounding: Compounding::Single,
        }
    }

    /// One cut on the real tissue.
    pub fn execute(&self, surface: &TissueSurface, action: &LaserAction) -> TissueSurface {
        apply_ablation(surface, action, &self.true_params).surface
    }
}

/// Measurement of the surface after each cut. Zero noise is perfect sensing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    /// Half-width of uniform noise added to sensed heights.
    pub height_noise: f64,
    pub seed: u64,
}

impl SensorModel {
    fn sense(&self, surface: &TissueSurface, cut: usize) -> Result<TissueSurface> {
        if self.height_noise == 0.0 {
            return Ok(surface.clone());
        }
        let mut rng = seeded(derive_seed(self.seed, cut as u64));
        let points = surface
            .points()
            .iter()
            .map(|p| {
                [
                    p[0],
                    p[1],
                    p[2] + self.height_noise * (2.0 * rng.gen::<f64>() - 1.0),
                ]
            })
            .collect();
        TissueSurface::new(surface.layout(), points)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Feedforward,
    Feedback,
}

/// State after one executed cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based cut index.
    pub cut: usize,
    pub action: LaserAction,
    pub pre_mse: f64,
    pub post_mse: f64,
    pub violations: usize,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug)]
pub struct ExecutionReport {
    pub mode: ExecutionMode,
    pub final_surface: TissueSurface,
    pub metrics: MetricsReport,
    pub cuts_executed: usize,
    pub executed: Vec<LaserAction>,
    pub wall_time_s: f64,
    pub trace: Vec<TraceRecord>,
}

impl ExecutionReport {
    pub fn mse(&self) -> f64 {
        self.metrics.mse
    }

    pub fn violation_fraction(&self) -> f64 {
        self.metrics.violation_fraction
    }
}

/// Boundaries shared by an execution run.
#[derive(Clone, Copy, Debug)]
pub struct Boundaries<'a> {
    pub objective: &'a BoundaryField,
    pub constraint: &'a BoundaryField,
}

struct Recorder<'a> {
    start: Instant,
    bounds: Boundaries<'a>,
    trace: Vec<TraceRecord>,
    executed: Vec<LaserAction>,
}

impl<'a> Recorder<'a> {
    fn new(bounds: Boundaries<'a>) -> Self {
        Self {
            start: Instant::now(),
            bounds,
            trace: Vec::new(),
            executed: Vec::new(),
        }
    }

    fn record(
        &mut self,
        action: &LaserAction,
        before: &TissueSurface,
        after: &TissueSurface,
    ) -> Result<()> {
        let cut = self.trace.len() + 1;
        let elapsed = self.start.elapsed().as_secs_f64();
        let elapsed_s = self
            .trace
            .last()
            .map_or(elapsed, |r| r.elapsed_s.max(elapsed));
        self.trace.push(TraceRecord {
            cut,
            action: *action,
            pre_mse: mse(before, self.bounds.objective)?,
            post_mse: mse(after, self.bounds.objective)?,
            violations: violation(after, self.bounds.constraint, DEFAULT_VIOLATION_TOLERANCE)?.0,
            elapsed_s,
        });
        self.executed.push(*action);
        Ok(())
    }

    fn finish(
        self,
        mode: ExecutionMode,
        initial: &TissueSurface,
        state: TissueSurface,
    ) -> Result<ExecutionReport> {
        let metrics = MetricsReport::compute(
            initial,
            &state,
            self.bounds.objective,
            self.bounds.constraint,
            DEFAULT_VIOLATION_TOLERANCE,
        )?;
        Ok(ExecutionReport {
            mode,
            final_surface: state,
            metrics,
            cuts_executed: self.executed.len(),
            executed: self.executed,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            trace: self.trace,
        })
    }
}

/// Applies a precomputed plan on the plant without correction. Violations are
/// recorded, not prevented.
pub fn run_feedforward(
    plan: &[LaserAction],
    plant: &PlantSpec,
    initial: &TissueSurface,
    bounds: Boundaries<'_>,
) -> Result<ExecutionReport> {
    let mut rec = Recorder::new(bounds);
    let mut state = initial.clone();
    for action in plan {
        let next = plant.execute(&state, action);
        rec.record(action, &state, &next)?;
        state = next;
    }
    rec.finish(ExecutionMode::Feedforward, initial, state)
}

/// A planner that can be re-run from a sensed state.
pub trait Controller {
    /// Plans from `state` with the nominal model. An empty plan ends the run.
    fn plan(&mut self, state: &TissueSurface, iteration: usize) -> Result<Vec<LaserAction>>;

    /// Informs the controller which action of its last plan was executed.
    fn executed(&mut self, _action: &LaserAction) {}
}

/// When the receding-horizon loop stops even if the planner still has cuts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_cuts: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { max_cuts: 200 }
    }
}

/// Plan, execute the first cut on the plant, sense, repeat.
pub fn run_feedback(
    controller: &mut dyn Controller,
    plant: &PlantSpec,
    initial: &TissueSurface,
    bounds: Boundaries<'_>,
    stop: StopRule,
    sensor: SensorModel,
) -> Result<ExecutionReport> {
    let mut rec = Recorder::new(bounds);
    let mut state = initial.clone();
    let mut sensed = initial.clone();
    for iteration in 0..stop.max_cuts {
        let plan = controller.plan(&sensed, iteration)?;
        let Some(first) = plan.first() else { break };
        let next = plant.execute(&state, first);
        rec.record(first, &state, &next)?;
        controller.executed(first);
        state = next;
        sensed = sensor.sense(&state, iteration)?;
    }
    rec.finish(ExecutionMode::Feedback, initial, state)
}

/// Graph-search controller. Iteration `k` searches with seed
/// `derive_seed(config.seed, k)`.
///
/// Only the first action of a plan is executed, and the first action of a
/// full multi-run plan comes from its first search, so a single search per
/// iteration is enough. A search whose improvement is below
/// `eps_c × cost of the first planned state` counts as an empty plan.
pub struct GraphController<'a> {
    pub config: SamplerConfig,
    pub params: TissueParams,
    bounds: Boundaries<'a>,
    threshold: Option<f64>,
}

impl<'a> GraphController<'a> {
    pub fn new(config: SamplerConfig, params: TissueParams, bounds: Boundaries<'a>) -> Self {
        Self {
            config,
            params,
            bounds,
            threshold: None,
        }
    }
}

impl Controller for GraphController<'_> {
    fn plan(&mut self, state: &TissueSurface, iteration: usize) -> Result<Vec<LaserAction>> {
        let cfg = SamplerConfig {
            seed: derive_seed(self.config.seed, iteration as u64),
            ..self.config.clone()
        };
        let r = search_with(
            state,
            self.bounds.objective,
            self.bounds.constraint,
            &cfg,
            &self.params,
            RootPolicy::FreezeViolations,
        )?;
        let threshold = *self
            .threshold
            .get_or_insert(self.config.eps_c * r.root_cost);
        let improvement = r.root_cost - r.best_cost;
        if !(improvement > 0.0) || improvement < threshold {
            return Ok(Vec::new());
        }
        Ok(r.actions)
    }
}

/// Superposition-optimizer controller.
///
/// Each re-plan also starts from the previous solution with the executed cut
/// removed, the usual shifted warm start of receding-horizon control. When the
/// sensed state is exactly the state the last plan predicted, the rest of that
/// plan is returned as is: re-solving would only trade it for another local
/// optimum of the same problem, and keeping it makes feedback on an exact
/// plant reproduce the one-shot plan.
pub struct OptimizerController<'a> {
    pub config: SolverConfig,
    pub params: TissueParams,
    bounds: Boundaries<'a>,
    warm: Option<(Vec<f64>, Vec<f64>)>,
    pending: Option<(TissueSurface, Vec<LaserAction>)>,
}

impl<'a> OptimizerController<'a> {
    pub fn new(config: SolverConfig, params: TissueParams, bounds: Boundaries<'a>) -> Self {
        Self {
            config,
            params,
            bounds,
            warm: None,
            pending: None,
        }
    }
}

impl Controller for OptimizerController<'_> {
    fn plan(&mut self, state: &TissueSurface, _iteration: usize) -> Result<Vec<LaserAction>> {
        if let Some((predicted, rest)) = self.pending.take() {
            if predicted == *state {
                self.pending = rest
                    .first()
                    .map(|a| (apply_ablation(state, a, &self.params).surface, rest.clone()));
                return Ok(rest);
            }
        }
        let problem = assemble(
            state,
            self.bounds.objective,
            self.bounds.constraint,
            &self.params,
        )?;
        let warm: Vec<Vec<f64>> = match &self.warm {
            Some((xs, powers)) if *xs == problem.xs => vec![powers.clone()],
            _ => Vec::new(),
        };
        let result = solve_with_starts(&problem, &self.config, &warm)?;
        let actions = result.to_actions(&problem);
        self.warm = Some((problem.xs, result.powers));
        self.pending = actions.first().map(|a| {
            (
                apply_ablation(state, a, &self.params).surface,
                actions.clone(),
            )
        });
        Ok(actions)
    }

    fn executed(&mut self, action: &LaserAction) {
        if let Some((xs, powers)) = &mut self.warm {
            if let Some(k) = xs.iter().position(|&x| x == action.position[0]) {
                powers[k] = 0.0;
            }
        }
        if let Some((_, rest)) = &mut self.pending {
            if rest.first() == Some(action) {
                rest.remove(0);
            } else {
                self.pending = None;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::replay;

    fn params() -> TissueParams {
        TissueParams::new(1.0, 0.5, 0.15, 1.0).unwrap()
    }

    fn setup() -> (TissueSurface, BoundaryField, BoundaryField) {
        let xs: Vec<f64> = (0..40).map(|i| -1.0 + 2.0 * i as f64 / 39.0).collect();
        let s = TissueSurface::flat_line(&xs, 0.0).unwrap();
        let target = replay(
            &s,
            &[
                LaserAction::vertical(xs[15], 1.0),
                LaserAction::vertical(xs[24], 0.9),
            ],
            &params(),
        );
        let obj = BoundaryField::line(xs.clone(), target.heights().collect()).unwrap();
        let con = obj.map(|h, x, _| h - 0.05 * x.abs() - 0.01).unwrap();
        (s, obj, con)
    }

    #[test]
    fn plant_perturbation() {
        let p = PlantSpec::new(params(), -0.05, Compounding::Single).unwrap();
        assert!((p.true_params.beta - 0.95).abs() < 1e-15);
        assert!((p.true_params.phi - 0.475).abs() < 1e-15);
        assert_eq!(p.true_params.w, 0.15);
        let q = PlantSpec::new(params(), -0.05, Compounding::PerFactor).unwrap();
        assert!((q.true_params.beta - 0.9025).abs() < 1e-15);
    }

    #[test]
    fn exact_plant_reproduces_prediction() {
        let (s, obj, con) = setup();
        let plan = [
            LaserAction::planar(0.1, 0.2, 1.1),
            LaserAction::vertical(-0.3, 0.8),
        ];
        let bounds = Boundaries {
            objective: &obj,
            constraint: &con,
        };
        let r = run_feedforward(&plan, &PlantSpec::exact(params()), &s, bounds).unwrap();
        assert_eq!(r.final_surface, replay(&s, &plan, &params()));
        assert_eq!(r.cuts_executed, 2);
        let empty = run_feedforward(&[], &PlantSpec::exact(params()), &s, bounds).unwrap();
        assert_eq!(empty.final_surface, s);
        assert_eq!(empty.metrics.mse, mse(&s, &obj).unwrap());
    }

    #[test]
    fn weaker_tissue_cuts_deeper() {
        let (s, _, _) = setup();
        let plant = PlantSpec::new(params(), -0.05, Compounding::Single).unwrap();
        let a = LaserAction::planar(0.05, -0.3, 1.3);
        let nominal = apply_ablation(&s, &a, &params());
        let real = apply_ablation(&s, &a, &plant.true_params);
        for (n, r) in nominal.displacement.iter().zip(&real.displacement) {
            if *n > 0.0 {
                assert!(r > n);
            }
        }
    }

    struct Never;
    impl Controller for Never {
        fn plan(&mut self, _: &TissueSurface, _: usize) -> Result<Vec<LaserAction>> {
            Ok(Vec::new())
        }
    }

    #[test]
    fn empty_controller_executes_nothing() {
        let (s, obj, con) = setup();
        let bounds = Boundaries {
            objective: &obj,
            constraint: &con,
        };
        let r = run_feedback(
            &mut Never,
            &PlantSpec::exact(params()),
            &s,
            bounds,
            StopRule::default(),
            SensorModel::default(),
        )
        .unwrap();
        assert_eq!(r.cuts_executed, 0);
        assert_eq!(r.final_surface, s);
    }

    #[test]
    fn stop_rule_caps_cuts() {
        struct Always;
        impl Controller for Always {
            fn plan(&mut self, _: &TissueSurface, _: usize) -> Result<Vec<LaserAction>> {
                Ok(vec![LaserAction::vertical(0.0, 0.6)])
            }
        }
        let (s, obj, con) = setup();
        let bounds = Boundaries {
            objective: &obj,
            constraint: &con,
        };
        let r = run_feedback(
            &mut Always,
            &PlantSpec::exact(params()),
            &s,
            bounds,
            StopRule { max_cuts: 7 },
            SensorModel::default(),
        )
        .unwrap();
        assert_eq!(r.cuts_executed, 7);
        assert!(r
            .trace
            .windows(2)
            .all(|w| w[0].cut < w[1].cut && w[0].elapsed_s <= w[1].elapsed_s));
    }
}
