//! Vertical-cut planner built on superposition.
//!
//! With every cut vertical and at most one cut per surface point, the final
//! depth at point `j` is `(1/β) Σ_i max(0, E_i P_ij − φ)` with
//! `P_ij = Δt exp(−2 (x_i − x_j)² / w²)`. The planner picks the powers `E ≥ 0`
//! that minimise the squared depth error against the objective while keeping
//! every depth within the constraint.
//!
//! The solver is projected gradient descent on the error plus a quadratic
//! penalty on constraint excess, with the penalty weight escalated over
//! rounds, followed by a feasibility repair and a feasible-descent polish.
//! Several starting points are tried and the best feasible result wins.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryField;
use crate::error::{Error, Result};
use crate::model::{LaserAction, Layout, TissueParams, TissueSurface};
use crate::rng::{derive_seed, seeded};

/// Dense vertical-cut planning problem over the points of a planar surface.
#[derive(Clone, Debug)]
pub struct SuperpositionProblem {
    pub xs: Vec<f64>,
    /// Row-major `n × n`, `p[i * n + j] = P_ij`.
    pub p: Vec<f64>,
    /// Depth still to remove at each point to reach the objective.
    pub target_depths: Vec<f64>,
    /// Largest depth each point may lose before crossing the constraint, 0
    /// where it already has.
    pub constraint_depths: Vec<f64>,
    pub params: TissueParams,
    /// Points whose objective lay above the surface (target clamped to 0).
    pub clamped_targets: usize,
}

impl SuperpositionProblem {
    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n() + j]
    }

    /// Depth removed at every point by one vertical cut per point with the
    /// given powers.
    pub fn forward(&self, powers: &[f64]) -> Result<Vec<f64>> {
        if powers.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: powers.len(),
            });
        }
        if powers.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::Invalid("cut powers must be >= 0".into()));
        }
        Ok(self.depths(powers))
    }

    fn depths(&self, powers: &[f64]) -> Vec<f64> {
        let n = self.n();
        let TissueParams { beta, phi, dt, .. } = self.params;
        let mut out = vec![0.0; n];
        for (i, &e) in powers.iter().enumerate() {
            if e * dt <= phi {
                continue;
            }
            let row = &self.p[i * n..(i + 1) * n];
            for (o, &pij) in out.iter_mut().zip(row) {
                *o += (e * pij - phi).max(0.0);
            }
        }
        out.iter_mut().for_each(|o| *o /= beta);
        out
    }

    /// Penalised objective and its (sub)gradient.
    ///
    /// A clamp sitting exactly at its kink counts as active, so a cut held at
    /// its threshold power sees the one-sided slope of switching on. Cuts below
    /// threshold whose own point would benefit from ablation are first lifted
    /// to the threshold, which leaves the objective unchanged.
    fn objective(&self, powers: &mut [f64], mu: f64) -> (f64, Vec<f64>) {
        let n = self.n();
        let TissueParams { beta, phi, dt, .. } = self.params;
        let depth = self.depths(powers);
        let mut f = 0.0;
        let mut slope = vec![0.0; n];
        for j in 0..n {
            let r = depth[j] - self.target_depths[j];
            let v = (depth[j] - self.constraint_depths[j]).max(0.0);
            f += r * r + mu * v * v;
            slope[j] = 2.0 * (r + mu * v) / beta;
        }
        let threshold = phi / dt;
        for (e, s) in powers.iter_mut().zip(&slope) {
            if *e < threshold && *s < 0.0 {
                *e = threshold;
            }
        }
        let grad = powers
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let row = &self.p[i * n..(i + 1) * n];
                row.iter()
                    .zip(&slope)
                    .filter(|(&pij, _)| e * pij >= phi)
                    .map(|(&pij, &s)| pij * s)
                    .sum()
            })
            .collect();
        (f, grad)
    }

    fn penalised_value(&self, powers: &[f64], mu: f64) -> f64 {
        self.depths(powers)
            .iter()
            .zip(self.target_depths.iter().zip(&self.constraint_depths))
            .map(|(&d, (&t, &c))| {
                let v = (d - c).max(0.0);
                (d - t).powi(2) + mu * v * v
            })
            .sum()
    }

    /// Upper bound on the gradient's Lipschitz constant for penalty `mu`.
    fn lipschitz(&self, mu: f64) -> f64 {
        let n = self.n();
        let row_sum = (0..n)
            .map(|i| self.p[i * n..(i + 1) * n].iter().sum::<f64>())
            .fold(0.0, f64::max);
        2.0 * (1.0 + mu) * (row_sum / self.params.beta).powi(2)
    }

    fn is_feasible(&self, depth: &[f64], tolerance: f64) -> bool {
        depth
            .iter()
            .zip(&self.constraint_depths)
            .all(|(d, c)| *d <= c + tolerance)
    }

    /// Greedy sparse start: repeatedly fire at the point with the most depth
    /// left, with the power that closes that point's remaining gap.
    pub fn peeled_powers(&self) -> Vec<f64> {
        let n = self.n();
        let TissueParams { beta, phi, dt, .. } = self.params;
        let mut remaining = self.target_depths.clone();
        let mut powers = vec![0.0; n];
        let floor = 1e-6 * self.target_depths.iter().copied().fold(0.0, f64::max);
        for _ in 0..n {
            let (k, gap) = remaining.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (i, r)| {
                    if r > best.1 && powers[i] == 0.0 {
                        (i, r)
                    } else {
                        best
                    }
                },
            );
            if !(gap > floor) {
                break;
            }
            let e = (beta * gap + phi) / dt;
            powers[k] = e;
            let row = &self.p[k * n..(k + 1) * n];
            for (r, &pkj) in remaining.iter_mut().zip(row) {
                *r -= (e * pkj - phi).max(0.0) / beta;
            }
        }
        powers
    }

    /// Single-shot power at each point: closes its own gap on the beam axis.
    pub fn predicted_powers(&self) -> Vec<f64> {
        let TissueParams { beta, phi, dt, .. } = self.params;
        self.target_depths
            .iter()
            .map(|t| (beta * t + phi) / dt)
            .collect()
    }
}

/// Builds the planning problem from a planar surface and its boundaries.
pub fn assemble(
    surface: &TissueSurface,
    objective: &BoundaryField,
    constraint: &BoundaryField,
    params: &TissueParams,
) -> Result<SuperpositionProblem> {
    params.validate()?;
    if surface.layout() != Layout::Line {
        return Err(Error::Invalid(
            "superposition planning needs a planar surface; dense volumetric problems are unsupported".into(),
        ));
    }
    let xs: Vec<f64> = surface.points().iter().map(|p| p[0]).collect();
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Invalid(
            "surface points must have distinct x positions".into(),
        ));
    }
    let n = xs.len();
    let TissueParams { w, dt, .. } = *params;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = xs[i] - xs[j];
            p[i * n + j] = dt * (-2.0 * d * d / (w * w)).exp();
        }
    }
    let mut clamped_targets = 0;
    let mut target_depths = Vec::with_capacity(n);
    let mut constraint_depths = Vec::with_capacity(n);
    for pt in surface.points() {
        let lateral = [pt[0], pt[1]];
        let t = pt[2] - objective.interpolate(lateral)?;
        if t < 0.0 {
            clamped_targets += 1;
        }
        target_depths.push(t.max(0.0));
        constraint_depths.push((pt[2] - constraint.interpolate(lateral)?).max(0.0));
    }
    if clamped_targets > 0 {
        log::warn!("{clamped_targets} point(s) already below the objective; their target depth is clamped to 0");
    }
    Ok(SuperpositionProblem {
        xs,
        p,
        target_depths,
        constraint_depths,
        params: *params,
        clamped_targets,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Random nonnegative starts in addition to the zero, predicted-power, and
    /// peeled starts.
    pub random_starts: usize,
    pub max_iterations: usize,
    /// Stop a descent phase when the relative objective decrease falls below this.
    pub relative_tolerance: f64,
    /// Penalty weights applied in successive rounds.
    pub penalty_schedule: Vec<f64>,
    pub feasibility_tolerance: f64,
    pub threads: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            random_starts: 4,
            max_iterations: 5000,
            relative_tolerance: 1e-10,
            penalty_schedule: vec![1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
            feasibility_tolerance: 1e-9,
            threads: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub powers: Vec<f64>,
    pub achieved_depths: Vec<f64>,
    pub residual_mse: f64,
    pub feasible: bool,
    pub iterations: usize,
    /// Which start produced this result (0 = zero, 1 = predicted, 2 = peeled,
    /// then random, then any caller-supplied warm starts).
    pub start: usize,
}

impl SolveResult {
    /// Vertical cuts for every point whose power exceeds the ablation
    /// threshold, strongest first (ties by position index). Order does not
    /// change the final surface.
    pub fn to_actions(&self, problem: &SuperpositionProblem) -> Vec<LaserAction> {
        let threshold = problem.params.threshold_power();
        let mut idx: Vec<usize> = (0..problem.n())
            .filter(|&i| self.powers[i] > threshold)
            .collect();
        idx.sort_by(|&a, &b| self.powers[b].total_cmp(&self.powers[a]).then(a.cmp(&b)));
        idx.into_iter()
            .map(|i| LaserAction::vertical(problem.xs[i], self.powers[i]))
            .collect()
    }
}

/// Starting points in selection order: zero, predicted powers, peeled powers,
/// random draws.
pub fn starting_points(problem: &SuperpositionProblem, config: &SolverConfig) -> Vec<Vec<f64>> {
    let n = problem.n();
    let predicted = problem.predicted_powers();
    let mut starts = vec![vec![0.0; n], predicted.clone(), problem.peeled_powers()];
    for k in 0..config.random_starts {
        let mut rng = seeded(derive_seed(config.seed, k as u64));
        starts.push(
            predicted
                .iter()
                .map(|&e| rng.gen::<f64>() * 2.0 * e)
                .collect(),
        );
    }
    starts
}

/// Best feasible local minimum over the default starts.
pub fn solve(problem: &SuperpositionProblem, config: &SolverConfig) -> Result<SolveResult> {
    solve_with_starts(problem, config, &[])
}

/// As [`solve`], with extra caller-supplied starts tried after the defaults.
pub fn solve_with_starts(
    problem: &SuperpositionProblem,
    config: &SolverConfig,
    extra: &[Vec<f64>],
) -> Result<SolveResult> {
    let mut starts = starting_points(problem, config);
    for s in extra {
        if s.len() != problem.n() {
            return Err(Error::DimensionMismatch {
                expected: problem.n(),
                actual: s.len(),
            });
        }
        starts.push(s.iter().map(|e| e.max(0.0)).collect());
    }
    let run = |(k, s): (usize, &Vec<f64>)| {
        let mut r = descend(problem, config, s.clone());
        r.start = k;
        r
    };
    let results: Vec<SolveResult> = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        pool.install(|| starts.par_iter().enumerate().map(run).collect())
    } else {
        starts.iter().enumerate().map(run).collect()
    };
    Ok(select_best(results))
}

/// Lowest residual among feasible results (earliest start on ties); if none
/// is feasible, the lowest residual overall.
pub fn select_best(results: Vec<SolveResult>) -> SolveResult {
    let any_feasible = results.iter().any(|r| r.feasible);
    results
        .into_iter()
        .filter(|r| r.feasible || !any_feasible)
        .reduce(|best, r| {
            if r.residual_mse < best.residual_mse {
                r
            } else {
                best
            }
        })
        .expect("at least one start")
}

/// Local descent from one start.
pub fn descend(
    problem: &SuperpositionProblem,
    config: &SolverConfig,
    start: Vec<f64>,
) -> SolveResult {
    let mut powers = start;
    let mut iterations = 0;
    for &mu in &config.penalty_schedule {
        iterations += projected_descent(problem, config, &mut powers, mu, None);
    }
    let tol = config.feasibility_tolerance;
    let mut depth = problem.depths(&powers);
    if !problem.is_feasible(&depth, tol) {
        repair(problem, &mut powers, tol);
        depth = problem.depths(&powers);
    }
    if problem.is_feasible(&depth, tol) {
        iterations += projected_descent(problem, config, &mut powers, 0.0, Some(tol));
        depth = problem.depths(&powers);
    }
    let n = problem.n() as f64;
    let residual_mse = depth
        .iter()
        .zip(&problem.target_depths)
        .map(|(d, t)| (d - t).powi(2))
        .sum::<f64>()
        / n;
    SolveResult {
        feasible: problem.is_feasible(&depth, tol),
        powers,
        achieved_depths: depth,
        residual_mse,
        iterations,
        start: 0,
    }
}

/// Projected gradient with backtracking.
///
/// Trial steps are measured in units of `1/L`, with `L` a Lipschitz bound of
/// the smooth part of the objective; each iteration starts from the spectral
/// (Barzilai-Borwein) estimate of the previous step, or 1.0 on the first, and
/// halves until sufficient decrease. With `feasible_within`, trial points
/// must also satisfy the constraint.
fn projected_descent(
    problem: &SuperpositionProblem,
    config: &SolverConfig,
    powers: &mut Vec<f64>,
    mu: f64,
    feasible_within: Option<f64>,
) -> usize {
    let unit = 1.0 / problem.lipschitz(mu);
    let mut iterations = 0;
    let (mut f, mut grad) = problem.objective(powers.as_mut_slice(), mu);
    let mut initial = 1.0;
    while iterations < config.max_iterations && f > 0.0 {
        iterations += 1;
        let mut step = initial;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = powers
                .iter()
                .zip(&grad)
                .map(|(e, g)| (e - step * unit * g).max(0.0))
                .collect();
            let moved: f64 = trial
                .iter()
                .zip(powers.iter())
                .zip(&grad)
                .map(|((t, e), g)| g * (e - t))
                .sum();
            if moved <= 0.0 {
                break;
            }
            let ok = match feasible_within {
                Some(tol) => problem.is_feasible(&problem.depths(&trial), tol),
                None => true,
            };
            if ok {
                let ft = problem.penalised_value(&trial, mu);
                if ft <= f - 1e-4 * moved {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, ft)) = accepted else { break };
        let decrease = f - ft;
        let stepped = trial.clone();
        let mut trial = trial;
        let (f_new, g_new) = problem.objective(&mut trial, mu);
        let lifted = trial != stepped;
        // spectral step |s|² / (s · y), in units of 1/L
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..trial.len() {
            let si = stepped[i] - powers[i];
            ss += si * si;
            sy += si * (g_new[i] - grad[i]);
        }
        initial = if sy > 0.0 {
            (ss / sy / unit).clamp(1e-3, 1e6)
        } else {
            1.0
        };
        *powers = trial;
        f = f_new;
        grad = g_new;
        if !lifted && decrease <= config.relative_tolerance * (f + decrease) {
            break;
        }
    }
    iterations
}

/// Scales powers down until every depth is within the constraint.
///
/// Depths are nondecreasing in a common scale factor and vanish at zero, so
/// bisection on the factor always finds a feasible point when the constraint
/// depths are nonnegative.
fn repair(problem: &SuperpositionProblem, powers: &mut Vec<f64>, tol: f64) {
    let scaled = |a: f64| powers.iter().map(|e| e * a).collect::<Vec<_>>();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if problem.is_feasible(&problem.depths(&scaled(mid)), tol) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    *powers = scaled(lo);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::superposed_depth;
    use approx::assert_abs_diff_eq;

    fn params() -> TissueParams {
        TissueParams::new(1.0, 0.5, 0.15, 1.0).unwrap()
    }

    fn xs(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn flat_problem(n: usize, target: impl Fn(f64) -> f64, slack: f64) -> SuperpositionProblem {
        let xs = xs(n);
        let s = TissueSurface::flat_line(&xs, 0.0).unwrap();
        let obj = BoundaryField::from_fn(xs.clone(), None, |x, _| -target(x)).unwrap();
        let con = obj.map(|h, _, _| h - slack).unwrap();
        assemble(&s, &obj, &con, &params()).unwrap()
    }

    #[test]
    fn matrix_entries() {
        let p = TissueParams::new(1.0, 0.1, 0.5, 2.0).unwrap();
        let s = TissueSurface::flat_line(&[0.0, 0.5, 3.0], 0.0).unwrap();
        let f = BoundaryField::line(vec![0.0, 3.0], vec![0.0, 0.0]).unwrap();
        let prob = assemble(&s, &f, &f, &p).unwrap();
        for i in 0..3 {
            assert_eq!(prob.p(i, i), 2.0);
        }
        assert_abs_diff_eq!(prob.p(0, 1), 2.0 * (-2f64).exp(), epsilon = 1e-15);
        assert_eq!(prob.p(0, 1), prob.p(1, 0));
        assert_eq!(prob.target_depths, vec![0.0; 3]);
    }

    #[test]
    fn assemble_rejects_bad_surfaces() {
        let f = BoundaryField::line(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let dup = TissueSurface::flat_line(&[0.5, 0.5], 0.0).unwrap();
        assert!(assemble(&dup, &f, &f, &params()).is_err());
        let g = BoundaryField::grid(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0; 4]).unwrap();
        let grid = TissueSurface::flat_grid(&[0.0, 1.0], &[0.0, 1.0], 0.0).unwrap();
        assert!(assemble(&grid, &g, &g, &params()).is_err());
    }

    #[test]
    fn objective_above_surface_is_clamped() {
        let s = TissueSurface::flat_line(&[0.0, 1.0], 0.0).unwrap();
        let obj = BoundaryField::line(vec![0.0, 1.0], vec![0.2, -0.2]).unwrap();
        let con = BoundaryField::line(vec![0.0, 1.0], vec![-1.0, -1.0]).unwrap();
        let prob = assemble(&s, &obj, &con, &params()).unwrap();
        assert_eq!(prob.target_depths[0], 0.0);
        assert_eq!(prob.clamped_targets, 1);
    }

    #[test]
    fn forward_cases() {
        let prob = flat_problem(15, |_| 0.1, 0.1);
        assert_eq!(prob.forward(&[0.0; 15]).unwrap(), vec![0.0; 15]);
        assert!(prob.forward(&[0.0; 3]).is_err());
        let e: Vec<f64> = (0..15).map(|i| (i % 4) as f64 * 0.7).collect();
        let expected = superposed_depth(&prob.xs, &e, &prob.params).unwrap();
        for (a, b) in prob.forward(&e).unwrap().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_is_linear_without_threshold() {
        let xs = xs(9);
        let s = TissueSurface::flat_line(&xs, 0.0).unwrap();
        let f = BoundaryField::line(xs.clone(), vec![0.0; 9]).unwrap();
        let p = TissueParams::new(2.0, 0.0, 0.3, 1.5).unwrap();
        let prob = assemble(&s, &f, &f, &p).unwrap();
        let e: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
        let got = prob.forward(&e).unwrap();
        for (j, &g) in got.iter().enumerate() {
            let lin: f64 = (0..9).map(|i| prob.p(i, j) * e[i]).sum::<f64>() / 2.0;
            assert_abs_diff_eq!(g, lin, epsilon = 1e-13);
        }
    }

    #[test]
    fn zero_target_gives_zero_powers() {
        let prob = flat_problem(20, |_| 0.0, 0.05);
        let r = solve(&prob, &SolverConfig::default()).unwrap();
        assert!(r.feasible);
        assert_eq!(r.residual_mse, 0.0);
        assert!(r.to_actions(&prob).is_empty());
        assert_eq!(r.achieved_depths, vec![0.0; 20]);
    }

    #[test]
    fn tight_constraint_never_overcuts() {
        let prob = flat_problem(40, |x| if x.abs() < 0.4 { 0.3 } else { 0.0 }, 0.0);
        let r = solve(&prob, &SolverConfig::default()).unwrap();
        assert!(r.feasible);
        assert!(r.powers.iter().all(|&e| e >= 0.0));
        for (d, t) in r.achieved_depths.iter().zip(&prob.target_depths) {
            assert!(*d <= t + 1e-9);
        }
        assert_eq!(r.achieved_depths, prob.forward(&r.powers).unwrap());
    }

    #[test]
    fn actions_reproduce_depths() {
        let prob = flat_problem(30, |x| 0.25 * (1.0 - x * x), 0.05);
        let r = solve(&prob, &SolverConfig::default()).unwrap();
        let s = TissueSurface::flat_line(&prob.xs, 0.0).unwrap();
        let out = crate::model::replay(&s, &r.to_actions(&prob), &prob.params);
        for (p, d) in out.points().iter().zip(&r.achieved_depths) {
            assert_abs_diff_eq!(-p[2], *d, epsilon = 1e-12);
        }
    }
}
