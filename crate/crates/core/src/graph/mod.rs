//! Weighted random-sampling tree search over laser inputs.
//!
//! A tree of tissue states is grown from the initial surface. Each expansion
//! draws a node (favouring low cost), a laser position (favouring points with
//! high residual cost), a tilt (uniform), and a power (favouring the power that
//! would close the gap at that position in one cut), simulates the cut, and
//! keeps the child only when it is feasible and actually removes tissue.
//!
//! [`search`] returns the cheapest node of one tree; [`plan`] repeats searches
//! from the incumbent state until the improvement of a run drops below
//! `eps_c × initial cost`.

mod weights;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use weights::{
    node_weights, position_weights, power_for_gap, power_sampler, power_weights, predicted_power,
    CumulativeSampler,
};

use crate::boundary::BoundaryField;
use crate::error::{Error, Result};
use crate::metrics::{
    point_cost, residuals, violating_points, CostBreakdown, DEFAULT_LAMBDA,
    DEFAULT_VIOLATION_TOLERANCE,
};
use crate::model::{moved_points, LaserAction, Point, TissueParams, TissueSurface};
use crate::rng::{derive_seed, seeded};

/// Tuning of the sampler and of the search budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Node-weight exponent.
    pub a: f64,
    /// Node-weight floor.
    pub eps_n: f64,
    /// Position-weight floor.
    pub eps_l: f64,
    /// Power-weight sharpness.
    pub b: f64,
    /// Overcut weight of the modified cost.
    pub lambda: f64,
    /// Discrete allowable powers.
    pub power_set: Vec<f64>,
    /// Allowable tilts, used independently for each tilt axis.
    pub angle_set: Vec<f64>,
    /// Node budget per search.
    pub k_f: usize,
    /// Outer-loop stop threshold, relative to the cost at the start of `plan`.
    pub eps_c: f64,
    pub max_runs: usize,
    /// Hard cap on expansion attempts per search, as a multiple of `k_f`.
    pub attempt_factor: usize,
    pub violation_tolerance: f64,
    /// Candidates simulated concurrently per batch; 1 is the reference mode.
    pub threads: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            a: 2.0,
            eps_n: 1e-6,
            eps_l: 1e-6,
            b: 1.0,
            lambda: DEFAULT_LAMBDA,
            power_set: Vec::new(),
            angle_set: uniform_levels(
                -std::f64::consts::FRAC_PI_4,
                std::f64::consts::FRAC_PI_4,
                21,
            ),
            k_f: 10_000,
            eps_c: 1e-4,
            max_runs: 50,
            attempt_factor: 50,
            violation_tolerance: DEFAULT_VIOLATION_TOLERANCE,
            threads: 1,
            seed: 0,
        }
    }
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform_levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

impl SamplerConfig {
    /// Defaults with a power set of 32 levels in `[0, 2 · max predicted power]`
    /// over the points of `initial`.
    pub fn for_problem(
        initial: &TissueSurface,
        objective: &BoundaryField,
        params: &TissueParams,
    ) -> Result<Self> {
        Ok(Self {
            power_set: default_power_set(initial, objective, params)?,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Invalid(format!("sampler config: {m}")));
        if !(self.eps_n > 0.0 && self.eps_l > 0.0) {
            return fail("eps_n and eps_l must be > 0");
        }
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return fail("a and b must be >= 0");
        }
        if !(self.lambda >= 1.0) {
            return fail("lambda must be >= 1");
        }
        if self.k_f < 1 || self.attempt_factor < 1 || self.threads < 1 {
            return fail("k_f, attempt_factor, and threads must be >= 1");
        }
        if self.power_set.is_empty() || self.power_set.iter().any(|&e| !(e >= 0.0 && e.is_finite()))
        {
            return fail("power_set must be nonempty with finite entries >= 0");
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if self.angle_set.is_empty() || self.angle_set.iter().any(|a| !(a.abs() < half_pi)) {
            return fail("angle_set must be nonempty with entries in (-pi/2, pi/2)");
        }
        if !(self.eps_c >= 0.0) {
            return fail("eps_c must be >= 0");
        }
        Ok(())
    }
}

/// 32 uniform power levels in `[0, 2 · max_i E_p(x_i)]`.
pub fn default_power_set(
    initial: &TissueSurface,
    objective: &BoundaryField,
    params: &TissueParams,
) -> Result<Vec<f64>> {
    let max_ep = residuals(initial, objective)?
        .into_iter()
        .map(|gap| power_for_gap(params, gap))
        .fold(0.0, f64::max);
    Ok(uniform_levels(0.0, 2.0 * max_ep, 32))
}

/// One state of the search tree.
#[derive(Clone, Debug)]
pub struct PlanNode {
    pub state: TissueSurface,
    /// Modified cost of `state`.
    pub cost: f64,
    pub parent: Option<usize>,
    pub action: Option<LaserAction>,
    /// Cuts since the root.
    pub depth: usize,
    residuals: Vec<f64>,
    positions: CumulativeSampler,
}

/// Append-only search tree. Every stored state satisfies the constraint.
#[derive(Debug)]
pub struct PlanTree<'a> {
    nodes: Vec<PlanNode>,
    objective: &'a BoundaryField,
    constraint: &'a BoundaryField,
    node_sampler: CumulativeSampler,
    max_cost: f64,
    best: usize,
    a: f64,
    eps_n: f64,
    eps_l: f64,
    lambda: f64,
    tolerance: f64,
}

/// A candidate expansion: a parent node and the cut to apply to it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub node: usize,
    pub action: LaserAction,
}

/// What to do with a root state that already lies below the constraint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RootPolicy {
    /// Refuse it with [`Error::Infeasible`].
    #[default]
    RequireFeasible,
    /// Accept it and never move the violating points again. Used when
    /// re-planning from a sensed state that the plant has already overcut.
    FreezeViolations,
}

/// Whether a cut moved any point to below the constraint (or off its
/// domain). Unmoved points are skipped, so violations inherited from the
/// parent are tolerated but cannot be deepened.
fn moved_below(
    parent: &TissueSurface,
    moved: &[(usize, Point)],
    constraint: &BoundaryField,
    tolerance: f64,
) -> bool {
    moved.iter().any(|(i, c)| {
        parent.points()[*i] != *c
            && match constraint.interpolate([c[0], c[1]]) {
                Ok(zc) => c[2] < zc - tolerance,
                Err(_) => true,
            }
    })
}

impl<'a> PlanTree<'a> {
    /// Tree holding only `initial`, which must satisfy the constraint.
    pub fn new(
        initial: TissueSurface,
        objective: &'a BoundaryField,
        constraint: &'a BoundaryField,
        config: &SamplerConfig,
    ) -> Result<Self> {
        Self::with_policy(
            initial,
            objective,
            constraint,
            config,
            RootPolicy::RequireFeasible,
        )
    }

    pub fn with_policy(
        initial: TissueSurface,
        objective: &'a BoundaryField,
        constraint: &'a BoundaryField,
        config: &SamplerConfig,
        policy: RootPolicy,
    ) -> Result<Self> {
        config.validate()?;
        let violating = violating_points(&initial, constraint, config.violation_tolerance)?;
        if !violating.is_empty() && policy == RootPolicy::RequireFeasible {
            return Err(Error::Infeasible { violating });
        }
        let mut tree = Self {
            nodes: Vec::with_capacity(config.k_f),
            objective,
            constraint,
            node_sampler: CumulativeSampler::with_capacity(config.k_f),
            max_cost: f64::NEG_INFINITY,
            best: 0,
            a: config.a,
            eps_n: config.eps_n,
            eps_l: config.eps_l,
            lambda: config.lambda,
            tolerance: config.violation_tolerance,
        };
        let root = tree
            .make_node(initial, None, None, 0)
            .ok_or_else(|| Error::Infeasible { violating: vec![] })?;
        tree.insert(root);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn root(&self) -> &PlanNode {
        &self.nodes[0]
    }

    pub fn objective(&self) -> &BoundaryField {
        self.objective
    }

    pub fn constraint(&self) -> &BoundaryField {
        self.constraint
    }

    /// Index of the lowest-cost node (earliest on ties).
    pub fn best(&self) -> usize {
        self.best
    }

    /// Current node weights, in node order.
    pub fn node_weights(&self) -> Vec<f64> {
        (0..self.node_sampler.len())
            .map(|i| self.node_sampler.weight(i))
            .collect()
    }

    /// Position weights of a node's state, in point order.
    pub fn position_weights(&self, node: usize) -> Vec<f64> {
        let s = &self.nodes[node].positions;
        (0..s.len()).map(|i| s.weight(i)).collect()
    }

    /// Actions on the path from the root to `node`.
    pub fn path_actions(&self, node: usize) -> Vec<LaserAction> {
        self.path(node)
            .iter()
            .filter_map(|&i| self.nodes[i].action)
            .collect()
    }

    /// Node indices from the root to `node` inclusive.
    pub fn path(&self, mut node: usize) -> Vec<usize> {
        let mut out = vec![node];
        while let Some(p) = self.nodes[node].parent {
            out.push(p);
            node = p;
        }
        out.reverse();
        out
    }

    fn make_node(
        &self,
        state: TissueSurface,
        parent: Option<usize>,
        action: Option<LaserAction>,
        depth: usize,
    ) -> Option<PlanNode> {
        let r = match parent {
            None => residuals(&state, self.objective).ok()?,
            // unmoved points keep the parent's residual
            Some(p) => {
                let before = &self.nodes[p];
                let mut r = before.residuals.clone();
                for ((ri, q0), q) in r.iter_mut().zip(before.state.points()).zip(state.points()) {
                    if q0 != q {
                        *ri = self.objective.interpolate([q[0], q[1]]).ok()? - q[2];
                    }
                }
                r
            }
        };
        let cost = CostBreakdown::from_residuals(&r, self.lambda).modified_cost;
        let positions = CumulativeSampler::from_weights(
            r.iter().map(|&dz| point_cost(dz, self.lambda) + self.eps_l),
        );
        Some(PlanNode {
            state,
            cost,
            parent,
            action,
            depth,
            residuals: r,
            positions,
        })
    }

    fn insert(&mut self, node: PlanNode) {
        let cost = node.cost;
        if cost < self.nodes.get(self.best).map_or(f64::INFINITY, |b| b.cost) {
            self.best = self.nodes.len();
        }
        self.nodes.push(node);
        if cost > self.max_cost {
            self.max_cost = cost;
            self.node_sampler.clear();
            for n in &self.nodes {
                self.node_sampler
                    .push(weights::node_weight(cost, n.cost, self.a, self.eps_n));
            }
        } else {
            self.node_sampler.push(weights::node_weight(
                self.max_cost,
                cost,
                self.a,
                self.eps_n,
            ));
        }
    }

    /// Draws a node, position, tilt(s), and power.
    pub fn propose<R: Rng + ?Sized>(
        &self,
        config: &SamplerConfig,
        params: &TissueParams,
        rng: &mut R,
    ) -> Proposal {
        let node = self.node_sampler.sample(rng);
        let n = &self.nodes[node];
        let point = n.positions.sample(rng);
        let lateral = n.state.lateral(point);
        let theta_x = config.angle_set[rng.gen_range(0..config.angle_set.len())];
        let theta_y = if n.state.dimension() == 3 {
            config.angle_set[rng.gen_range(0..config.angle_set.len())]
        } else {
            0.0
        };
        let gap = self.objective.interpolate(lateral).unwrap_or(0.0) - n.state.points()[point][2];
        let e_p = power_for_gap(params, gap);
        let power = config.power_set[power_sampler(&config.power_set, e_p, config.b).sample(rng)];
        Proposal {
            node,
            action: LaserAction {
                position: lateral,
                angles: [theta_x, theta_y],
                power,
            },
        }
    }

    /// Simulates a proposal. `None` when the cut removes nothing, moves a
    /// point below the constraint, or moves a point off the boundary domain.
    pub fn evaluate(&self, proposal: &Proposal, params: &TissueParams) -> Option<PlanNode> {
        let parent = &self.nodes[proposal.node];
        let moved = moved_points(&parent.state, &proposal.action, params);
        if moved.is_empty() || moved_below(&parent.state, &moved, self.constraint, self.tolerance) {
            return None;
        }
        let mut points = parent.state.points().to_vec();
        for (i, q) in moved {
            points[i] = q;
        }
        let state = parent.state.with_points(points);
        self.make_node(
            state,
            Some(proposal.node),
            Some(proposal.action),
            parent.depth + 1,
        )
    }

    /// Inserts an evaluated child. Returns whether it was added.
    pub fn accept(&mut self, child: Option<PlanNode>) -> bool {
        match child {
            Some(node) => {
                self.insert(node);
                true
            }
            None => false,
        }
    }
}

/// One sample-simulate-insert step. Returns whether a child was inserted.
pub fn expand_once<R: Rng + ?Sized>(
    tree: &mut PlanTree<'_>,
    config: &SamplerConfig,
    rng: &mut R,
    params: &TissueParams,
) -> bool {
    let proposal = tree.propose(config, params, rng);
    let child = tree.evaluate(&proposal, params);
    tree.accept(child)
}

/// Outcome of a single tree search.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub actions: Vec<LaserAction>,
    pub state: TissueSurface,
    pub best_cost: f64,
    pub root_cost: f64,
    /// Modified cost after each action of `actions`.
    pub step_costs: Vec<f64>,
    pub tree_size: usize,
    pub attempts: usize,
}

/// Grows a tree from `initial` until it holds `k_f` nodes (or the attempt cap
/// is reached) and returns its cheapest node.
pub fn search(
    initial: &TissueSurface,
    objective: &BoundaryField,
    constraint: &BoundaryField,
    config: &SamplerConfig,
    params: &TissueParams,
) -> Result<SearchResult> {
    search_with(
        initial,
        objective,
        constraint,
        config,
        params,
        RootPolicy::RequireFeasible,
    )
}

/// [`search`] with an explicit policy for an infeasible root.
pub fn search_with(
    initial: &TissueSurface,
    objective: &BoundaryField,
    constraint: &BoundaryField,
    config: &SamplerConfig,
    params: &TissueParams,
    policy: RootPolicy,
) -> Result<SearchResult> {
    params.validate()?;
    let mut tree = PlanTree::with_policy(initial.clone(), objective, constraint, config, policy)?;
    let mut rng = seeded(config.seed);
    let cap = config.attempt_factor.saturating_mul(config.k_f);
    let mut attempts = 0;

    if config.threads <= 1 {
        while tree.len() < config.k_f && attempts < cap {
            expand_once(&mut tree, config, &mut rng, params);
            attempts += 1;
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        while tree.len() < config.k_f && attempts < cap {
            let batch = config.threads.min(cap - attempts);
            let proposals: Vec<Proposal> = (0..batch)
                .map(|_| tree.propose(config, params, &mut rng))
                .collect();
            let children: Vec<Option<PlanNode>> = pool.install(|| {
                proposals
                    .par_iter()
                    .map(|p| tree.evaluate(p, params))
                    .collect()
            });
            for child in children {
                if tree.len() >= config.k_f {
                    break;
                }
                tree.accept(child);
            }
            attempts += batch;
        }
    }

    let best = tree.best();
    let path = tree.path(best);
    Ok(SearchResult {
        actions: tree.path_actions(best),
        state: tree.nodes()[best].state.clone(),
        best_cost: tree.nodes()[best].cost,
        root_cost: tree.root().cost,
        step_costs: path[1..].iter().map(|&i| tree.nodes()[i].cost).collect(),
        tree_size: tree.len(),
        attempts,
    })
}

/// Concatenated output of repeated searches.
#[derive(Clone, Debug)]
pub struct Plan {
    pub actions: Vec<LaserAction>,
    /// Modified cost after each action.
    pub step_costs: Vec<f64>,
    /// Cost before the first run, then the best cost of every accepted run.
    pub run_costs: Vec<f64>,
    pub final_state: TissueSurface,
    pub runs: usize,
}

/// Repeats [`search`] from the incumbent best state, seeding run `k` with
/// `derive_seed(config.seed, k)`, until a run improves the cost by less than
/// `eps_c × initial cost` (that run is discarded) or `max_runs` is reached.
pub fn plan(
    initial: &TissueSurface,
    objective: &BoundaryField,
    constraint: &BoundaryField,
    config: &SamplerConfig,
    params: &TissueParams,
) -> Result<Plan> {
    let mut state = initial.clone();
    let mut out = Plan {
        actions: Vec::new(),
        step_costs: Vec::new(),
        run_costs: Vec::new(),
        final_state: initial.clone(),
        runs: 0,
    };
    let mut threshold = None;
    for run in 0..config.max_runs {
        let cfg = SamplerConfig {
            seed: derive_seed(config.seed, run as u64),
            ..config.clone()
        };
        let result = search(&state, objective, constraint, &cfg, params)?;
        out.runs += 1;
        if out.run_costs.is_empty() {
            out.run_costs.push(result.root_cost);
        }
        let threshold = *threshold.get_or_insert(config.eps_c * result.root_cost);
        let improvement = result.root_cost - result.best_cost;
        if result.actions.is_empty() || !(improvement > 0.0) || improvement < threshold {
            break;
        }
        log::debug!(
            "run {run}: cost {:.6e} -> {:.6e} with {} cuts ({} nodes)",
            result.root_cost,
            result.best_cost,
            result.actions.len(),
            result.tree_size
        );
        out.actions.extend(result.actions);
        out.step_costs.extend(result.step_costs);
        out.run_costs.push(result.best_cost);
        state = result.state;
    }
    out.final_state = state;
    Ok(out)
}
