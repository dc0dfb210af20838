//! Graph-search plan for the square well at desk scale.
//!
//! Pass a seed as the first argument. The node budget is cut to 2000 so the
//! example finishes in a few seconds.

use ablation_planner::graph::{plan, SamplerConfig};
use ablation_planner::metrics::{mse, violation};
use ablation_planner::scenario::{builtin, Preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(0);
    let s = builtin("square-well", Preset::Desk)?;
    let cfg = SamplerConfig {
        seed,
        k_f: 2000,
        ..s.sampler.clone()
    };
    let p = plan(
        &s.initial_surface,
        &s.objective,
        &s.constraint,
        &cfg,
        &s.nominal_params,
    )?;

    let before = mse(&s.initial_surface, &s.objective)?;
    let after = mse(&p.final_state, &s.objective)?;
    let (bad, _) = violation(&p.final_state, &s.constraint, cfg.violation_tolerance)?;
    println!("{} cuts over {} runs", p.actions.len(), p.runs);
    println!(
        "mse {before:.3e} -> {after:.3e} ({:.2}% of initial), {bad} violating points",
        100.0 * after / before
    );
    println!(
        "best cost per run: {:?}",
        p.run_costs
            .iter()
            .map(|c| format!("{c:.3e}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
