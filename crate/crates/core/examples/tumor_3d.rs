//! Volumetric tumor removal above a vessel on a 30×30 grid.
//!
//! Takes a minute or so at the default node budget.

use ablation_planner::feedback::{run_feedforward, Boundaries, PlantSpec};
use ablation_planner::graph::plan;
use ablation_planner::scenario::{builtin, Preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = builtin("tumor-3d", Preset::Desk)?;
    let start = std::time::Instant::now();
    let p = plan(
        &s.initial_surface,
        &s.objective,
        &s.constraint,
        &s.sampler,
        &s.nominal_params,
    )?;
    let bounds = Boundaries {
        objective: &s.objective,
        constraint: &s.constraint,
    };
    let run = run_feedforward(
        &p.actions,
        &PlantSpec::exact(s.nominal_params),
        &s.initial_surface,
        bounds,
    )?;
    let m = run.metrics;
    println!(
        "{} cuts in {:.1} s",
        p.actions.len(),
        start.elapsed().as_secs_f64()
    );
    println!(
        "tumor removed:   {:.1}%",
        100.0 * m.removed_tumor_fraction()
    );
    println!(
        "healthy removed: {:.2}% of tumor volume",
        100.0 * m.removed_healthy_volume / m.original_tumor_volume
    );
    println!("violating points: {}", m.violation_count);
    Ok(())
}
