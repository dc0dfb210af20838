//! Write a scenario and a plan to disk, read them back, and score the
//! replayed surface.

use ablation_planner::cli::plan_actions;
use ablation_planner::io::{
    load_plan, load_scenario, save_scenario, write_json, write_surface_csv, Algorithm, PlanFile,
};
use ablation_planner::metrics::MetricsReport;
use ablation_planner::model::replay;
use ablation_planner::scenario::{builtin, Preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("ablation-example");
    std::fs::create_dir_all(&dir)?;

    let s = builtin("sawtooth", Preset::Desk)?;
    save_scenario(&dir.join("scenario.json"), &s)?;
    let s = load_scenario(&dir.join("scenario.json"))?;

    let plan = PlanFile::build(&s, Algorithm::Nlopt, &plan_actions(&s, Algorithm::Nlopt)?)?;
    write_json(&dir.join("plan.json"), &plan)?;
    let plan = load_plan(&dir.join("plan.json"))?;
    plan.validate(&s)?;

    let fin = replay(&s.initial_surface, &plan.actions(), &s.nominal_params);
    write_surface_csv(&dir.join("final.csv"), &fin)?;
    let m = MetricsReport::compute(
        &s.initial_surface,
        &fin,
        &s.objective,
        &s.constraint,
        s.sampler.violation_tolerance,
    )?;
    println!("wrote {}", dir.display());
    println!(
        "{} cuts, predicted mse {:.3e}, replayed mse {:.3e}",
        plan.steps.len(),
        plan.predicted_final_mse,
        m.mse
    );
    Ok(())
}
