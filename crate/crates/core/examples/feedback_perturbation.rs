//! Feedforward against receding-horizon execution on a plant that cuts 5%
//! deeper than the model (β and φ lowered by 5%).

use ablation_planner::cli::{feedback_run, plan_actions};
use ablation_planner::feedback::{run_feedforward, Boundaries, StopRule};
use ablation_planner::io::Algorithm;
use ablation_planner::scenario::{builtin, Preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut s = builtin("two-cut", Preset::Desk)?;
    s.perturbation = -0.05;
    s.sampler.k_f = 2000;
    let plant = s.plant()?;
    let bounds = Boundaries {
        objective: &s.objective,
        constraint: &s.constraint,
    };
    println!(
        "{:<6} {:<12} {:>10} {:>10} {:>5}",
        "planner", "mode", "mse", "violation", "cuts"
    );
    for algorithm in [Algorithm::Nlopt, Algorithm::Graph] {
        let ff = run_feedforward(
            &plan_actions(&s, algorithm)?,
            &plant,
            &s.initial_surface,
            bounds,
        )?;
        let fb = feedback_run(&s, algorithm, StopRule::default())?;
        for r in [&ff, &fb] {
            println!(
                "{:<6} {:<12} {:>10.3e} {:>10.3} {:>5}",
                algorithm.name(),
                format!("{:?}", r.mode),
                r.mse(),
                r.violation_fraction(),
                r.cuts_executed
            );
        }
    }
    Ok(())
}
