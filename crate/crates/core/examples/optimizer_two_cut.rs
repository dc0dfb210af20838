//! Recover a target made by two vertical cuts with the superposition
//! optimizer.

use ablation_planner::model::LaserAction;
use ablation_planner::scenario::{gen_two_cut, GenConfig, Preset};
use ablation_planner::superposition::{assemble, solve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = GenConfig {
        preset: Preset::Full,
        ..GenConfig::default()
    };
    let xs: Vec<f64> = (0..100).map(|i| -1.0 + 2.0 * i as f64 / 99.0).collect();
    let s = gen_two_cut(
        &cfg,
        [
            LaserAction::vertical(xs[33], 0.9),
            LaserAction::vertical(xs[61], 0.75),
        ],
    )?;

    let problem = assemble(
        &s.initial_surface,
        &s.objective,
        &s.constraint,
        &s.nominal_params,
    )?;
    let result = solve(&problem, &s.solver)?;
    println!(
        "feasible: {}  residual mse: {:.3e}  start: {}",
        result.feasible, result.residual_mse, result.start
    );
    for a in result.to_actions(&problem) {
        println!("cut at x = {:+.4}  power {:.4}", a.position[0], a.power);
    }
    Ok(())
}
