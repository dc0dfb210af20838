//! One Gaussian cut on a flat planar surface.
//!
//! Prints the crater profile and the depth predicted on the beam axis.

use ablation_planner::model::{point_displacement, LaserAction, TissueParams, TissueSurface};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = TissueParams::new(1.0, 0.5, 0.15, 1.0)?;
    let xs: Vec<f64> = (0..41).map(|i| -0.5 + i as f64 * 0.025).collect();
    let surface = TissueSurface::flat_line(&xs, 0.0)?;

    let cut = LaserAction::vertical(0.0, 1.2);
    let out = surface.ablate(&cut, &params);

    println!(
        "axis depth (model): {:.4}",
        point_displacement(&params, cut.power, 0.0)
    );
    println!("threshold power:    {:.4}", params.threshold_power());
    println!("{:>8} {:>10}", "x", "z");
    for p in out.surface.points() {
        println!("{:>8.3} {:>10.5}", p[0], p[2]);
    }
    Ok(())
}
