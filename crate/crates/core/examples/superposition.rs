//! Vertical cuts commute; tilted cuts do not.
//!
//! Runs the same pair of cuts in both orders and reports the largest
//! coordinate difference, then checks the vertical case against the
//! closed-form superposed depth.

use ablation_planner::model::{replay, superposed_depth, LaserAction, TissueParams, TissueSurface};

fn max_gap(a: &TissueSurface, b: &TissueSurface) -> f64 {
    a.points()
        .iter()
        .zip(b.points())
        .flat_map(|(p, q)| (0..3).map(move |k| (p[k] - q[k]).abs()))
        .fold(0.0, f64::max)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = TissueParams::new(1.0, 0.5, 0.15, 1.0)?;
    let xs: Vec<f64> = (0..100).map(|i| -1.0 + 2.0 * i as f64 / 99.0).collect();
    let flat = TissueSurface::flat_line(&xs, 0.0)?;

    let v = [
        LaserAction::vertical(xs[45], 1.4),
        LaserAction::vertical(xs[52], 0.9),
    ];
    let gap = max_gap(
        &replay(&flat, &v, &params),
        &replay(&flat, &[v[1], v[0]], &params),
    );
    println!("vertical pair, order difference: {gap:.2e}");

    let mut powers = vec![0.0; xs.len()];
    powers[45] = 1.4;
    powers[52] = 0.9;
    let depth = superposed_depth(&xs, &powers, &params)?;
    let seq = replay(&flat, &v, &params);
    let worst = seq
        .points()
        .iter()
        .zip(&depth)
        .map(|(p, d)| (p[2] + d).abs())
        .fold(0.0, f64::max);
    println!("vertical pair vs superposed depth: {worst:.2e}");

    let t = [
        LaserAction::planar(0.0, 0.0, 5.0),
        LaserAction::planar(-0.25, 0.3491, 5.0),
    ];
    let gap = max_gap(
        &replay(&flat, &t, &params),
        &replay(&flat, &[t[1], t[0]], &params),
    );
    println!("vertical + tilted pair, order difference: {gap:.3}");
    Ok(())
}
