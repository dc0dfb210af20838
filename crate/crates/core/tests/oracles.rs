//! Independent reference computations checked against the library.

use ablation_planner::boundary::BoundaryField;
use ablation_planner::metrics::{mse, volume_metrics};
use ablation_planner::model::{apply_ablation, LaserAction, Layout, TissueParams, TissueSurface};
use ablation_planner::scenario::{gen_tumor_3d, GenConfig, Preset, TumorSpec};
use ablation_planner::superposition::assemble;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Composite trapezoid rule of `f` over `[lo, hi]`.
fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
    h * (0.5 * (f(lo) + f(hi)) + inner)
}

fn lerp(xs: &[f64], zs: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    zs[k - 1] + t * (zs[k] - zs[k - 1])
}

#[test]
fn single_cut_matches_closed_form() {
    let p = TissueParams::new(1.3, 0.4, 0.2, 0.7).unwrap();
    let xs = linspace(-1.0, 1.0, 41);
    let s = TissueSurface::flat_line(&xs, 0.0).unwrap();
    let out = apply_ablation(&s, &LaserAction::vertical(0.1, 2.0), &p);
    for (q, x) in out.surface.points().iter().zip(&xs) {
        let g = 2.0 * 0.7 * (-2.0 * (x - 0.1f64).powi(2) / 0.04).exp();
        let expected = -((g - 0.4).max(0.0) / 1.3);
        assert!(
            (q[2] - expected).abs() < 1e-14,
            "x={x}: {} vs {expected}",
            q[2]
        );
    }
}

#[test]
fn superposition_matrix_matches_kernel() {
    let p = TissueParams::new(1.0, 0.5, 0.15, 0.8).unwrap();
    let xs = linspace(-1.0, 1.0, 17);
    let s = TissueSurface::flat_line(&xs, 0.0).unwrap();
    let obj = BoundaryField::line(xs.clone(), vec![-0.2; 17]).unwrap();
    let con = BoundaryField::line(xs.clone(), vec![-0.5; 17]).unwrap();
    let problem = assemble(&s, &obj, &con, &p).unwrap();
    for i in 0..17 {
        for j in 0..17 {
            let k = 0.8 * (-2.0 * (xs[i] - xs[j]).powi(2) / 0.0225).exp();
            assert!((problem.p(i, j) - k).abs() < 1e-15);
        }
    }
}

#[test]
fn mse_matches_brute_force_loop() {
    let xs = linspace(-1.0, 1.0, 73);
    let pts: Vec<[f64; 3]> = xs
        .iter()
        .map(|&x| [x * 0.97, 0.0, (3.0 * x).sin() * 0.2])
        .collect();
    let s = TissueSurface::new(Layout::Line, pts.clone()).unwrap();
    let knots = linspace(-1.0, 1.0, 11);
    let heights: Vec<f64> = knots.iter().map(|&x| -0.3 * x * x).collect();
    let obj = BoundaryField::line(knots.clone(), heights.clone()).unwrap();
    let mut sum = 0.0;
    for q in &pts {
        let d = q[2] - lerp(&knots, &heights, q[0]);
        sum += d * d;
    }
    let expected = sum / pts.len() as f64;
    assert!((mse(&s, &obj).unwrap() - expected).abs() <= 1e-15 * expected.max(1.0));
}

#[test]
fn prismatic_volumes_match_fine_quadrature() {
    let target = |x: f64| -0.35 * (-x * x / 0.08).exp();
    let cut = |x: f64| -0.3 * (-(x - 0.1).powi(2) / 0.05).exp();
    let xs = linspace(-1.0, 1.0, 100);
    let initial = TissueSurface::flat_line(&xs, 0.0).unwrap();
    let fin =
        TissueSurface::new(Layout::Line, xs.iter().map(|&x| [x, 0.0, cut(x)]).collect()).unwrap();
    let obj = BoundaryField::from_fn(xs.clone(), None, |x, _| target(x)).unwrap();
    let v = volume_metrics(&initial, &fin, &obj).unwrap();

    let n = 200_000;
    let original = trapezoid(|x| (0.0 - target(x)).max(0.0), -1.0, 1.0, n);
    let remaining = trapezoid(|x| (cut(x) - target(x)).max(0.0), -1.0, 1.0, n);
    let healthy = trapezoid(|x| (target(x) - cut(x)).max(0.0), -1.0, 1.0, n);
    for (name, got, want) in [
        ("original", v.original_tumor_volume, original),
        ("remaining", v.remaining_tumor_volume, remaining),
        ("healthy", v.removed_healthy_volume, healthy),
    ] {
        assert!(want > 1e-3, "{name} oracle too small to compare");
        assert!((got - want).abs() <= 0.01 * want, "{name}: {got} vs {want}");
    }
}

#[test]
fn gaussian_tumor_volume_matches_analytic() {
    let spec = TumorSpec {
        vessel: None,
        ..TumorSpec::default()
    };
    let cfg = GenConfig {
        preset: Preset::Full,
        ..GenConfig::default()
    };
    let s = gen_tumor_3d(&cfg, &spec).unwrap();
    assert_eq!(s.initial_surface.len(), 100 * 100);
    let v = volume_metrics(&s.initial_surface, &s.initial_surface, &s.objective).unwrap();
    let want = spec.analytic_volume();
    assert!(
        (v.original_tumor_volume - want).abs() <= 0.02 * want,
        "{} vs {want}",
        v.original_tumor_volume
    );
    assert!((v.remaining_tumor_volume - v.original_tumor_volume).abs() < 1e-15);
    assert_eq!(v.removed_healthy_volume, 0.0);
}
