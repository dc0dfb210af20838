use ablation_planner::boundary::BoundaryField;
use ablation_planner::graph::{plan, SamplerConfig};
use ablation_planner::io::{parse_surface_csv, surface_csv, Algorithm, PlanFile};
use ablation_planner::metrics::{modified_cost, mse, violation};
use ablation_planner::model::{
    apply_ablation, point_displacement, replay, superposed_depth, LaserAction, Layout,
    TissueParams, TissueSurface,
};
use ablation_planner::scenario::{builtin, Preset, Scenario};
use ablation_planner::superposition::assemble;
use proptest::prelude::*;
use std::path::Path;

fn params() -> impl Strategy<Value = TissueParams> {
    (0.2..3.0f64, 0.0..2.0f64, 0.05..0.5f64, 0.2..2.0f64)
        .prop_map(|(beta, phi, w, dt)| TissueParams { beta, phi, w, dt })
}

fn grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect()
}

/// Planar surface over a uniform grid with random heights.
fn surface(n: std::ops::Range<usize>) -> impl Strategy<Value = TissueSurface> {
    n.prop_flat_map(|n| prop::collection::vec(-0.5..0.5f64, n))
        .prop_map(|zs| {
            let xs = grid(zs.len());
            TissueSurface::new(
                Layout::Line,
                xs.iter().zip(&zs).map(|(&x, &z)| [x, 0.0, z]).collect(),
            )
            .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn displacement_bounded(p in params(), e in 0.0..10.0f64, d in 0.0..2.0f64) {
        let dp = point_displacement(&p, e, d);
        prop_assert!(dp >= 0.0);
        prop_assert!(dp <= (p.axial_energy(e) - p.phi).max(0.0) / p.beta + 1e-15);
    }

    #[test]
    fn displacement_monotone_in_power(p in params(), e1 in 0.0..10.0f64, extra in 0.0..5.0f64, d in 0.0..2.0f64) {
        prop_assert!(point_displacement(&p, e1, d) <= point_displacement(&p, e1 + extra, d));
    }

    #[test]
    fn displacement_decays_radially(p in params(), e in 0.0..10.0f64, d1 in 0.0..2.0f64, extra in 0.0..1.0f64) {
        prop_assert!(point_displacement(&p, e, d1 + extra) <= point_displacement(&p, e, d1));
    }

    #[test]
    fn points_only_move_down_the_axis(
        s in surface(5..40), p in params(), x in -1.0..1.0f64, theta in -0.7..0.7f64, e in 0.0..5.0f64,
    ) {
        let a = LaserAction::planar(x, theta, e);
        let out = apply_ablation(&s, &a, &p);
        let dir = a.axis().direction;
        for ((before, after), dp) in s.points().iter().zip(out.surface.points()).zip(&out.displacement) {
            prop_assert!(*dp >= 0.0);
            for k in 0..3 {
                prop_assert!((after[k] - (before[k] + dp * dir[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vertical_cuts_commute_and_superpose(
        s in surface(8..40),
        p in params(),
        cuts in prop::collection::vec((0usize..1000, 0.0..4.0f64), 1..12),
        rot in 0usize..12,
    ) {
        let n = s.len();
        let mut powers = vec![0.0; n];
        for (k, e) in &cuts {
            powers[k % n] = *e;
        }
        let actions: Vec<LaserAction> = (0..n)
            .filter(|&i| powers[i] > 0.0)
            .map(|i| LaserAction::vertical(s.points()[i][0], powers[i]))
            .collect();
        let mut rotated = actions.clone();
        rotated.rotate_left(rot % actions.len().max(1));
        rotated.reverse();
        let a = replay(&s, &actions, &p);
        let b = replay(&s, &rotated, &p);
        let xs: Vec<f64> = s.points().iter().map(|q| q[0]).collect();
        let depth = superposed_depth(&xs, &powers, &p).unwrap();
        for ((qa, qb), (q0, d)) in a.points().iter().zip(b.points()).zip(s.points().iter().zip(&depth)) {
            prop_assert!((qa[2] - qb[2]).abs() <= 1e-9);
            prop_assert!((qa[2] - (q0[2] - d)).abs() <= 1e-9);
        }
    }

    #[test]
    fn forward_is_monotone(p in params(), base in prop::collection::vec(0.0..3.0f64, 20), bump in prop::collection::vec(0.0..1.0f64, 20)) {
        let xs = grid(20);
        let s = TissueSurface::flat_line(&xs, 0.0).unwrap();
        let obj = BoundaryField::line(xs.clone(), vec![-0.5; 20]).unwrap();
        let con = BoundaryField::line(xs, vec![-1.0; 20]).unwrap();
        let problem = assemble(&s, &obj, &con, &p).unwrap();
        let more: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let d0 = problem.forward(&base).unwrap();
        let d1 = problem.forward(&more).unwrap();
        for (a, b) in d0.iter().zip(&d1) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn violation_ignores_changes_above_constraint(s in surface(5..40), lift in prop::collection::vec(0.0..1.0f64, 40)) {
        let xs: Vec<f64> = s.points().iter().map(|q| q[0]).collect();
        let con = BoundaryField::line(xs, vec![0.0; s.len()]).unwrap();
        let moved = TissueSurface::new(
            Layout::Line,
            s.points().iter().zip(&lift).map(|(q, l)| if q[2] > 0.0 { [q[0], q[1], q[2] + l] } else { *q }).collect(),
        ).unwrap();
        prop_assert_eq!(violation(&s, &con, 1e-9).unwrap(), violation(&moved, &con, 1e-9).unwrap());
    }

    #[test]
    fn unit_lambda_cost_is_sum_of_squares(s in surface(3..60), target in prop::collection::vec(-0.5..0.5f64, 60)) {
        let xs: Vec<f64> = s.points().iter().map(|q| q[0]).collect();
        let obj = BoundaryField::line(xs, target[..s.len()].to_vec()).unwrap();
        let c = modified_cost(&s, &obj, 1.0).unwrap().modified_cost;
        let m = mse(&s, &obj).unwrap();
        prop_assert!((c - m * s.len() as f64).abs() <= 1e-12 * c.max(1.0));
    }

    #[test]
    fn closing_an_undercut_never_raises_cost(s in surface(3..40), k in 0usize..40, frac in 0.0..1.0f64, lambda in 1.0..10.0f64) {
        let xs: Vec<f64> = s.points().iter().map(|q| q[0]).collect();
        let obj = BoundaryField::line(xs, vec![-0.6; s.len()]).unwrap();
        let k = k % s.len();
        let mut pts = s.points().to_vec();
        // every point starts above -0.6, so it is undercut
        pts[k][2] -= frac * (pts[k][2] + 0.6);
        let moved = TissueSurface::new(Layout::Line, pts).unwrap();
        prop_assert!(
            modified_cost(&moved, &obj, lambda).unwrap().modified_cost
                <= modified_cost(&s, &obj, lambda).unwrap().modified_cost
        );
    }

    #[test]
    fn surface_csv_round_trips(s in surface(2..60)) {
        let back = parse_surface_csv(Path::new("p.csv"), &surface_csv(&s), Layout::Line).unwrap();
        prop_assert_eq!(back, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scenario_and_plan_round_trip(
        name in prop::sample::select(vec!["square-well", "sawtooth", "two-cut", "tumor-3d"]),
        seed in any::<u64>(),
        perturbation in -0.5..0.5f64,
        cuts in prop::collection::vec((-0.5..0.5f64, -0.4..0.4f64, 0.0..1.5f64), 0..6),
    ) {
        let mut s = builtin(name, Preset::Desk).unwrap();
        s.seed = seed;
        s.perturbation = perturbation;
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        prop_assert_eq!(&back, &s);

        let actions: Vec<LaserAction> = cuts
            .iter()
            .map(|&(x, t, e)| if s.dimension == 3 { LaserAction::volumetric(x, -x / 2.0, t, -t, e) } else { LaserAction::planar(x, t, e) })
            .collect();
        let plan = PlanFile::build(&s, Algorithm::Graph, &actions);
        // stacked tilted cuts can push an edge point off the field
        prop_assume!(!matches!(plan, Err(ablation_planner::error::Error::OutOfDomain { .. })));
        let plan = plan.unwrap();
        let back: PlanFile = serde_json::from_str(&serde_json::to_string_pretty(&plan).unwrap()).unwrap();
        prop_assert_eq!(&back, &plan);
        prop_assert_eq!(back.actions(), actions);
    }

    #[test]
    fn graph_plan_prefixes_stay_feasible(seed in any::<u64>(), name in prop::sample::select(vec!["square-well", "sawtooth", "two-cut"])) {
        let s = builtin(name, Preset::Desk).unwrap();
        let cfg = SamplerConfig { k_f: 150, max_runs: 4, seed, ..s.sampler.clone() };
        let p = plan(&s.initial_surface, &s.objective, &s.constraint, &cfg, &s.nominal_params).unwrap();
        let mut state = s.initial_surface.clone();
        let mut cost = modified_cost(&state, &s.objective, cfg.lambda).unwrap().modified_cost;
        for (a, expected) in p.actions.iter().zip(&p.step_costs) {
            state = apply_ablation(&state, a, &s.nominal_params).surface;
            prop_assert_eq!(violation(&state, &s.constraint, cfg.violation_tolerance).unwrap().0, 0);
            cost = modified_cost(&state, &s.objective, cfg.lambda).unwrap().modified_cost;
            prop_assert_eq!(cost, *expected);
        }
        prop_assert_eq!(&state, &p.final_state);
        prop_assert!(cost <= p.run_costs[0]);
        prop_assert!(p.run_costs.windows(2).all(|w| w[1] <= w[0]));
    }
}
