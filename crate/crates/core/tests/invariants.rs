use std::sync::Arc;

use chemotaxis_control::config::random_smooth_field;
use chemotaxis_control::cost::{evaluate_j, project_ball, CostParams};
use chemotaxis_control::energy::{EnergyForm, EnergyReport};
use chemotaxis_control::grid::integrate;
use chemotaxis_control::linalg::LinearSolver;
use chemotaxis_control::series::{uniform_times, FieldSeries};
use chemotaxis_control::sim::{comparison_gap, solve_comparison_paired};
use chemotaxis_control::{simulate_with, Control, Field, Grid, ModelParams, SimOptions};
use proptest::prelude::*;

fn grid(two_d: bool) -> Arc<Grid> {
    let g = if two_d {
        Grid::on_box(vec![8, 6], &[1.0, 0.75]).unwrap()
    } else {
        Grid::on_box(vec![20], &[1.0]).unwrap()
    };
    let mut hi = g.lengths();
    hi[0] *= 0.6;
    Arc::new(g.with_control_box(&vec![0.0; g.ndim()], &hi).unwrap())
}

fn control(g: &Arc<Grid>, amp: f64, seed: u64) -> Control {
    let times = uniform_times(0.2, 3);
    let fields = (0..times.len())
        .map(|k| random_smooth_field(g, -amp, 2.0 * amp, 3, seed + k as u64))
        .collect();
    Control::new(FieldSeries::new(g.clone(), times, fields).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mass_positivity_and_comparison(
        seed in 0u64..10_000,
        s in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]),
        amp in 0.0..4.0f64,
        two_d in any::<bool>(),
    ) {
        let g = grid(two_d);
        let u0 = random_smooth_field(&g, 0.0, 2.0, 4, seed);
        let v0 = random_smooth_field(&g, 0.05, 1.0, 4, seed + 1);
        let p = ModelParams::new(s, 0.2);
        let c = control(&g, amp, seed + 2);
        let traj = simulate_with(&u0, &v0, &c, &p, &SimOptions::new(0.01)).unwrap();
        let m0 = integrate(&u0);
        for st in &traj.states {
            prop_assert!(st.u.min() >= 0.0 && st.v.min() >= 0.0);
            prop_assert!((integrate(&st.u) - m0).abs() <= 1e-10 * m0);
        }
        let cmp = solve_comparison_paired(&traj, LinearSolver::Auto).unwrap();
        prop_assert!(comparison_gap(&traj, &cmp).unwrap() <= 1e-10);
    }

    #[test]
    fn audit_residual_is_affine_in_k(seed in 0u64..10_000, k in -5.0..5.0f64) {
        let g = grid(false);
        let u0 = random_smooth_field(&g, 0.1, 2.0, 4, seed);
        let v0 = random_smooth_field(&g, 0.1, 1.0, 4, seed + 1);
        let p = ModelParams::new(1.0, 0.1);
        let traj = simulate_with(&u0, &v0, &control(&g, 1.0, seed), &p, &SimOptions::new(0.01)).unwrap();
        let r = EnergyReport::from_trajectory(&traj, EnergyForm::Truncated).unwrap();
        let base = r.audit(1e-3, 0.0).residual;
        prop_assert!((r.audit(1e-3, k).residual - (base - k)).abs() <= 1e-12 * (1.0 + base.abs() + k.abs()));
    }

    #[test]
    fn objective_is_nonnegative_and_zero_only_on_target(seed in 0u64..10_000, amp in 0.0..2.0f64) {
        let g = grid(false);
        let u0 = random_smooth_field(&g, 0.1, 1.0, 4, seed);
        let v0 = Field::constant(g.clone(), 1.0);
        let p = ModelParams::new(2.0, 0.2);
        let traj = simulate_with(&u0, &v0, &control(&g, amp, seed), &p, &SimOptions::new(0.02)).unwrap();
        let cp = CostParams {
            gamma_u: 1.0,
            gamma_v: 1.0,
            gamma_f: 1.0,
            q: 3.0,
            u_d: traj.u_series().unwrap(),
            v_d: traj.v_series().unwrap(),
            radius: 1.0,
        };
        let j = evaluate_j(&traj, &cp).unwrap();
        prop_assert!(j.total >= 0.0);
        prop_assert_eq!(j.j_u, 0.0);
        prop_assert_eq!(j.j_v, 0.0);
        prop_assert_eq!(j.total == 0.0, traj.control.is_zero());
        let projected = project_ball(&traj.control, 0.1, 3.0).unwrap();
        prop_assert!(projected.norm(3.0).unwrap() <= 0.1 + 1e-12);
    }
}
