//! The tracking objective
//!
//! ```text
//! J = 3 gu / (5s) int ||u - u_d||^{5s/3} + gv / 2 int ||v - v_d||^2 + gf / q int ||f||_q^q
//! ```
//!
//! and the control ball `B_q(M)`.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyForm, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{lp_norm, same_grid, Field};
use crate::series::{spacetime_lp_power, trapezoid_weights, Control, FieldSeries};
use crate::sim::{weak_residual, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    pub gamma_u: f64,
    pub gamma_v: f64,
    pub gamma_f: f64,
    pub q: f64,
    pub u_d: FieldSeries,
    pub v_d: FieldSeries,
    /// Radius `M` of the control ball.
    pub radius: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("gamma_u", self.gamma_u),
            ("gamma_v", self.gamma_v),
            ("gamma_f", self.gamma_f),
        ] {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Domain(format!("{name} must be > 0, got {g}")));
            }
        }
        if !(self.q > 2.5) || !self.q.is_finite() {
            return Err(Error::Domain(format!("q must be > 5/2, got {}", self.q)));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Domain(format!("M must be > 0, got {}", self.radius)));
        }
        if !same_grid(self.u_d.grid(), self.v_d.grid()) {
            return Err(Error::Structural(
                "desired states live on different grids".into(),
            ));
        }
        Ok(())
    }

    pub fn with_radius(&self, radius: f64) -> Self {
        CostParams {
            radius,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub j_u: f64,
    pub j_v: f64,
    pub j_f: f64,
    pub total: f64,
}

fn diff_power(a: &Field, b: &Field, p: f64) -> Result<f64> {
    let d = a.zip_map(b, |x, y| x - y)?;
    Ok(lp_norm(&d, p)?.powf(p))
}

/// Evaluates `J` on the trajectory's saved levels and the control's knots,
/// both with trapezoid weights.
pub fn evaluate_j(traj: &Trajectory, cp: &CostParams) -> Result<CostBreakdown> {
    if !same_grid(traj.grid(), cp.u_d.grid()) {
        return Err(Error::Structural(
            "desired states and trajectory live on different grids".into(),
        ));
    }
    let s = traj.params.s;
    let p = 5.0 * s / 3.0;
    let times = traj.times();
    let w = trapezoid_weights(&times);
    let mut su = 0.0;
    let mut sv = 0.0;
    for (wk, state) in w.iter().zip(&traj.states) {
        if *wk == 0.0 {
            continue;
        }
        su += wk * diff_power(&state.u, &cp.u_d.at(state.t), p)?;
        sv += wk * diff_power(&state.v, &cp.v_d.at(state.t), 2.0)?;
    }
    let j_u = 3.0 * cp.gamma_u / (5.0 * s) * su;
    let j_v = 0.5 * cp.gamma_v * sv;
    let j_f = cp.gamma_f / cp.q * spacetime_lp_power(traj.control.series(), cp.q)?;
    Ok(CostBreakdown {
        j_u,
        j_v,
        j_f,
        total: j_u + j_v + j_f,
    })
}

/// Radial projection onto `{ ||f||_q <= M }`.
pub fn project_ball(control: &Control, radius: f64, q: f64) -> Result<Control> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("M must be > 0, got {radius}")));
    }
    let norm = control.norm(q)?;
    if norm <= radius {
        return Ok(control.clone());
    }
    Ok(control.scale(radius / norm))
}

/// Neumann cosine modes `cos(pi k x / L)` with `|k|_inf <= 2`, each once
/// constant in time and once multiplied by `t / T`.
pub fn cosine_test_functions(traj: &Trajectory) -> Result<Vec<FieldSeries>> {
    let grid = traj.grid().clone();
    let d = grid.ndim();
    let l = grid.lengths();
    let t_end = traj.last().t.max(f64::MIN_POSITIVE);
    let times = traj.times();
    let mut out = Vec::new();
    let combos = 3usize.pow(d as u32);
    for c in 0..combos {
        let k: Vec<f64> = (0..d).map(|a| ((c / 3usize.pow(a as u32)) % 3) as f64).collect();
        for linear in [false, true] {
            let k = k.clone();
            let l = l.clone();
            out.push(FieldSeries::from_fn(grid.clone(), times.clone(), move |t, x| {
                let space: f64 = (0..x.len())
                    .map(|a| (std::f64::consts::PI * k[a] * x[a] / l[a]).cos())
                    .product();
                if linear {
                    space * t / t_end
                } else {
                    space
                }
            })?);
        }
    }
    Ok(out)
}

/// Default weak-residual tolerance `10 (dt + h^2) scale`, where the scale is
/// `1 + max|u| (1 + max|v|)` over the saved levels.
pub fn default_weak_tolerance(traj: &Trajectory) -> f64 {
    let dt = traj.dts().into_iter().fold(0.0, f64::max);
    let h = traj.grid().spacing().iter().copied().fold(0.0, f64::max);
    let umax = traj.states.iter().map(|s| s.u.max()).fold(0.0, f64::max);
    let vmax = traj.states.iter().map(|s| s.v.max()).fold(0.0, f64::max);
    10.0 * (dt + h * h) * (1.0 + umax * (1.0 + vmax))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub control_norm: f64,
    pub radius: f64,
    pub in_ball: bool,
    pub weak_residual: f64,
    pub weak_tolerance: f64,
    pub weak_pass: bool,
    pub beta: f64,
    pub k: f64,
    pub energy_residual: f64,
    pub energy_tolerance: f64,
    pub energy_pass: bool,
    pub pass: bool,
    /// Membership in the control-dependent energy class cannot be decided
    /// without the analytic constant; only the radius-`M` audit is performed.
    pub energy_class_e: String,
}

/// Audits `(u, v, f)` against the admissible set of radius `cp.radius`.
///
/// `k` is the energy constant `K(M)`; `weak_tol = None` uses
/// [`default_weak_tolerance`].
pub fn check_admissible(
    traj: &Trajectory,
    cp: &CostParams,
    beta: f64,
    k: f64,
    weak_tol: Option<f64>,
) -> Result<AdmissibilityReport> {
    let control_norm = traj.control.norm(cp.q)?;
    let in_ball = control_norm <= cp.radius + 1e-12;
    let mut worst = 0.0f64;
    for phi in cosine_test_functions(traj)? {
        worst = worst.max(weak_residual(traj, &phi)?);
    }
    let weak_tolerance = weak_tol.unwrap_or_else(|| default_weak_tolerance(traj));
    let weak_pass = worst <= weak_tolerance;
    let audit = EnergyReport::from_trajectory(traj, EnergyForm::Limit)?.audit(beta, k);
    let energy_pass = audit.passed();
    Ok(AdmissibilityReport {
        control_norm,
        radius: cp.radius,
        in_ball,
        weak_residual: worst,
        weak_tolerance,
        weak_pass,
        beta,
        k,
        energy_residual: audit.residual,
        energy_tolerance: audit.tolerance,
        energy_pass,
        pass: in_ball && weak_pass && energy_pass,
        energy_class_e: "diagnostic-only".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::ModelParams;
    use crate::series::uniform_times;
    use crate::sim::simulate;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::on_box(vec![n], &[1.0]).unwrap())
    }

    fn params_for(traj: &Trajectory, gammas: (f64, f64, f64)) -> CostParams {
        CostParams {
            gamma_u: gammas.0,
            gamma_v: gammas.1,
            gamma_f: gammas.2,
            q: 3.0,
            u_d: traj.u_series().unwrap(),
            v_d: traj.v_series().unwrap(),
            radius: 1.0,
        }
    }

    fn equilibrium(g: &Arc<Grid>, control: Control) -> Trajectory {
        simulate(
            &Field::zeros(g.clone()),
            &Field::constant(g.clone(), 1.0),
            &control,
            &ModelParams::new(1.0, 1.0),
            0.125,
        )
        .unwrap()
    }

    #[test]
    fn tracking_its_own_trajectory_costs_nothing() {
        let g = line(8);
        let traj = equilibrium(&g, Control::zero(g.clone(), uniform_times(1.0, 2)));
        let j = evaluate_j(&traj, &params_for(&traj, (1.0, 2.0, 3.0))).unwrap();
        assert_eq!(j, CostBreakdown::default());
    }

    #[test]
    fn only_the_control_term_remains() {
        let g = line(8);
        let lambda: f64 = 0.3;
        let traj = equilibrium(&g, Control::constant(g.clone(), uniform_times(1.0, 4), lambda));
        let cp = params_for(&traj, (1.0, 1.0, 2.5));
        let j = evaluate_j(&traj, &cp).unwrap();
        assert_eq!(j.j_u, 0.0);
        assert_eq!(j.j_v, 0.0);
        assert!((j.total - 2.5 / 3.0 * lambda.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn cubic_state_exponent_against_direct_sum() {
        let g = line(5);
        let p = ModelParams::new(3.0, 0.5);
        let u0 = Field::from_fn(g.clone(), |x| 0.5 + x[0]);
        let v0 = Field::constant(g.clone(), 1.0);
        let traj = simulate(&u0, &v0, &Control::zero(g.clone(), uniform_times(0.5, 1)), &p, 0.1)
            .unwrap();
        let times = traj.times();
        let ud = FieldSeries::constant_in_time(Field::constant(g.clone(), 0.2), times.clone()).unwrap();
        let vd = FieldSeries::constant_in_time(Field::constant(g.clone(), 1.0), times.clone()).unwrap();
        let cp = CostParams { gamma_u: 2.0, gamma_v: 1.0, gamma_f: 1.0, q: 3.0, u_d: ud, v_d: vd, radius: 1.0 };
        let j = evaluate_j(&traj, &cp).unwrap();
        let mut brute = 0.0;
        for (k, st) in traj.states.iter().enumerate() {
            let w = if k == 0 || k + 1 == traj.states.len() { 0.05 } else { 0.1 };
            for &u in st.u.values() {
                brute += w * 0.2 * (u - 0.2f64).abs().powi(5);
            }
        }
        // gamma_u / 5 = 3 gamma_u / 15
        assert!((j.j_u - 2.0 / 5.0 * brute).abs() < 1e-13 * brute.max(1.0));
    }

    #[test]
    fn projection_examples() {
        let g = line(4);
        let times = uniform_times(1.0, 2);
        let half = Control::constant(g.clone(), times.clone(), 0.5);
        assert_eq!(project_ball(&half, 1.0, 3.0).unwrap(), half);
        let double = Control::constant(g, times, 2.0);
        let p = project_ball(&double, 1.0, 3.0).unwrap();
        assert!((p.norm(3.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((p.at(0.0)[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_is_admissible() {
        let g = line(8);
        let traj = equilibrium(&g, Control::zero(g.clone(), uniform_times(1.0, 2)));
        let cp = params_for(&traj, (1.0, 1.0, 1.0));
        let rep = check_admissible(&traj, &cp, 1e-3, 0.0, None).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn control_outside_ball_is_flagged() {
        let g = line(8);
        let traj = equilibrium(&g, Control::constant(g.clone(), uniform_times(1.0, 2), 2.0));
        let cp = params_for(&traj, (1.0, 1.0, 1.0));
        let rep = check_admissible(&traj, &cp, 1e-3, 10.0, None).unwrap();
        assert!(!rep.in_ball && !rep.pass);
    }

    fn random_control(g: &Arc<Grid>, vals: &[f64]) -> Control {
        let times = uniform_times(1.0, vals.len() / g.len() - 1);
        let fields = vals
            .chunks(g.len())
            .map(|c| Field::new(g.clone(), c.to_vec()).unwrap())
            .collect();
        Control::new(FieldSeries::new(g.clone(), times, fields).unwrap())
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_bounded(
            vals in prop::collection::vec(-5.0..5.0f64, 12),
            radius in 0.1..3.0f64,
            q in 2.6..6.0f64,
        ) {
            let g = line(4);
            let c = random_control(&g, &vals);
            let p = project_ball(&c, radius, q).unwrap();
            prop_assert!(p.norm(q).unwrap() <= radius + 1e-12);
            let pp = project_ball(&p, radius, q).unwrap();
            for t in p.times() {
                let (a, b) = (p.at(*t), pp.at(*t));
                for i in 0..4 {
                    prop_assert!((a[i] - b[i]).abs() <= 1e-12 * (1.0 + a[i].abs()));
                }
            }
        }

        #[test]
        fn projection_is_nonexpansive_for_q2(
            a in prop::collection::vec(-5.0..5.0f64, 12),
            b in prop::collection::vec(-5.0..5.0f64, 12),
            radius in 0.1..3.0f64,
        ) {
            let g = line(4);
            let (ca, cb) = (random_control(&g, &a), random_control(&g, &b));
            let dist = |x: &Control, y: &Control| {
                let d = FieldSeries::new(
                    g.clone(),
                    x.times().to_vec(),
                    x.times().iter().map(|&t| x.at(t).zip_map(&y.at(t), |p, q| p - q).unwrap()).collect(),
                ).unwrap();
                crate::series::spacetime_lp_norm(&d, 2.0).unwrap()
            };
            let before = dist(&ca, &cb);
            let after = dist(&project_ball(&ca, radius, 2.0).unwrap(), &project_ball(&cb, radius, 2.0).unwrap());
            prop_assert!(after <= before + 1e-12);
        }

        #[test]
        fn j_is_monotone_in_each_weight(
            gu in 0.1..5.0f64, gv in 0.1..5.0f64, gf in 0.1..5.0f64,
            bump in 0.01..3.0f64, which in 0usize..3,
        ) {
            let g = line(6);
            let p = ModelParams::new(1.0, 0.2);
            let u0 = Field::from_fn(g.clone(), |x| 1.0 + x[0]);
            let v0 = Field::constant(g.clone(), 1.0);
            let c = Control::constant(g.clone(), uniform_times(0.2, 2), 0.4);
            let traj = simulate(&u0, &v0, &c, &p, 0.05).unwrap();
            let times = traj.times();
            let zero = FieldSeries::constant_in_time(Field::zeros(g.clone()), times).unwrap();
            let cp = CostParams { gamma_u: gu, gamma_v: gv, gamma_f: gf, q: 3.0, u_d: zero.clone(), v_d: zero, radius: 1.0 };
            let mut up = cp.clone();
            match which { 0 => up.gamma_u += bump, 1 => up.gamma_v += bump, _ => up.gamma_f += bump }
            let (a, b) = (evaluate_j(&traj, &cp).unwrap(), evaluate_j(&traj, &up).unwrap());
            prop_assert!(b.total > a.total);
            prop_assert!(a.total >= 0.0);
        }
    }
}
