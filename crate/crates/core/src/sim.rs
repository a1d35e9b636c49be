//! Time integration of the truncated controlled system and of the linear
//! comparison problem `w_t - Lap w = f^+ w`.
//!
//! One step is backward Euler with the chemical solved first:
//!
//! ```text
//! (I - dt Lap + dt T(u^n)^s - dt f 1_c) v^{n+1} = v^n
//! (I - dt Lap) u^{n+1} = u^n - dt div(T(u^n) grad v^{n+1})
//! ```
//!
//! The chemotaxis flux is explicit and upwinded, so positivity of `u` needs a
//! CFL-type bound on `dt`; positivity of `v` needs `dt max f^+ < 1`. Both are
//! checked and reported as [`Error::StepSize`], never repaired by clipping.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, chemotaxis_face_flux, Field, Grid};
use crate::linalg::{LinearSolver, StencilMatrix};
use crate::model::{truncate_field, truncate_unchecked, ModelParams};
use crate::series::{Control, FieldSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub t: f64,
}

impl State {
    pub fn new(u: Field, v: Field, t: f64) -> Result<Self> {
        check_same_grid(&u, &v)?;
        check_nonnegative("u", &u)?;
        check_nonnegative("v", &v)?;
        Ok(State { u, v, t })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }
}

fn check_nonnegative(quantity: &'static str, f: &Field) -> Result<()> {
    match f.values().iter().position(|&x| x < 0.0) {
        Some(cell) => Err(Error::Positivity {
            quantity,
            cell,
            value: f[cell],
        }),
        None => Ok(()),
    }
}

/// Stepping controls for [`simulate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt_max: f64,
    /// Keep every `save_every`-th accepted step (the final state is always kept).
    #[serde(default = "default_save_every")]
    pub save_every: usize,
    #[serde(default)]
    pub solver: LinearSolver,
    /// Clean steps before the step size is doubled again.
    #[serde(default = "default_redouble")]
    pub redouble_after: usize,
}

fn default_save_every() -> usize {
    1
}

fn default_redouble() -> usize {
    10
}

impl SimOptions {
    pub fn new(dt_max: f64) -> Self {
        SimOptions {
            dt_max,
            save_every: 1,
            solver: LinearSolver::Auto,
            redouble_after: 10,
        }
    }

    pub fn save_every(mut self, k: usize) -> Self {
        self.save_every = k.max(1);
        self
    }

    pub fn solver(mut self, solver: LinearSolver) -> Self {
        self.solver = solver;
        self
    }
}

/// Output of [`simulate`]: saved states plus the full step history.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub control: Control,
    pub params: ModelParams,
    /// Every accepted step time, starting at 0.
    pub step_times: Vec<f64>,
    /// Number of steps rejected for violating a step-size condition.
    pub rejected_steps: usize,
    /// Messages of the rejected steps, in order.
    pub violations: Vec<String>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.states[0].grid()
    }

    pub fn dts(&self) -> Vec<f64> {
        self.step_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn u_series(&self) -> Result<FieldSeries> {
        self.series_of(|s| s.u.clone())
    }

    pub fn v_series(&self) -> Result<FieldSeries> {
        self.series_of(|s| s.v.clone())
    }

    fn series_of(&self, f: impl Fn(&State) -> Field) -> Result<FieldSeries> {
        FieldSeries::new(
            self.grid().clone(),
            self.times(),
            self.states.iter().map(f).collect(),
        )
    }
}

/// Chemotaxis transport split into per-cell outflow and inflow rates.
struct TransportRates {
    outflow: Vec<f64>,
    inflow: Vec<f64>,
}

fn transport_rates(u_trunc: &[f64], v: &[f64], grid: &Grid) -> TransportRates {
    let n = grid.len();
    let mut outflow = vec![0.0; n];
    let mut inflow = vec![0.0; n];
    for face in grid.faces() {
        let h = grid.spacing()[face.axis];
        let q = chemotaxis_face_flux(u_trunc, v, face, h) / h;
        if q > 0.0 {
            outflow[face.lo] += q;
            inflow[face.hi] += q;
        } else if q < 0.0 {
            outflow[face.hi] -= q;
            inflow[face.lo] -= q;
        }
    }
    TransportRates { outflow, inflow }
}

fn max_positive_control(f: &Field) -> (f64, usize) {
    let mask = f.grid().control_mask();
    f.values()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask[*i])
        .fold((0.0, 0), |(m, c), (i, &x)| if x > m { (x, i) } else { (m, c) })
}

fn check_reaction_dt(f: &Field, dt: f64) -> Result<()> {
    let (fmax, cell) = max_positive_control(f);
    if dt * fmax >= 1.0 {
        return Err(Error::StepSize {
            reason: format!("dt * f+ = {:e} >= 1 at cell {cell}", dt * fmax),
            admissible_dt: 1.0 / fmax,
        });
    }
    Ok(())
}

/// One step with the default linear solver.
pub fn step(state: &State, control_slice: &Field, params: &ModelParams, dt: f64) -> Result<State> {
    step_with(state, control_slice, params, dt, LinearSolver::Auto)
}

pub fn step_with(
    state: &State,
    control_slice: &Field,
    params: &ModelParams,
    dt: f64,
    solver: LinearSolver,
) -> Result<State> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    check_same_grid(&state.u, control_slice)?;
    check_reaction_dt(control_slice, dt)?;
    let grid = state.grid().clone();
    let mask = grid.control_mask();

    let tu = truncate_field(&state.u, params.m)?;
    let extra: Vec<f64> = tu
        .values()
        .iter()
        .zip(control_slice.values())
        .zip(mask)
        .map(|((&t, &f), &on)| {
            let consumption = if t > 0.0 { t.powf(params.s) } else { 0.0 };
            let control = if on { f } else { 0.0 };
            dt * (consumption - control)
        })
        .collect();
    let a_v = StencilMatrix::implicit_diffusion(grid.clone(), dt, Some(&extra));
    let v_new = solver.solve(&a_v, state.v.values())?;
    let v_new = Field::new(grid.clone(), v_new)?;
    check_nonnegative("v", &v_new)?;

    let rates = transport_rates(tu.values(), v_new.values(), &grid);
    let mut rhs = Vec::with_capacity(grid.len());
    let mut worst: Option<(usize, f64)> = None;
    for i in 0..grid.len() {
        let kept = state.u[i] - dt * rates.outflow[i];
        if kept < 0.0 {
            let admissible = state.u[i] / rates.outflow[i];
            if worst.map_or(true, |(_, a)| admissible < a) {
                worst = Some((i, admissible));
            }
        }
        rhs.push(kept + dt * rates.inflow[i]);
    }
    if let Some((cell, admissible_dt)) = worst {
        return Err(Error::StepSize {
            reason: format!(
                "chemotactic outflow {:e} exceeds the density {:e} at cell {cell}",
                dt * rates.outflow[cell],
                state.u[cell]
            ),
            admissible_dt,
        });
    }
    let a_u = StencilMatrix::implicit_diffusion(grid.clone(), dt, None);
    let u_new = Field::new(grid, solver.solve(&a_u, &rhs)?)?;
    check_nonnegative("u", &u_new)?;

    Ok(State {
        u: u_new,
        v: v_new,
        t: state.t + dt,
    })
}

/// Adaptive driver shared by the coupled and comparison solvers: halves dt on
/// a step-size error, doubles it again after `redouble_after` clean steps.
fn adaptive_run<S: Clone>(
    initial: S,
    t_final: f64,
    opts: &SimOptions,
    mut advance: impl FnMut(&S, f64, f64) -> Result<S>,
    mut on_accept: impl FnMut(&S, f64, bool),
) -> Result<(Vec<f64>, usize, Vec<String>)> {
    if !(opts.dt_max > 0.0) {
        return Err(Error::Domain(format!(
            "dt_max must be positive, got {}",
            opts.dt_max
        )));
    }
    let save_every = opts.save_every.max(1);
    let mut step_times = vec![0.0];
    let mut violations = Vec::new();
    let mut rejected = 0;
    let mut current = initial;
    let mut t = 0.0;
    let mut dt = opts.dt_max;
    let mut clean = 0;
    let mut accepted = 0usize;
    let floor = 1e-12 * t_final;
    while t < t_final {
        let mut h = dt.min(t_final - t);
        if t_final - (t + h) < 1e-12 * t_final {
            h = t_final - t;
        }
        match advance(&current, t, h) {
            Ok(next) => {
                t = if h == t_final - t { t_final } else { t + h };
                current = next;
                accepted += 1;
                step_times.push(t);
                let last = t >= t_final;
                on_accept(&current, t, last || accepted % save_every == 0);
                clean += 1;
                if clean >= opts.redouble_after && dt < opts.dt_max {
                    dt = (2.0 * dt).min(opts.dt_max);
                    clean = 0;
                }
            }
            Err(Error::StepSize { reason, .. }) => {
                rejected += 1;
                clean = 0;
                dt = 0.5 * h;
                if dt < floor {
                    return Err(Error::Stiffness { t, dt, reason });
                }
                violations.push(format!("t = {t:e}, dt = {h:e}: {reason}"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((step_times, rejected, violations))
}

/// Runs the truncated controlled system from `(u0, v0)` up to `T_final`.
pub fn simulate(
    u0: &Field,
    v0: &Field,
    control: &Control,
    params: &ModelParams,
    dt_max: f64,
) -> Result<Trajectory> {
    simulate_with(u0, v0, control, params, &SimOptions::new(dt_max))
}

pub fn simulate_with(
    u0: &Field,
    v0: &Field,
    control: &Control,
    params: &ModelParams,
    opts: &SimOptions,
) -> Result<Trajectory> {
    params.validate()?;
    control.check_grid(u0)?;
    let initial = State::new(u0.clone(), v0.clone(), 0.0)?;
    let mut states = vec![initial.clone()];
    let (step_times, rejected_steps, violations) = adaptive_run(
        initial,
        params.t_final,
        opts,
        |s, t, h| {
            let f = control.at(t + h);
            let mut next = step_with(s, &f, params, h, opts.solver)?;
            next.t = t + h;
            Ok(next)
        },
        |s, t, save| {
            if save {
                let mut s = s.clone();
                s.t = t;
                states.push(s);
            }
        },
    )?;
    Ok(Trajectory {
        states,
        control: control.clone(),
        params: *params,
        step_times,
        rejected_steps,
        violations,
    })
}

/// Saved levels of the comparison solution `w`.
#[derive(Debug, Clone)]
pub struct ComparisonTrajectory {
    pub times: Vec<f64>,
    pub w: Vec<Field>,
    pub step_times: Vec<f64>,
}

fn comparison_step(w: &Field, f: &Field, dt: f64, solver: LinearSolver) -> Result<Field> {
    check_reaction_dt(f, dt)?;
    let mask = f.grid().control_mask();
    let extra: Vec<f64> = f
        .values()
        .iter()
        .zip(mask)
        .map(|(&x, &on)| if on { -dt * x.max(0.0) } else { 0.0 })
        .collect();
    let a = StencilMatrix::implicit_diffusion(w.grid().clone(), dt, Some(&extra));
    let next = Field::new(w.grid().clone(), solver.solve(&a, w.values())?)?;
    check_nonnegative("w", &next)?;
    Ok(next)
}

/// Solves `w_t - Lap w = f^+ w` with its own adaptive steps.
pub fn solve_comparison(
    w0: &Field,
    control: &Control,
    params: &ModelParams,
    dt_max: f64,
) -> Result<ComparisonTrajectory> {
    solve_comparison_with(w0, control, params, &SimOptions::new(dt_max))
}

pub fn solve_comparison_with(
    w0: &Field,
    control: &Control,
    params: &ModelParams,
    opts: &SimOptions,
) -> Result<ComparisonTrajectory> {
    params.validate()?;
    control.check_grid(w0)?;
    check_nonnegative("w", w0)?;
    let mut times = vec![0.0];
    let mut w = vec![w0.clone()];
    let (step_times, _, _) = adaptive_run(
        w0.clone(),
        params.t_final,
        opts,
        |s, t, h| comparison_step(s, &control.at(t + h), h, opts.solver),
        |s, t, save| {
            if save {
                times.push(t);
                w.push(s.clone());
            }
        },
    )?;
    Ok(ComparisonTrajectory {
        times,
        w,
        step_times,
    })
}

/// Replays the step sequence of `traj` for the comparison problem with
/// `w0 = v0`, saving `w` at exactly the saved levels of `traj`.
pub fn solve_comparison_paired(traj: &Trajectory, solver: LinearSolver) -> Result<ComparisonTrajectory> {
    let saved = traj.times();
    let mut w = traj.states[0].v.clone();
    let mut out_w = vec![w.clone()];
    let mut out_t = vec![0.0];
    let mut next_save = 1;
    for pair in traj.step_times.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        w = comparison_step(&w, &traj.control.at(t1), t1 - t0, solver)?;
        if next_save < saved.len() && saved[next_save] == t1 {
            out_w.push(w.clone());
            out_t.push(t1);
            next_save += 1;
        }
    }
    Ok(ComparisonTrajectory {
        times: out_t,
        w: out_w,
        step_times: traj.step_times.clone(),
    })
}

/// Largest `v - w` over all saved levels and cells.
pub fn comparison_gap(traj: &Trajectory, cmp: &ComparisonTrajectory) -> Result<f64> {
    if traj.states.len() != cmp.w.len() {
        return Err(Error::Structural(format!(
            "{} saved states against {} comparison levels",
            traj.states.len(),
            cmp.w.len()
        )));
    }
    let mut gap = f64::NEG_INFINITY;
    for (s, w) in traj.states.iter().zip(&cmp.w) {
        for (v, w) in s.v.values().iter().zip(w.values()) {
            gap = gap.max(v - w);
        }
    }
    Ok(gap)
}

/// Discrete space-time residual of the weak form of the `u` equation,
///
/// ```text
/// <u_t, phi> + <grad u, grad phi> - <T(u) grad v, grad phi>
/// ```
///
/// with the trapezoid rule between saved levels, normalized by the discrete
/// `L^2(0,T;H^1)` norm of the test function.
pub fn weak_residual(traj: &Trajectory, test_function: &FieldSeries) -> Result<f64> {
    let grid = traj.grid().clone();
    let vol = grid.cell_volume();
    let m = traj.params.m;
    let mut residual = 0.0;
    let mut norm_sq = 0.0;
    for pair in traj.states.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dt = b.t - a.t;
        let phi_a = test_function.at(a.t);
        let phi_b = test_function.at(b.t);
        check_same_grid(&phi_a, &a.u)?;
        let avg = |x: &Field, y: &Field| -> Vec<f64> {
            x.values()
                .iter()
                .zip(y.values())
                .map(|(p, q)| 0.5 * (p + q))
                .collect()
        };
        let phi = avg(&phi_a, &phi_b);
        let u = avg(&a.u, &b.u);
        let v = avg(&a.v, &b.v);
        let tu: Vec<f64> = u.iter().map(|&x| truncate_unchecked(x.max(0.0), m)).collect();

        let mut time_term = 0.0;
        let mut phi_l2 = 0.0;
        for i in 0..grid.len() {
            time_term += (b.u[i] - a.u[i]) * phi[i];
            phi_l2 += phi[i] * phi[i];
        }
        let mut diffusion = 0.0;
        let mut transport = 0.0;
        let mut phi_h1 = 0.0;
        for face in grid.faces() {
            let h = grid.spacing()[face.axis];
            let dphi = (phi[face.hi] - phi[face.lo]) / h;
            let du = (u[face.hi] - u[face.lo]) / h;
            diffusion += du * dphi;
            transport += chemotaxis_face_flux(&tu, &v, face, h) * dphi;
            phi_h1 += dphi * dphi;
        }
        residual += vol * (time_term + dt * (diffusion - transport));
        norm_sq += dt * vol * (phi_l2 + phi_h1);
    }
    if norm_sq == 0.0 {
        return Ok(0.0);
    }
    Ok(residual.abs() / norm_sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use crate::series::uniform_times;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::on_box(vec![n], &[1.0]).unwrap())
    }

    #[test]
    fn empty_constant_state_is_an_equilibrium() {
        let g = line(12);
        let s = State::new(Field::zeros(g.clone()), Field::constant(g.clone(), 0.7), 0.0).unwrap();
        let next = step(&s, &Field::zeros(g), &ModelParams::new(1.0, 1.0), 0.1).unwrap();
        assert!(next.u.values().iter().all(|&x| x == 0.0));
        assert!(next.v.values().iter().all(|&x| (x - 0.7).abs() < 1e-15));
        assert_eq!(next.t, 0.1);
    }

    #[test]
    fn backward_euler_growth_factor() {
        let g = line(6);
        let s = State::new(Field::zeros(g.clone()), Field::constant(g.clone(), 1.0), 0.0).unwrap();
        let (lambda, dt) = (2.0, 0.05);
        let next = step(&s, &Field::constant(g, lambda), &ModelParams::new(2.0, 1.0), dt).unwrap();
        let expected = 1.0 / (1.0 - dt * lambda);
        assert!(next.v.values().iter().all(|&x| (x - expected).abs() < 1e-14));
    }

    #[test]
    fn zero_chemical_freezes_everything() {
        let g = line(10);
        let s = State::new(Field::constant(g.clone(), 1.5), Field::zeros(g.clone()), 0.0).unwrap();
        let f = Field::from_fn(g, |x| 3.0 * x[0] - 1.0);
        let next = step(&s, &f, &ModelParams::new(1.0, 1.0), 0.1).unwrap();
        assert!(next.v.values().iter().all(|&x| x == 0.0));
        assert!(next.u.values().iter().all(|&x| (x - 1.5).abs() < 1e-14));
    }

    #[test]
    fn reaction_condition_is_enforced() {
        let g = line(4);
        let s = State::new(Field::zeros(g.clone()), Field::constant(g.clone(), 1.0), 0.0).unwrap();
        let err = step(&s, &Field::constant(g, 10.0), &ModelParams::new(1.0, 1.0), 0.2).unwrap_err();
        match err {
            Error::StepSize { admissible_dt, .. } => assert!((admissible_dt - 0.1).abs() < 1e-15),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn cfl_violation_reports_admissible_dt() {
        let g = line(8);
        let u = Field::from_fn(g.clone(), |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
        let v = Field::from_fn(g.clone(), |x| 50.0 * x[0] * x[0]);
        let s = State::new(u, v, 0.0).unwrap();
        let err = step(&s, &Field::zeros(g), &ModelParams::new(1.0, 1.0), 1.0).unwrap_err();
        match err {
            Error::StepSize { admissible_dt, reason } => {
                assert!(admissible_dt < 1.0 && admissible_dt > 0.0, "{reason}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let g = line(5);
        let u0 = Field::constant(g.clone(), 1.0);
        let v0 = Field::constant(g.clone(), 2.0);
        let c = Control::zero(g, uniform_times(0.0, 1));
        let traj = simulate(&u0, &v0, &c, &ModelParams::new(1.0, 0.0), 0.1).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.step_times, vec![0.0]);
    }

    #[test]
    fn adaptive_stepping_recovers_from_large_dt_max() {
        let g = line(16);
        let u0 = Field::from_fn(g.clone(), |x| 1.0 + (6.0 * x[0]).sin().abs());
        let v0 = Field::from_fn(g.clone(), |x| 20.0 * (-(x[0] - 0.7).powi(2) / 0.01).exp());
        let c = Control::zero(g, uniform_times(0.2, 1));
        let traj = simulate(&u0, &v0, &c, &ModelParams::new(1.0, 0.2), 0.2).unwrap();
        assert!(traj.rejected_steps > 0);
        assert_eq!(traj.last().t, 0.2);
        let m0 = integrate(&u0);
        for s in &traj.states {
            assert!(((integrate(&s.u) - m0) / m0).abs() < 1e-12);
        }
    }

    #[test]
    fn weak_residual_vanishes_for_equilibrium_and_constant_test() {
        let g = line(12);
        let c = Control::zero(g.clone(), uniform_times(0.5, 1));
        let p = ModelParams::new(1.0, 0.5);
        let traj = simulate(&Field::zeros(g.clone()), &Field::constant(g.clone(), 1.0), &c, &p, 0.05)
            .unwrap();
        let phi = FieldSeries::from_fn(g.clone(), uniform_times(0.5, 4), |t, x| x[0] * (1.0 + t))
            .unwrap();
        assert!(weak_residual(&traj, &phi).unwrap() < 1e-15);

        let u0 = Field::from_fn(g.clone(), |x| 1.0 + x[0]);
        let v0 = Field::from_fn(g.clone(), |x| x[0] * x[0]);
        let traj = simulate(&u0, &v0, &c, &p, 0.05).unwrap();
        let one = FieldSeries::constant_in_time(Field::constant(g, 1.0), vec![0.0]).unwrap();
        assert!(weak_residual(&traj, &one).unwrap() < 1e-13);
    }
}
