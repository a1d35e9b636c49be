//! The energy `E(u, z) = s/4 int g(u) + 1/2 int |grad z|^2`, the dissipation
//! integrals that accompany it, and the audited integral energy inequality
//!
//! ```text
//! E(t2) + beta (int int |grad (u+1)^{s/2}|^2 + |D^2 z|^2 + |grad z|^4 / z^2)
//!       + 1/4 int int u^s |grad z|^2  <=  E(t1) + K
//! ```
//!
//! `beta` and `K` are not computable from first principles; they are audit
//! parameters, and [`fit_constants`] estimates them from a family of runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{h1_seminorm, integrate, Field, Grid};
use crate::model::{g_m_unchecked, g_unchecked, truncate_unchecked, z_transform, ModelParams};
use crate::series::Control;
use crate::sim::{State, Trajectory};

/// Which energy to evaluate: the limit energy with `g`, or the truncated
/// `E_m` with `g_m` and `T^m(u)` in every `u`-dependent term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyForm {
    #[default]
    Limit,
    Truncated,
}

impl EnergyForm {
    pub fn from_truncated(truncated: bool) -> Self {
        if truncated {
            EnergyForm::Truncated
        } else {
            EnergyForm::Limit
        }
    }

    fn density(self, u: f64, params: &ModelParams) -> f64 {
        match self {
            EnergyForm::Limit => u,
            EnergyForm::Truncated => truncate_unchecked(u, params.m),
        }
    }
}

pub fn energy_value(state: &State, params: &ModelParams, truncated: bool) -> Result<f64> {
    energy_of(state, params, EnergyForm::from_truncated(truncated))
}

fn energy_of(state: &State, params: &ModelParams, form: EnergyForm) -> Result<f64> {
    let s = params.s;
    let g = match form {
        EnergyForm::Limit => state.u.map(|u| g_unchecked(u, s)),
        EnergyForm::Truncated => state.u.map(|u| g_m_unchecked(u, s, params.m)),
    };
    let z = z_transform(&state.v, params.alpha)?;
    let grad = h1_seminorm(&z);
    Ok(0.25 * s * integrate(&g) + 0.5 * grad * grad)
}

/// Space integrals of the dissipation densities at one time level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DissipationDensities {
    /// `int |grad (u+1)^{s/2}|^2`
    pub entropy: f64,
    /// `int u^s |grad z|^2`
    pub cross: f64,
    /// `int |D^2 z|^2`
    pub hessian: f64,
    /// `int |grad z|^4 / z^2`
    pub quartic: f64,
    /// `||f||^2_{L^2}`
    pub control_sq: f64,
}

impl DissipationDensities {
    fn lerp_sum(a: &Self, b: &Self, dt: f64) -> Self {
        let t = |x: f64, y: f64| 0.5 * dt * (x + y);
        DissipationDensities {
            entropy: t(a.entropy, b.entropy),
            cross: t(a.cross, b.cross),
            hessian: t(a.hessian, b.hessian),
            quartic: t(a.quartic, b.quartic),
            control_sq: t(a.control_sq, b.control_sq),
        }
    }

    fn add(&mut self, o: &Self) {
        self.entropy += o.entropy;
        self.cross += o.cross;
        self.hessian += o.hessian;
        self.quartic += o.quartic;
        self.control_sq += o.control_sq;
    }
}

/// Sum of squared second differences over all axis pairs, mirrored at the
/// boundary.
fn hessian_sq(z: &[f64], grid: &Grid) -> Vec<f64> {
    let d = grid.ndim();
    let h = grid.spacing();
    (0..grid.len())
        .map(|i| {
            let mut sum = 0.0;
            for a in 0..d {
                let p = grid.mirrored_neighbour(i, a, true);
                let m = grid.mirrored_neighbour(i, a, false);
                let daa = (z[p] - 2.0 * z[i] + z[m]) / (h[a] * h[a]);
                sum += daa * daa;
                for b in (a + 1)..d {
                    let pp = grid.mirrored_neighbour(p, b, true);
                    let pm = grid.mirrored_neighbour(p, b, false);
                    let mp = grid.mirrored_neighbour(m, b, true);
                    let mm = grid.mirrored_neighbour(m, b, false);
                    let dab = (z[pp] - z[pm] - z[mp] + z[mm]) / (4.0 * h[a] * h[b]);
                    sum += 2.0 * dab * dab;
                }
            }
            sum
        })
        .collect()
}

/// Cell-centered `|grad z|^2`, averaging the two face differences per axis.
fn cell_gradient_sq(z: &[f64], grid: &Grid) -> Vec<f64> {
    let h = grid.spacing();
    (0..grid.len())
        .map(|i| {
            (0..grid.ndim())
                .map(|a| {
                    let p = grid.mirrored_neighbour(i, a, true);
                    let m = grid.mirrored_neighbour(i, a, false);
                    let g = (z[p] - z[m]) / (2.0 * h[a]);
                    g * g
                })
                .sum::<f64>()
        })
        .collect()
}

pub fn dissipation_densities(
    state: &State,
    control_slice: &Field,
    params: &ModelParams,
    form: EnergyForm,
) -> Result<DissipationDensities> {
    let grid = state.grid().clone();
    let vol = grid.cell_volume();
    let s = params.s;
    let z = z_transform(&state.v, params.alpha)?;
    let z = z.values();
    let uu: Vec<f64> = state.u.values().iter().map(|&u| form.density(u, params)).collect();
    let us: Vec<f64> = uu.iter().map(|&u| u.powf(s)).collect();
    let w: Vec<f64> = uu.iter().map(|&u| (u + 1.0).powf(0.5 * s)).collect();

    let mut entropy = 0.0;
    let mut cross = 0.0;
    for face in grid.faces() {
        let h = grid.spacing()[face.axis];
        let dw = (w[face.hi] - w[face.lo]) / h;
        let dz = (z[face.hi] - z[face.lo]) / h;
        entropy += dw * dw;
        cross += 0.5 * (us[face.lo] + us[face.hi]) * dz * dz;
    }
    let hessian: f64 = hessian_sq(z, &grid).iter().sum();
    let quartic: f64 = cell_gradient_sq(z, &grid)
        .iter()
        .zip(z)
        .map(|(g2, z)| g2 * g2 / (z * z))
        .sum();
    let control_sq: f64 = control_slice.values().iter().map(|f| f * f).sum();
    Ok(DissipationDensities {
        entropy: entropy * vol,
        cross: cross * vol,
        hessian: hessian * vol,
        quartic: quartic * vol,
        control_sq: control_sq * vol,
    })
}

/// Energy trace and per-interval dissipation integrals of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Trapezoid integrals over `[times[k], times[k+1]]`.
    pub dissipation_entropy: Vec<f64>,
    pub dissipation_cross: Vec<f64>,
    pub dissipation_hessian: Vec<f64>,
    pub dissipation_quartic: Vec<f64>,
    pub control_forcing: Vec<f64>,
    pub form: EnergyForm,
    #[serde(default)]
    pub beta_used: Option<f64>,
    #[serde(default)]
    pub k_used: Option<f64>,
}

/// Dissipation integrals over one window `[t1, t2]`.
pub type IntervalTerms = DissipationDensities;

impl EnergyReport {
    pub fn from_trajectory(traj: &Trajectory, form: EnergyForm) -> Result<Self> {
        Self::from_states(&traj.states, &traj.control, &traj.params, form)
    }

    pub fn from_states(
        states: &[State],
        control: &Control,
        params: &ModelParams,
        form: EnergyForm,
    ) -> Result<Self> {
        let mut energy = Vec::with_capacity(states.len());
        let mut dens = Vec::with_capacity(states.len());
        for s in states {
            energy.push(energy_of(s, params, form)?);
            dens.push(dissipation_densities(s, &control.at(s.t), params, form)?);
        }
        let mut report = EnergyReport {
            times: states.iter().map(|s| s.t).collect(),
            energy,
            dissipation_entropy: vec![],
            dissipation_cross: vec![],
            dissipation_hessian: vec![],
            dissipation_quartic: vec![],
            control_forcing: vec![],
            form,
            beta_used: None,
            k_used: None,
        };
        for (k, pair) in dens.windows(2).enumerate() {
            let dt = report.times[k + 1] - report.times[k];
            let i = DissipationDensities::lerp_sum(&pair[0], &pair[1], dt);
            report.dissipation_entropy.push(i.entropy);
            report.dissipation_cross.push(i.cross);
            report.dissipation_hessian.push(i.hessian);
            report.dissipation_quartic.push(i.quartic);
            report.control_forcing.push(i.control_sq);
        }
        Ok(report)
    }

    pub fn levels(&self) -> usize {
        self.times.len()
    }

    fn level_index(&self, t: f64) -> Result<usize> {
        let scale = self.times.last().copied().unwrap_or(1.0).abs().max(1.0);
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * scale)
            .ok_or_else(|| {
                Error::Structural(format!(
                    "t = {t} is not a saved time level; interpolation is refused"
                ))
            })
    }

    /// Dissipation integrals between two saved levels.
    pub fn interval(&self, t1: f64, t2: f64) -> Result<IntervalTerms> {
        let (i, j) = (self.level_index(t1)?, self.level_index(t2)?);
        if i >= j {
            return Err(Error::Domain(format!("need t1 < t2, got {t1} and {t2}")));
        }
        let mut acc = IntervalTerms::default();
        for k in i..j {
            acc.add(&self.interval_at(k));
        }
        Ok(acc)
    }

    fn interval_at(&self, k: usize) -> IntervalTerms {
        IntervalTerms {
            entropy: self.dissipation_entropy[k],
            cross: self.dissipation_cross[k],
            hessian: self.dissipation_hessian[k],
            quartic: self.dissipation_quartic[k],
            control_sq: self.control_forcing[k],
        }
    }

    /// Residual `LHS(t_i, t_j) - E(t_i) - K` for every saved pair `i < j`.
    pub fn residual_pairs(&self, beta: f64, k: f64) -> Vec<(f64, f64, f64)> {
        let n = self.levels();
        // Prefix sums of the weighted dissipation make each pair O(1).
        let mut prefix = vec![0.0; n];
        for idx in 1..n {
            let t = self.interval_at(idx - 1);
            prefix[idx] =
                prefix[idx - 1] + beta * (t.entropy + t.hessian + t.quartic) + 0.25 * t.cross;
        }
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let lhs = self.energy[j] + (prefix[j] - prefix[i]);
                out.push((self.times[i], self.times[j], lhs - self.energy[i] - k));
            }
        }
        out
    }

    /// Largest residual over all saved pairs; positive means violation.
    pub fn audit(&self, beta: f64, k: f64) -> AuditOutcome {
        let mut worst = AuditOutcome {
            residual: f64::NEG_INFINITY,
            t1: 0.0,
            t2: 0.0,
            pairs: 0,
            tolerance: ROUND_OFF * self.energy.iter().fold(1.0, |m, e| f64::max(m, e.abs())),
        };
        for (t1, t2, r) in self.residual_pairs(beta, k) {
            worst.pairs += 1;
            if r > worst.residual {
                worst.residual = r;
                worst.t1 = t1;
                worst.t2 = t2;
            }
        }
        if worst.pairs == 0 {
            // A single level has nothing to violate.
            worst.residual = -k;
        }
        worst
    }

    /// Smallest `K >= 0` that passes the audit at this `beta`.
    pub fn minimal_k(&self, beta: f64) -> f64 {
        self.audit(beta, 0.0).residual.max(0.0)
    }

    /// Largest increase of the energy between consecutive saved levels.
    pub fn max_energy_increase(&self) -> f64 {
        self.energy
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

const ROUND_OFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    /// Maximum over pairs of `LHS - E(t1) - K`.
    pub residual: f64,
    pub t1: f64,
    pub t2: f64,
    pub pairs: usize,
    /// Round-off allowance used by [`AuditOutcome::passed`].
    pub tolerance: f64,
}

impl AuditOutcome {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

pub fn dissipation_terms(traj: &Trajectory, t1: f64, t2: f64, form: EnergyForm) -> Result<IntervalTerms> {
    EnergyReport::from_trajectory(traj, form)?.interval(t1, t2)
}

pub fn energy_inequality_audit(
    traj: &Trajectory,
    beta: f64,
    k: f64,
    form: EnergyForm,
) -> Result<AuditOutcome> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    Ok(EnergyReport::from_trajectory(traj, form)?.audit(beta, k))
}

/// One point of the empirical `||f||_q -> K` map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub control_norm: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    pub beta: f64,
    /// Sorted by control norm; the largest `K` among equal norms is kept.
    pub curve: Vec<KPoint>,
}

impl FittedConstants {
    /// `K(M)`: linear interpolation of the curve, extended by the last value
    /// beyond the largest fitted norm (a lower estimate there).
    pub fn k_at(&self, norm: f64) -> f64 {
        let c = &self.curve;
        if c.is_empty() {
            return 0.0;
        }
        if norm <= c[0].control_norm {
            return c[0].k;
        }
        for w in c.windows(2) {
            if norm <= w[1].control_norm {
                let span = w[1].control_norm - w[0].control_norm;
                if span == 0.0 {
                    return w[1].k;
                }
                let t = (norm - w[0].control_norm) / span;
                return w[0].k + t * (w[1].k - w[0].k);
            }
        }
        c[c.len() - 1].k
    }
}

/// Tolerance on `K` for uncontrolled runs and on curve monotonicity.
pub const K_TOLERANCE: f64 = 1e-8;
const BETA_RANGE: (f64, f64) = (1e-6, 1.0);

fn k_curve(reports: &[(f64, EnergyReport)], beta: f64) -> Vec<KPoint> {
    let mut pts: Vec<KPoint> = reports
        .iter()
        .map(|(norm, r)| KPoint {
            control_norm: *norm,
            k: r.minimal_k(beta),
        })
        .collect();
    pts.sort_by(|a, b| a.control_norm.total_cmp(&b.control_norm));
    pts
}

fn curve_admissible(curve: &[KPoint]) -> bool {
    let uncontrolled_ok = curve
        .iter()
        .filter(|p| p.control_norm == 0.0)
        .all(|p| p.k <= K_TOLERANCE);
    let monotone = curve.windows(2).all(|w| w[0].k <= w[1].k + K_TOLERANCE);
    uncontrolled_ok && monotone
}

/// Largest `beta` in `[1e-6, 1]` (by bisection) for which the per-run minimal
/// `K(beta)` vanishes on uncontrolled runs and is nondecreasing in `||f||_q`.
///
/// `reports` pairs each run's control norm with its energy report.
pub fn fit_constants(reports: &[(f64, EnergyReport)]) -> Result<FittedConstants> {
    let distinct = {
        let mut n: Vec<f64> = reports.iter().map(|r| r.0).collect();
        n.sort_by(f64::total_cmp);
        n.dedup();
        n.len()
    };
    if reports.is_empty() || (reports.len() >= 2 && distinct < 2) {
        return Err(Error::Domain(
            "fitting needs trajectories with distinct control norms".into(),
        ));
    }
    let (mut lo, mut hi) = BETA_RANGE;
    if !curve_admissible(&k_curve(reports, lo)) {
        return Err(Error::Infeasible(format!(
            "no beta in [{lo:e}, {hi}] gives a vanishing uncontrolled K and a monotone K curve"
        )));
    }
    if curve_admissible(&k_curve(reports, hi)) {
        lo = hi;
    } else {
        // Bisect in log scale; the range spans six decades.
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if curve_admissible(&k_curve(reports, mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo < 1.0 + 1e-6 {
                break;
            }
        }
    }
    let mut curve = k_curve(reports, lo);
    // Equal norms: keep the largest K so the curve is a function.
    curve.dedup_by(|b, a| {
        if a.control_norm == b.control_norm {
            a.k = a.k.max(b.k);
            true
        } else {
            false
        }
    });
    Ok(FittedConstants { beta: lo, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::series::uniform_times;
    use crate::sim::simulate;
    use std::sync::Arc;

    fn unit_line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::on_box(vec![n], &[1.0]).unwrap())
    }

    #[test]
    fn energy_examples() {
        let g = unit_line(10);
        let p = ModelParams::new(2.0, 1.0);
        let eq = State::new(Field::zeros(g.clone()), Field::constant(g.clone(), 0.4), 0.0).unwrap();
        assert_eq!(energy_value(&eq, &p, false).unwrap(), 0.0);
        let s = State::new(Field::constant(g.clone(), 2.0), Field::constant(g.clone(), 0.4), 0.0)
            .unwrap();
        assert!((energy_value(&s, &p, false).unwrap() - 1.0).abs() < 1e-14);

        let u = Field::from_fn(g.clone(), |x| 3.0 * x[0]);
        let v = Field::from_fn(g, |x| x[0] * x[0]);
        let s = State::new(u, v, 0.0).unwrap();
        let p = ModelParams { m: 5.0, ..ModelParams::new(1.0, 1.0) };
        let a = energy_value(&s, &p, true).unwrap();
        let b = energy_value(&s, &p, false).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_has_no_dissipation_and_zero_residual() {
        let g = unit_line(16);
        let p = ModelParams::new(1.0, 1.0);
        let c = Control::zero(g.clone(), uniform_times(1.0, 4));
        let traj =
            simulate(&Field::zeros(g.clone()), &Field::constant(g, 2.0), &c, &p, 0.1).unwrap();
        let r = EnergyReport::from_trajectory(&traj, EnergyForm::Limit).unwrap();
        let t = r.interval(0.0, 1.0).unwrap();
        for x in [t.entropy, t.cross, t.hessian, t.quartic, t.control_sq] {
            assert!(x.abs() < 1e-20);
        }
        for beta in [1e-3, 0.5] {
            let a = r.audit(beta, 0.0);
            assert!(a.residual.abs() < 1e-20 && a.passed());
        }
    }

    #[test]
    fn constant_control_forcing() {
        let g = unit_line(8);
        let lambda = 0.6;
        let p = ModelParams::new(1.0, 1.0);
        let c = Control::constant(g.clone(), uniform_times(1.0, 5), lambda);
        let traj =
            simulate(&Field::zeros(g.clone()), &Field::constant(g, 1.0), &c, &p, 0.05).unwrap();
        let t = dissipation_terms(&traj, 0.0, 1.0, EnergyForm::Limit).unwrap();
        assert!((t.control_sq - lambda * lambda).abs() < 1e-13);
    }

    #[test]
    fn interval_refuses_off_grid_times() {
        let g = unit_line(8);
        let p = ModelParams::new(1.0, 1.0);
        let c = Control::zero(g.clone(), uniform_times(1.0, 1));
        let traj =
            simulate(&Field::zeros(g.clone()), &Field::constant(g, 1.0), &c, &p, 0.25).unwrap();
        assert!(matches!(
            dissipation_terms(&traj, 0.0, 0.3, EnergyForm::Limit),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn residual_is_affine_in_k_and_monotone_in_beta() {
        let g = unit_line(24);
        let p = ModelParams::new(1.0, 0.2);
        let c = Control::zero(g.clone(), uniform_times(0.2, 1));
        let u0 = Field::from_fn(g.clone(), |x| 1.0 + (3.0 * x[0]).cos());
        let v0 = Field::from_fn(g, |x| 1.0 + (5.0 * x[0]).sin());
        let traj = simulate(&u0, &v0, &c, &p, 0.01).unwrap();
        let r = EnergyReport::from_trajectory(&traj, EnergyForm::Limit).unwrap();
        let base = r.audit(1e-3, 0.0).residual;
        for k in [0.0, 0.5, 2.0, 7.25] {
            assert!((r.audit(1e-3, k).residual - (base - k)).abs() < 1e-12);
        }
        let mut prev = f64::NEG_INFINITY;
        for beta in [1e-6, 1e-3, 1e-1, 1.0, 10.0] {
            let res = r.audit(beta, 0.0).residual;
            assert!(res >= prev);
            prev = res;
        }
    }

    #[test]
    fn hessian_of_quadratic_is_exact_in_the_interior() {
        let g = Arc::new(Grid::on_box(vec![6, 5], &[1.0, 1.0]).unwrap());
        let z: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.center(i);
                x[0] * x[0] + 3.0 * x[0] * x[1]
            })
            .collect();
        let h = hessian_sq(&z, &g);
        let interior = g.index(&[2, 2]);
        // D^2 z = [[2, 3], [3, 0]] -> |D^2 z|^2 = 4 + 2 * 9.
        assert!((h[interior] - 22.0).abs() < 1e-10);
    }

    #[test]
    fn k_interpolation() {
        let f = FittedConstants {
            beta: 1e-3,
            curve: vec![
                KPoint { control_norm: 0.0, k: 0.0 },
                KPoint { control_norm: 2.0, k: 1.0 },
            ],
        };
        assert_eq!(f.k_at(1.0), 0.5);
        assert_eq!(f.k_at(5.0), 1.0);
    }
}
