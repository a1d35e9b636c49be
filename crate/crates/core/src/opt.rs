//! Projected-gradient minimization of `J` over a coarse space-time control
//! basis, with finite-difference gradients through the simulator.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{evaluate_j, CostBreakdown, CostParams};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::ModelParams;
use crate::series::{Control, FieldSeries};
use crate::sim::{simulate_with, SimOptions, Trajectory};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "CHEMO_THREADS";

/// Node counts of the coarse lattice: `time` nodes on `[0, T]` and
/// `space[a]` nodes spanning axis `a`. One node means a constant profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseBasis {
    pub time: usize,
    pub space: Vec<usize>,
}

/// `(node, weight)` pairs of the piecewise-linear hats at `x` in `[0, len]`.
fn hat_weights(x: f64, len: f64, nodes: usize) -> Vec<(usize, f64)> {
    if nodes <= 1 || len <= 0.0 {
        return vec![(0, 1.0)];
    }
    let pos = (x / len).clamp(0.0, 1.0) * (nodes - 1) as f64;
    let k = (pos.floor() as usize).min(nodes - 2);
    let w = pos - k as f64;
    vec![(k, 1.0 - w), (k + 1, w)]
}

impl CoarseBasis {
    pub fn new(time: usize, space: Vec<usize>) -> Result<Self> {
        if time == 0 || space.iter().any(|&n| n == 0) {
            return Err(Error::Domain("coarse basis needs at least one node per axis".into()));
        }
        Ok(CoarseBasis { time, space })
    }

    pub fn len(&self) -> usize {
        self.time * self.space.iter().product::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.space.len() != grid.ndim() || self.time == 0 || self.space.contains(&0) {
            return Err(Error::Structural(format!(
                "basis {:?} x {} does not match a {}-dimensional grid",
                self.space,
                self.time,
                grid.ndim()
            )));
        }
        Ok(())
    }

    /// Multilinear interpolation of the lattice values to every control knot
    /// and cell center, then masked to the control region.
    pub fn prolong(&self, coeffs: &[f64], grid: &Arc<Grid>, times: &[f64]) -> Result<Control> {
        self.check(grid)?;
        if coeffs.len() != self.len() {
            return Err(Error::Structural(format!(
                "expected {} coefficients, got {}",
                self.len(),
                coeffs.len()
            )));
        }
        let t_end = times.last().copied().unwrap_or(0.0);
        let lengths = grid.lengths();
        let d = grid.ndim();
        let cell_weights: Vec<Vec<(usize, f64)>> = (0..grid.len())
            .map(|i| {
                let x = grid.center(i);
                let per_axis: Vec<Vec<(usize, f64)>> = (0..d)
                    .map(|a| hat_weights(x[a], lengths[a], self.space[a]))
                    .collect();
                let mut combos = vec![(0usize, 1.0f64)];
                let mut stride = self.time;
                for (a, wa) in per_axis.iter().enumerate() {
                    combos = combos
                        .iter()
                        .flat_map(|&(idx, w)| wa.iter().map(move |&(j, v)| (idx + j * stride, w * v)))
                        .collect();
                    stride *= self.space[a];
                }
                combos
            })
            .collect();
        let fields = times
            .iter()
            .map(|&t| {
                let tw = hat_weights(t, t_end, self.time);
                let values = cell_weights
                    .iter()
                    .map(|cw| {
                        let mut sum = 0.0;
                        for &(k, a) in &tw {
                            for &(idx, b) in cw {
                                sum += a * b * coeffs[k + idx];
                            }
                        }
                        sum
                    })
                    .collect();
                Field::new(grid.clone(), values)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Control::new(FieldSeries::new(grid.clone(), times.to_vec(), fields)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub step0: f64,
    pub shrink: f64,
    pub fd_epsilon: f64,
    pub basis: CoarseBasis,
    pub stop_tol: f64,
    pub seed: u64,
    /// Number of starts; the first is always `f = 0`.
    pub starts: usize,
    pub max_backtracks: usize,
    pub armijo: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 50,
            step0: 1.0,
            shrink: 0.5,
            fd_epsilon: 1e-6,
            basis: CoarseBasis { time: 2, space: vec![2] },
            stop_tol: 1e-8,
            seed: 0,
            starts: 1,
            max_backtracks: 30,
            armijo: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Domain("max_iters must be >= 1".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Domain(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        for (name, x) in [("step0", self.step0), ("fd_epsilon", self.fd_epsilon)] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Domain(format!("{name} must be > 0, got {x}")));
            }
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::Domain("stop_tol must be >= 0".into()));
        }
        if self.starts < 1 {
            return Err(Error::Domain("starts must be >= 1".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::Domain("armijo must lie in (0, 1)".into()));
        }
        if self.basis.time == 0 || self.basis.space.contains(&0) {
            return Err(Error::Domain("coarse basis needs at least one node per axis".into()));
        }
        Ok(())
    }
}

/// Everything the reduced objective needs besides the coefficients.
#[derive(Debug, Clone)]
pub struct Problem {
    pub u0: Field,
    pub v0: Field,
    pub params: ModelParams,
    pub cost: CostParams,
    pub sim: SimOptions,
    pub basis: CoarseBasis,
    /// Control knots the basis is prolonged to.
    pub control_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `+inf` when the simulation failed.
    pub j: f64,
    pub breakdown: Option<CostBreakdown>,
    pub control_norm: f64,
    pub error: Option<String>,
}

impl Evaluation {
    pub fn feasible(&self) -> bool {
        self.j.is_finite()
    }
}

impl Problem {
    pub fn grid(&self) -> &Arc<Grid> {
        self.u0.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.cost.validate()?;
        self.basis.check(self.grid())?;
        Ok(())
    }

    /// Prolonged control without projection.
    pub fn raw_control(&self, coeffs: &[f64]) -> Result<Control> {
        self.basis.prolong(coeffs, self.grid(), &self.control_times)
    }

    /// Scales `coeffs` so the prolonged control lies in `B_q(M)`. Radial
    /// scaling commutes with the linear prolongation.
    pub fn project(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let norm = self.raw_control(coeffs)?.norm(self.cost.q)?;
        if norm <= self.cost.radius {
            return Ok(coeffs.to_vec());
        }
        let c = self.cost.radius / norm;
        Ok(coeffs.iter().map(|x| x * c).collect())
    }

    pub fn control(&self, coeffs: &[f64]) -> Result<Control> {
        self.raw_control(&self.project(coeffs)?)
    }

    pub fn simulate(&self, coeffs: &[f64]) -> Result<Trajectory> {
        let control = self.control(coeffs)?;
        simulate_with(&self.u0, &self.v0, &control, &self.params, &self.sim)
    }

    pub fn evaluate(&self, coeffs: &[f64]) -> Result<Evaluation> {
        let control = self.control(coeffs)?;
        let control_norm = control.norm(self.cost.q)?;
        match simulate_with(&self.u0, &self.v0, &control, &self.params, &self.sim) {
            Ok(traj) => {
                let b = evaluate_j(&traj, &self.cost)?;
                Ok(Evaluation {
                    j: b.total,
                    breakdown: Some(b),
                    control_norm,
                    error: None,
                })
            }
            Err(e @ (Error::Stiffness { .. } | Error::StepSize { .. } | Error::Positivity { .. } | Error::Solver(_))) => {
                Ok(Evaluation {
                    j: f64::INFINITY,
                    breakdown: None,
                    control_norm,
                    error: Some(e.to_string()),
                })
            }
            Err(e) => Err(e),
        }
    }

    /// `J` after projection and simulation; `+inf` for infeasible candidates.
    pub fn reduced_objective(&self, coeffs: &[f64]) -> f64 {
        self.evaluate(coeffs).map(|e| e.j).unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    /// Coordinates where one probe was infeasible and a one-sided difference
    /// was used.
    pub one_sided: Vec<bool>,
}

/// Central differences of `objective` at `x`, one coordinate per task.
/// Coordinates whose both probes are infeasible get a zero entry.
pub fn fd_gradient<F>(objective: &F, x: &[f64], eps: f64) -> Result<Gradient>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("fd_epsilon must be > 0, got {eps}")));
    }
    let fx = objective(x);
    let entries: Vec<(f64, bool)> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let probe = |delta: f64| {
                let mut y = x.to_vec();
                y[i] += delta;
                objective(&y)
            };
            let (fp, fm) = (probe(eps), probe(-eps));
            match (fp.is_finite(), fm.is_finite()) {
                (true, true) => ((fp - fm) / (2.0 * eps), false),
                (true, false) if fx.is_finite() => ((fp - fx) / eps, true),
                (false, true) if fx.is_finite() => ((fx - fm) / eps, true),
                _ => (0.0, true),
            }
        })
        .collect();
    Ok(Gradient {
        values: entries.iter().map(|e| e.0).collect(),
        one_sided: entries.iter().map(|e| e.1).collect(),
    })
}

/// One evaluated candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub start: usize,
    pub iter: usize,
    pub trial: usize,
    pub j: f64,
    pub j_u: f64,
    pub j_v: f64,
    pub j_f: f64,
    pub fnorm: f64,
    pub step: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub rows: Vec<TraceRow>,
}

impl OptimizationTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.accepted)
    }

    /// Accepted `J` values of one start, in order.
    pub fn accepted_j(&self, start: usize) -> Vec<f64> {
        self.accepted().filter(|r| r.start == start).map(|r| r.j).collect()
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub coeffs: Vec<f64>,
    pub control: Control,
    pub best: CostBreakdown,
    pub baseline: CostBreakdown,
    pub trace: OptimizationTrace,
}

fn row(start: usize, iter: usize, trial: usize, e: &Evaluation, step: f64, accepted: bool) -> TraceRow {
    let b = e.breakdown.unwrap_or(CostBreakdown {
        j_u: f64::INFINITY,
        j_v: f64::INFINITY,
        j_f: f64::INFINITY,
        total: f64::INFINITY,
    });
    TraceRow {
        start,
        iter,
        trial,
        j: e.j,
        j_u: b.j_u,
        j_v: b.j_v,
        j_f: b.j_f,
        fnorm: e.control_norm,
        step,
        accepted,
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Descent from `x0` (projected first); returns the final point, its
/// evaluation, and appends to `trace`.
fn descend(
    problem: &Problem,
    config: &OptimizerConfig,
    start: usize,
    x0: &[f64],
    trace: &mut OptimizationTrace,
) -> Result<(Vec<f64>, Evaluation)> {
    let mut x = problem.project(x0)?;
    let mut ex = problem.evaluate(&x)?;
    trace.rows.push(row(start, 0, 0, &ex, 0.0, ex.feasible()));
    if !ex.feasible() || ex.j == 0.0 {
        return Ok((x, ex));
    }
    let objective = |c: &[f64]| problem.reduced_objective(c);
    let mut step = config.step0;
    for iter in 1..=config.max_iters {
        let g = fd_gradient(&objective, &x, config.fd_epsilon)?;
        let gnorm = norm2(&g.values);
        if gnorm == 0.0 || !gnorm.is_finite() {
            break;
        }
        let dir: Vec<f64> = g.values.iter().map(|v| -v / gnorm).collect();
        let mut accepted = None;
        for trial in 1..=config.max_backtracks {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let cand = problem.project(&cand)?;
            let e = problem.evaluate(&cand)?;
            let slope: f64 = g.values.iter().zip(cand.iter().zip(&x)).map(|(g, (c, a))| g * (c - a)).sum();
            let ok = e.feasible() && e.j < ex.j && e.j <= ex.j + config.armijo * slope;
            trace.rows.push(row(start, iter, trial, &e, step, ok));
            if ok {
                accepted = Some((cand, e));
                break;
            }
            step *= config.shrink;
        }
        let Some((cand, e)) = accepted else { break };
        let rel = (ex.j - e.j) / ex.j.abs().max(f64::MIN_POSITIVE);
        x = cand;
        ex = e;
        step /= config.shrink;
        if rel < config.stop_tol || ex.j == 0.0 {
            break;
        }
    }
    Ok((x, ex))
}

/// Projected-gradient descent with Armijo backtracking, from `f = 0` and
/// `config.starts - 1` seeded random starts; returns the best iterate.
pub fn optimize(problem: &Problem, config: &OptimizerConfig) -> Result<OptimizationResult> {
    optimize_from(problem, config, None)
}

/// As [`optimize`], with the first start at `warm` instead of zero.
pub fn optimize_from(
    problem: &Problem,
    config: &OptimizerConfig,
    warm: Option<&[f64]>,
) -> Result<OptimizationResult> {
    config.validate()?;
    problem.validate()?;
    let n = problem.basis.len();
    let zero = vec![0.0; n];
    let base = problem.evaluate(&zero)?;
    let Some(baseline) = base.breakdown else {
        return Err(Error::Infeasible(format!(
            "the uncontrolled baseline cannot be simulated: {}",
            base.error.unwrap_or_default()
        )));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = OptimizationTrace::default();
    let mut best: Option<(Vec<f64>, Evaluation)> = None;
    for start in 0..config.starts {
        let x0: Vec<f64> = match (start, warm) {
            (0, Some(w)) => w.to_vec(),
            (0, None) => zero.clone(),
            _ => (0..n).map(|_| rng.gen_range(-1.0..1.0) * problem.cost.radius).collect(),
        };
        let (x, e) = descend(problem, config, start, &x0, &mut trace)?;
        if best.as_ref().map_or(true, |b| e.j < b.1.j) {
            best = Some((x, e));
        }
    }
    let (mut coeffs, mut e) = best.expect("at least one start");
    if !(e.j <= baseline.total) {
        coeffs = zero;
        e = base;
    }
    Ok(OptimizationResult {
        control: problem.control(&coeffs)?,
        coeffs,
        best: e.breakdown.expect("finite objective"),
        baseline,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingRow {
    pub radius: f64,
    pub j: f64,
    pub j_u: f64,
    pub j_v: f64,
    pub j_f: f64,
    pub fnorm: f64,
    /// `(q / gamma_f) J`
    pub threshold: f64,
    pub radius_above_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingTable {
    pub rows: Vec<OrderingRow>,
    /// `J` nonincreasing along the sweep within `stop_tol * J`.
    pub monotone: bool,
    /// Smallest `M` with `J(M) - J(2M) < stop_tol * J(M)`, among sweeps that
    /// contain `2M`.
    pub plateau: Option<f64>,
}

/// Optimizes for each radius in increasing order, warm-starting each run from
/// the previous optimum (which stays feasible in the larger ball).
pub fn ordering_experiment(
    problem: &Problem,
    config: &OptimizerConfig,
    radii: &[f64],
) -> Result<OrderingTable> {
    if radii.len() < 2 {
        return Err(Error::Domain("an M sweep needs at least two values".into()));
    }
    if radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("M values must be nondecreasing".into()));
    }
    let mut rows = Vec::with_capacity(radii.len());
    let mut warm: Option<Vec<f64>> = None;
    for &radius in radii {
        let p = Problem {
            cost: problem.cost.with_radius(radius),
            ..problem.clone()
        };
        let res = optimize_from(&p, config, warm.as_deref())?;
        let threshold = problem.cost.q / problem.cost.gamma_f * res.best.total;
        rows.push(OrderingRow {
            radius,
            j: res.best.total,
            j_u: res.best.j_u,
            j_v: res.best.j_v,
            j_f: res.best.j_f,
            fnorm: res.control.norm(problem.cost.q)?,
            threshold,
            radius_above_threshold: radius >= threshold,
        });
        warm = Some(res.coeffs);
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[1].j <= w[0].j + config.stop_tol * w[0].j.abs());
    let plateau = rows.iter().find_map(|r| {
        let twice = rows.iter().find(|o| o.radius == 2.0 * r.radius)?;
        (r.j - twice.j < config.stop_tol * r.j).then_some(r.radius)
    });
    Ok(OrderingTable {
        rows,
        monotone,
        plateau,
    })
}

/// Number of workers from `CHEMO_THREADS`, if set and positive.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {s:?}"
            ))),
            Ok(n) => Ok(Some(n)),
        },
    }
}

/// Runs `f` inside a pool sized by `threads` (all cores when `None`).
pub fn with_workers<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    let pool = b
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::uniform_times;

    #[test]
    fn prolongation_reproduces_multilinear_functions() {
        let g = Arc::new(Grid::on_box(vec![5, 4], &[2.0, 1.0]).unwrap());
        let basis = CoarseBasis::new(2, vec![2, 2]).unwrap();
        let times = uniform_times(1.0, 4);
        // f(t, x, y) = 1 + t + x/2 + y: nodes at t in {0,1}, x in {0,2}, y in {0,1}
        let mut coeffs = vec![0.0; 8];
        for jy in 0..2 {
            for jx in 0..2 {
                for kt in 0..2 {
                    coeffs[kt + 2 * (jx + 2 * jy)] = 1.0 + kt as f64 + jx as f64 + jy as f64;
                }
            }
        }
        let c = basis.prolong(&coeffs, &g, &times).unwrap();
        for &t in &times {
            let f = c.at(t);
            for i in 0..g.len() {
                let x = g.center(i);
                assert!((f[i] - (1.0 + t + x[0] / 2.0 + x[1])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_gradient_is_exact_to_round_off() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] - x[0] * x[1] + 0.5 * x[1] * x[1] + x[2];
        let x = [0.3, -1.2, 4.0];
        let g = fd_gradient(&f, &x, 1e-4).unwrap();
        let exact = [6.0 * x[0] - x[1], -x[0] + x[1], 1.0];
        for (a, b) in g.values.iter().zip(exact) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(g.one_sided.iter().all(|&b| !b));
    }

    #[test]
    fn infeasible_probe_falls_back_to_one_side() {
        let f = |x: &[f64]| if x[0] > 1.0 { f64::INFINITY } else { 2.0 * x[0] };
        let g = fd_gradient(&f, &[1.0], 1e-3).unwrap();
        assert!(g.one_sided[0]);
        assert!((g.values[0] - 2.0).abs() < 1e-9);
    }

    fn small_problem(mask_hi: f64) -> Problem {
        let g = Arc::new(
            Grid::on_box(vec![8], &[1.0])
                .unwrap()
                .with_control_box(&[0.0], &[mask_hi])
                .unwrap(),
        );
        let params = ModelParams::new(1.0, 0.25);
        let u0 = Field::from_fn(g.clone(), |x| 1.0 + 0.5 * (3.0 * x[0]).cos());
        let v0 = Field::constant(g.clone(), 1.0);
        let times = uniform_times(0.25, 4);
        let cost = CostParams {
            gamma_u: 1.0,
            gamma_v: 1.0,
            gamma_f: 0.1,
            q: 3.0,
            u_d: FieldSeries::constant_in_time(u0.clone(), times.clone()).unwrap(),
            v_d: FieldSeries::constant_in_time(Field::constant(g.clone(), 1.5), times.clone()).unwrap(),
            radius: 2.0,
        };
        Problem {
            u0,
            v0,
            params,
            cost,
            sim: SimOptions::new(0.0625),
            basis: CoarseBasis::new(2, vec![3]).unwrap(),
            control_times: times,
        }
    }

    #[test]
    fn coefficient_outside_the_mask_has_zero_gradient() {
        let p = small_problem(0.3);
        let x = vec![0.1; p.basis.len()];
        let g = fd_gradient(&|c: &[f64]| p.reduced_objective(c), &x, 1e-5).unwrap();
        // Space node 2 sits at x = 1, whose hat support [0.5, 1] misses the mask.
        assert_eq!(g.values[4], 0.0);
        assert_eq!(g.values[5], 0.0);
        assert!(g.values[0] != 0.0);
    }

    #[test]
    fn optimizer_decreases_and_stays_in_ball() {
        let p = small_problem(1.0);
        let cfg = OptimizerConfig {
            max_iters: 8,
            step0: 0.5,
            basis: p.basis.clone(),
            ..OptimizerConfig::default()
        };
        let res = optimize(&p, &cfg).unwrap();
        assert!(res.best.total < res.baseline.total);
        let acc = res.trace.accepted_j(0);
        assert!(acc.windows(2).all(|w| w[1] < w[0]));
        assert!(res.trace.rows.iter().all(|r| r.fnorm <= p.cost.radius + 1e-12));
        let again = optimize(&p, &cfg).unwrap();
        assert_eq!(res.trace, again.trace);
    }

    #[test]
    fn projected_coefficients_give_the_projected_control() {
        let p = small_problem(1.0);
        let big = vec![50.0; p.basis.len()];
        let raw = p.raw_control(&big).unwrap();
        let a = crate::cost::project_ball(&raw, p.cost.radius, p.cost.q).unwrap();
        let b = p.control(&big).unwrap();
        for &t in a.times() {
            for (x, y) in a.at(t).values().iter().zip(b.at(t).values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_eq!(p.reduced_objective(&big), p.reduced_objective(&big));
    }
}
