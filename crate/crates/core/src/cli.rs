//! The `chemo` command line.
//!
//! Exit codes: 0 success, 1 audit failure, 2 configuration error, 3 data
//! error, 4 infeasible.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::cost::check_admissible;
use crate::energy::{fit_constants, EnergyForm, EnergyReport, FittedConstants};
use crate::error::{Error, Result};
use crate::grid::integrate;
use crate::io::{
    read_trajectory, write_json, write_residual_csv, write_rows_csv, write_series, write_trace_csv,
    write_trajectory,
};
use crate::opt::{optimize, ordering_experiment, threads_from_env, with_workers};
use crate::series::{Control, FieldSeries};
use crate::sim::{comparison_gap, simulate_with, solve_comparison_paired, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Cellwise slack for `v <= w`.
const COMPARISON_SLACK: f64 = 1e-10;
/// Relative mass drift allowed over a run.
const MASS_SLACK: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "chemo", version, about = "Chemotaxis-consumption simulation, energy audits and optimal control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run configuration (.toml or .json)
    pub config: PathBuf,
    /// Override a scalar field, e.g. `--set model.s=2`
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (defaults to the config's `output_dir`)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and write the trajectory plus a mass/positivity/comparison audit
    Simulate(ConfigArgs),
    /// Simulate, solve the comparison problem and check v <= w
    Compare(ConfigArgs),
    /// Audit the energy inequality on a saved trajectory
    EnergyAudit {
        /// Trajectory directory written by `simulate`
        trajectory: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        beta: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        k: f64,
        /// Audit the truncated energy instead of the limit energy
        #[arg(long)]
        truncated: bool,
        /// Output directory (defaults to `<trajectory>/energy`)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize J over the control ball
    Optimize {
        #[command(flatten)]
        args: ConfigArgs,
        /// Also run the M sweep over the config's `radii`
        #[arg(long)]
        sweep: bool,
    },
    /// Fit the energy constants over controls lambda * f
    Sweep(ConfigArgs),
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Structural(_) => EXIT_CONFIG,
        Error::Data { .. } | Error::Io { .. } => EXIT_DATA,
        Error::Positivity { .. } => EXIT_AUDIT,
        Error::Infeasible(_) | Error::Stiffness { .. } | Error::StepSize { .. } | Error::Solver(_) => {
            EXIT_INFEASIBLE
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let threads = threads_from_env()?;
    match &cli.command {
        Command::Simulate(a) => with_workers(threads, || cmd_simulate(a, false))?,
        Command::Compare(a) => with_workers(threads, || cmd_simulate(a, true))?,
        Command::EnergyAudit {
            trajectory,
            beta,
            k,
            truncated,
            out,
        } => cmd_energy_audit(trajectory, *beta, *k, *truncated, out.as_deref()),
        Command::Optimize { args, sweep } => with_workers(threads, || cmd_optimize(args, *sweep))?,
        Command::Sweep(a) => with_workers(threads, || cmd_sweep(a))?,
    }
}

fn load(a: &ConfigArgs) -> Result<(RunConfig, PathBuf)> {
    let cfg = RunConfig::load(&a.config, &a.overrides)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.output_dir());
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok((cfg, out))
}

#[derive(Debug, Serialize)]
struct LevelRow {
    t: f64,
    mass_u: f64,
    mean_v: f64,
    max_v: f64,
    min_u: f64,
    min_v: f64,
}

#[derive(Debug, Serialize)]
pub struct SimulationAudit {
    pub steps: usize,
    pub saved_levels: usize,
    pub rejected_steps: usize,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub max_relative_mass_drift: f64,
    pub mass_violations: usize,
    pub negative_cells: usize,
    pub comparison_gap: Option<f64>,
    pub comparison_violations: usize,
    pub passed: bool,
}

fn audit_trajectory(traj: &Trajectory, gap_cells: Option<(f64, usize)>) -> SimulationAudit {
    let m0 = integrate(&traj.states[0].u);
    let scale = m0.abs().max(f64::MIN_POSITIVE);
    let drift = traj
        .states
        .iter()
        .map(|s| (integrate(&s.u) - m0).abs() / scale)
        .fold(0.0, f64::max);
    let negative_cells = traj
        .states
        .iter()
        .map(|s| {
            s.u.values().iter().filter(|&&x| x < 0.0).count()
                + s.v.values().iter().filter(|&&x| x < 0.0).count()
        })
        .sum();
    let mass_violations = usize::from(m0 > 0.0 && drift > MASS_SLACK);
    let comparison_violations = gap_cells.map_or(0, |g| g.1);
    SimulationAudit {
        steps: traj.step_times.len() - 1,
        saved_levels: traj.states.len(),
        rejected_steps: traj.rejected_steps,
        mass_initial: m0,
        mass_final: integrate(&traj.last().u),
        max_relative_mass_drift: if m0 > 0.0 { drift } else { 0.0 },
        mass_violations,
        negative_cells,
        comparison_gap: gap_cells.map(|g| g.0),
        comparison_violations,
        passed: mass_violations == 0 && negative_cells == 0 && comparison_violations == 0,
    }
}

fn level_rows(traj: &Trajectory) -> Vec<LevelRow> {
    let measure = traj.grid().measure();
    traj.states
        .iter()
        .map(|s| LevelRow {
            t: s.t,
            mass_u: integrate(&s.u),
            mean_v: integrate(&s.v) / measure,
            max_v: s.v.max(),
            min_u: s.u.min(),
            min_v: s.v.min(),
        })
        .collect()
}

fn cmd_simulate(a: &ConfigArgs, comparison_only: bool) -> Result<i32> {
    let (cfg, out) = load(a)?;
    let grid = cfg.grid()?;
    let (u0, v0) = cfg.initial_state(&grid)?;
    let control = cfg.control(&grid)?;
    let traj = simulate_with(&u0, &v0, &control, &cfg.model, &cfg.sim_options())?;
    let gap = if cfg.audit.comparison || comparison_only {
        let cmp = solve_comparison_paired(&traj, cfg.sim.solver)?;
        let mut cells = 0;
        for (s, w) in traj.states.iter().zip(&cmp.w) {
            cells += s
                .v
                .values()
                .iter()
                .zip(w.values())
                .filter(|(v, w)| **v > **w + COMPARISON_SLACK)
                .count();
        }
        if comparison_only {
            write_series(&out.join("comparison"), &FieldSeries::new(grid.clone(), cmp.times.clone(), cmp.w.clone())?)?;
        }
        Some((comparison_gap(&traj, &cmp)?, cells))
    } else {
        None
    };
    let audit = audit_trajectory(&traj, gap);
    if !comparison_only {
        write_trajectory(&out.join("trajectory"), &traj)?;
        write_rows_csv(&out.join("levels.csv"), &level_rows(&traj))?;
    }
    write_json(&out.join("audit.json"), &audit)?;
    println!(
        "{} steps, mass drift {:.3e}, negative cells {}, comparison gap {}",
        audit.steps,
        audit.max_relative_mass_drift,
        audit.negative_cells,
        audit.comparison_gap.map_or("n/a".into(), |g| format!("{g:.3e}")),
    );
    Ok(if audit.passed { EXIT_OK } else { EXIT_AUDIT })
}

#[derive(Debug, Serialize)]
struct EnergyAuditSummary {
    beta: f64,
    k: f64,
    residual: f64,
    tolerance: f64,
    t1: f64,
    t2: f64,
    pairs: usize,
    passed: bool,
}

fn cmd_energy_audit(dir: &Path, beta: f64, k: f64, truncated: bool, out: Option<&Path>) -> Result<i32> {
    if !(beta > 0.0) {
        return Err(Error::Config(format!("--beta must be > 0, got {beta}")));
    }
    let traj = read_trajectory(dir)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("energy"));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut report = EnergyReport::from_trajectory(&traj, EnergyForm::from_truncated(truncated))
        .map_err(|e| Error::data(dir, e.to_string()))?;
    report.beta_used = Some(beta);
    report.k_used = Some(k);
    let audit = report.audit(beta, k);
    write_json(&out.join("energy_report.json"), &report)?;
    write_residual_csv(&out.join("residuals.csv"), &report, beta, k)?;
    let summary = EnergyAuditSummary {
        beta,
        k,
        residual: audit.residual,
        tolerance: audit.tolerance,
        t1: audit.t1,
        t2: audit.t2,
        pairs: audit.pairs,
        passed: audit.passed(),
    };
    write_json(&out.join("audit.json"), &summary)?;
    println!(
        "energy audit {}: worst residual {:.3e} on [{}, {}]",
        if summary.passed { "pass" } else { "FAIL" },
        audit.residual,
        audit.t1,
        audit.t2
    );
    Ok(if summary.passed { EXIT_OK } else { EXIT_AUDIT })
}

#[derive(Debug, Serialize)]
struct OptimizeSummary {
    j: f64,
    j_u: f64,
    j_v: f64,
    j_f: f64,
    baseline: f64,
    control_norm: f64,
    radius: f64,
    coefficients: Vec<f64>,
    evaluations: usize,
}

fn cmd_optimize(a: &ConfigArgs, sweep: bool) -> Result<i32> {
    let (cfg, out) = load(a)?;
    let problem = cfg.problem()?;
    let oc = cfg.optimizer_config()?;
    let res = optimize(&problem, &oc)?;
    write_trace_csv(&out.join("trace.csv"), &res.trace)?;
    write_series(&out.join("best_control"), res.control.series())?;
    let traj = problem.simulate(&res.coeffs)?;
    let report = check_admissible(&traj, &problem.cost, cfg.audit.beta, cfg.audit.k, cfg.audit.weak_tol)?;
    write_json(&out.join("admissibility.json"), &report)?;
    let summary = OptimizeSummary {
        j: res.best.total,
        j_u: res.best.j_u,
        j_v: res.best.j_v,
        j_f: res.best.j_f,
        baseline: res.baseline.total,
        control_norm: report.control_norm,
        radius: problem.cost.radius,
        coefficients: res.coeffs.clone(),
        evaluations: res.trace.rows.len(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "J = {:.6e} (baseline {:.6e}), |f|_q = {:.4}, admissible: {}",
        summary.j, summary.baseline, summary.control_norm, report.pass
    );
    let mut ok = report.pass;
    if sweep {
        if cfg.radii.len() < 2 {
            return Err(Error::Config("radii: the M sweep needs at least two values".into()));
        }
        let table = ordering_experiment(&problem, &oc, &cfg.radii)?;
        write_rows_csv(&out.join("ordering.csv"), &table.rows)?;
        write_json(&out.join("ordering.json"), &table)?;
        for r in &table.rows {
            println!("M = {:<8} J = {:.6e}  (q/gamma_f) J = {:.4e}", r.radius, r.j, r.threshold);
        }
        ok &= table.monotone;
    }
    Ok(if ok { EXIT_OK } else { EXIT_AUDIT })
}

#[derive(Debug, Serialize)]
struct KRow {
    lambda: f64,
    control_norm: f64,
    k: f64,
}

/// Energy reports of the runs with control `lambda * f` for each lambda.
pub fn lambda_sweep(cfg: &RunConfig, base: &Control, lambdas: &[f64]) -> Result<Vec<(f64, EnergyReport)>> {
    let grid = cfg.grid()?;
    let (u0, v0) = cfg.initial_state(&grid)?;
    lambdas
        .iter()
        .map(|&l| {
            let c = base.scale(l);
            let traj = simulate_with(&u0, &v0, &c, &cfg.model, &cfg.sim_options())?;
            Ok((c.norm(cfg.model.q)?, EnergyReport::from_trajectory(&traj, EnergyForm::Limit)?))
        })
        .collect()
}

fn cmd_sweep(a: &ConfigArgs) -> Result<i32> {
    let (cfg, out) = load(a)?;
    let grid = cfg.grid()?;
    let mut base = cfg.control(&grid)?;
    if base.is_zero() {
        base = Control::constant(grid.clone(), cfg.control_times(), 1.0);
    }
    let lambdas = cfg.audit.lambdas.clone();
    let reports = lambda_sweep(&cfg, &base, &lambdas)?;
    let fitted: FittedConstants = fit_constants(&reports)?;
    let rows: Vec<KRow> = lambdas
        .iter()
        .zip(&reports)
        .map(|(&lambda, (norm, r))| KRow {
            lambda,
            control_norm: *norm,
            k: r.minimal_k(fitted.beta),
        })
        .collect();
    write_rows_csv(&out.join("k_curve.csv"), &rows)?;
    write_json(&out.join("fitted.json"), &fitted)?;
    println!("beta = {:.4e}", fitted.beta);
    for r in &rows {
        println!("lambda = {:<6} |f|_q = {:.4e}  K = {:.4e}", r.lambda, r.control_norm, r.k);
    }
    Ok(EXIT_OK)
}
