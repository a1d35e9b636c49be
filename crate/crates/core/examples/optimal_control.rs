//! Optimizes the bundled 1-D tracking instance and checks the optimum.
//!
//! Pass a config path to use another instance.

use std::path::PathBuf;

use chemotaxis_control::config::RunConfig;
use chemotaxis_control::cost::check_admissible;
use chemotaxis_control::opt::optimize;

fn main() -> chemotaxis_control::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/small_1d.toml"));
    let cfg = RunConfig::load(&path, &[])?;
    let problem = cfg.problem()?;
    let oc = cfg.optimizer_config()?;

    let res = optimize(&problem, &oc)?;
    println!("baseline J = {:.6e}", res.baseline.total);
    for r in res.trace.accepted() {
        println!("iter {:>3}  J = {:.6e}  ||f|| = {:.4}  step {:.3e}", r.iter, r.j, r.fnorm, r.step);
    }
    println!(
        "best J = {:.6e} (J_u {:.3e}, J_v {:.3e}, J_f {:.3e})",
        res.best.total, res.best.j_u, res.best.j_v, res.best.j_f
    );
    println!("coefficients {:?}", res.coeffs.iter().map(|c| (c * 1e4).round() / 1e4).collect::<Vec<_>>());

    let traj = problem.simulate(&res.coeffs)?;
    let adm = check_admissible(&traj, &problem.cost, cfg.audit.beta, cfg.audit.k, cfg.audit.weak_tol)?;
    println!(
        "admissible: {} (norm {:.4} <= {}, weak residual {:.2e} <= {:.2e})",
        adm.pass, adm.control_norm, adm.radius, adm.weak_residual, adm.weak_tolerance
    );
    Ok(())
}
