//! Energy trace and dissipation terms of an uncontrolled run, followed by the
//! interval audit for a few (beta, K) pairs.

use std::sync::Arc;

use chemotaxis_control::config::random_smooth_field;
use chemotaxis_control::energy::{EnergyForm, EnergyReport};
use chemotaxis_control::series::uniform_times;
use chemotaxis_control::{simulate_with, Control, Grid, ModelParams, SimOptions};

fn main() -> chemotaxis_control::Result<()> {
    let grid = Arc::new(Grid::on_box(vec![20, 20], &[1.0, 1.0])?);
    let params = ModelParams::new(1.5, 0.1);
    let u0 = random_smooth_field(&grid, 0.1, 2.0, 4, 3);
    let v0 = random_smooth_field(&grid, 0.1, 1.0, 4, 4);
    let control = Control::zero(grid.clone(), uniform_times(params.t_final, 1));
    let traj = simulate_with(&u0, &v0, &control, &params, &SimOptions::new(2e-3).save_every(5))?;

    let report = EnergyReport::from_trajectory(&traj, EnergyForm::Limit)?;
    println!("{:>8} {:>14} {:>12} {:>12} {:>12} {:>12}", "t", "E", "entropy", "cross", "hessian", "quartic");
    for k in 0..report.levels() {
        let d = |v: &[f64]| v.get(k).copied().unwrap_or(f64::NAN);
        println!(
            "{:>8.4} {:>14.8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            report.times[k],
            report.energy[k],
            d(&report.dissipation_entropy),
            d(&report.dissipation_cross),
            d(&report.dissipation_hessian),
            d(&report.dissipation_quartic),
        );
    }
    println!("largest energy increase between levels: {:.3e}", report.max_energy_increase());

    for (beta, k) in [(1e-3, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 1e-2)] {
        let a = report.audit(beta, k);
        println!(
            "beta {beta:<6} K {k:<6} residual {:+.3e} on [{:.3}, {:.3}] -> {}",
            a.residual,
            a.t1,
            a.t2,
            if a.passed() { "pass" } else { "fail" }
        );
    }
    println!("smallest K for beta = 1: {:.3e}", report.minimal_k(1.0));
    Ok(())
}
