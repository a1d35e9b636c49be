//! Checks v <= w, where w solves the linear comparison problem driven by the
//! positive part of the control.

use std::sync::Arc;

use chemotaxis_control::config::random_smooth_field;
use chemotaxis_control::linalg::LinearSolver;
use chemotaxis_control::series::uniform_times;
use chemotaxis_control::sim::{comparison_gap, solve_comparison_paired};
use chemotaxis_control::{simulate_with, Control, Grid, ModelParams, SimOptions};

fn main() -> chemotaxis_control::Result<()> {
    let grid = Arc::new(Grid::on_box(vec![64], &[1.0])?.with_control_box(&[0.2], &[0.6])?);
    let params = ModelParams::new(1.0, 0.5);
    let u0 = random_smooth_field(&grid, 0.0, 3.0, 5, 1);
    let v0 = random_smooth_field(&grid, 0.2, 1.0, 5, 2);

    for amp in [0.0, 1.0, 4.0] {
        let control = Control::from_fn(grid.clone(), uniform_times(params.t_final, 10), |t, x| {
            amp * (6.0 * x[0] + 4.0 * t).sin()
        })?;
        let traj = simulate_with(&u0, &v0, &control, &params, &SimOptions::new(0.01))?;
        let w = solve_comparison_paired(&traj, LinearSolver::Auto)?;
        let gap = comparison_gap(&traj, &w)?;
        println!(
            "amplitude {amp:>4}: max(v - w) = {gap:+.3e}, max w at T = {:.4}",
            w.w.last().map(|f| f.max()).unwrap_or(0.0)
        );
    }
    Ok(())
}
