//! Fits beta and the map ||f|| -> K from a family of scaled controls.

use std::sync::Arc;

use chemotaxis_control::config::random_smooth_field;
use chemotaxis_control::energy::{fit_constants, EnergyForm, EnergyReport};
use chemotaxis_control::series::uniform_times;
use chemotaxis_control::{simulate_with, Control, Grid, ModelParams, SimOptions};

fn main() -> chemotaxis_control::Result<()> {
    let grid = Arc::new(Grid::on_box(vec![32], &[1.0])?.with_control_box(&[0.0], &[0.5])?);
    let params = ModelParams::new(1.5, 0.25);
    let u0 = random_smooth_field(&grid, 0.1, 2.0, 4, 11);
    let v0 = random_smooth_field(&grid, 0.1, 1.0, 4, 12);
    let phi = Control::from_fn(grid.clone(), uniform_times(params.t_final, 4), |_, x| {
        (std::f64::consts::PI * x[0]).cos()
    })?;

    let mut reports = Vec::new();
    for lambda in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let f = phi.scale(lambda);
        let traj = simulate_with(&u0, &v0, &f, &params, &SimOptions::new(2.5e-3))?;
        reports.push((f.norm(params.q)?, EnergyReport::from_trajectory(&traj, EnergyForm::Limit)?));
    }
    let fitted = fit_constants(&reports)?;
    println!("beta = {:.4e}", fitted.beta);
    for p in &fitted.curve {
        println!("||f|| = {:>10.4}   K = {:.4e}", p.control_norm, p.k);
    }
    println!("K(3.0) interpolated: {:.4e}", fitted.k_at(3.0));
    Ok(())
}
