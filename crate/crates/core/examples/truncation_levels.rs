//! Effect of the truncation level m on a concentrating run: the limit energy
//! against the truncated one, and max u at the final time.

use std::sync::Arc;

use chemotaxis_control::energy::energy_value;
use chemotaxis_control::model::truncate;
use chemotaxis_control::series::uniform_times;
use chemotaxis_control::{simulate_with, Control, Field, Grid, ModelParams, SimOptions};

fn main() -> chemotaxis_control::Result<()> {
    let grid = Arc::new(Grid::on_box(vec![48], &[1.0])?);
    let u0 = Field::from_fn(grid.clone(), |x| 0.5 + 4.0 * (-(x[0] - 0.5).powi(2) / 0.005).exp());
    let v0 = Field::from_fn(grid.clone(), |x| 1.0 + 0.8 * (2.0 * std::f64::consts::PI * x[0]).cos());
    let control = Control::zero(grid.clone(), uniform_times(0.05, 1));

    println!("T^m(r) at r = 0.5, 2, 8:");
    for m in [1.0, 4.0, 16.0] {
        println!("  m = {m:>4}: {:.4} {:.4} {:.4}", truncate(0.5, m)?, truncate(2.0, m)?, truncate(8.0, m)?);
    }

    println!("{:>8} {:>12} {:>14} {:>14}", "m", "max u(T)", "E(T)", "E_m(T)");
    for m in [1.0, 2.0, 4.0, 8.0, 1e6] {
        let params = ModelParams { m, ..ModelParams::new(2.0, 0.05) };
        let traj = simulate_with(&u0, &v0, &control, &params, &SimOptions::new(5e-4).save_every(100))?;
        let last = traj.last();
        println!(
            "{:>8} {:>12.5} {:>14.8} {:>14.8}",
            m,
            last.u.max(),
            energy_value(last, &params, false)?,
            energy_value(last, &params, true)?
        );
    }
    Ok(())
}
