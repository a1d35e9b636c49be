//! Simulates a 2-D run with a localized control and prints mass, extrema and
//! the accepted step sizes.

use std::sync::Arc;

use chemotaxis_control::grid::integrate;
use chemotaxis_control::series::uniform_times;
use chemotaxis_control::{simulate_with, Control, Field, Grid, ModelParams, SimOptions};

fn main() -> chemotaxis_control::Result<()> {
    let grid = Grid::on_box(vec![24, 24], &[1.0, 1.0])?;
    let grid = Arc::new(grid.with_control_box(&[0.0, 0.0], &[0.5, 1.0])?);
    let params = ModelParams::new(2.0, 0.2);

    let u0 = Field::from_fn(grid.clone(), |x| {
        let r2 = (x[0] - 0.7).powi(2) + (x[1] - 0.5).powi(2);
        0.1 + 2.0 * (-r2 / 0.02).exp()
    });
    let v0 = Field::from_fn(grid.clone(), |x| 1.0 + 0.5 * (std::f64::consts::PI * x[1]).cos());
    let control = Control::from_fn(grid.clone(), uniform_times(params.t_final, 8), |t, _| 1.0 - 5.0 * t)?;

    let traj = simulate_with(&u0, &v0, &control, &params, &SimOptions::new(0.005).save_every(5))?;

    println!("{:>8} {:>14} {:>10} {:>10} {:>10}", "t", "mass u", "min u", "min v", "max v");
    for s in &traj.states {
        println!(
            "{:>8.4} {:>14.10} {:>10.3e} {:>10.4} {:>10.4}",
            s.t,
            integrate(&s.u),
            s.u.min(),
            s.v.min(),
            s.v.max()
        );
    }
    let dts = traj.dts();
    let smallest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    println!("{} steps, smallest dt {smallest:.3e}, {} rejected", dts.len(), traj.rejected_steps);
    Ok(())
}
