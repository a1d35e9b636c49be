//! Observed orders: dt refinement against exponential growth of v, and h
//! refinement against the first cosine heat mode.

use std::f64::consts::PI;
use std::sync::Arc;

use chemotaxis_control::series::uniform_times;
use chemotaxis_control::{simulate_with, Control, Field, Grid, ModelParams, SimOptions};

fn orders(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn main() -> chemotaxis_control::Result<()> {
    let g = Arc::new(Grid::on_box(vec![4], &[1.0])?);
    let (lambda, v0) = (1.5, 0.5);
    let control = Control::constant(g.clone(), uniform_times(1.0, 4), lambda);
    let params = ModelParams::new(2.0, 1.0);
    let mut errs = Vec::new();
    for k in 0..6 {
        let dt = 0.1 / 2f64.powi(k);
        let traj = simulate_with(&Field::zeros(g.clone()), &Field::constant(g.clone(), v0), &control, &params, &SimOptions::new(dt))?;
        let err = (traj.last().v.max() - v0 * lambda.exp()).abs();
        println!("dt = {dt:.5}  error {err:.4e}");
        errs.push(err);
    }
    println!("orders in dt: {:.3?}", orders(&errs));

    let t = 0.1;
    let mut errs = Vec::new();
    for n in [8, 16, 32, 64, 128] {
        let g = Arc::new(Grid::on_box(vec![n], &[1.0])?);
        let v0 = Field::from_fn(g.clone(), |x| 1.0 + 0.5 * (PI * x[0]).cos());
        let control = Control::zero(g.clone(), uniform_times(t, 1));
        let traj = simulate_with(&Field::zeros(g.clone()), &v0, &control, &ModelParams::new(1.0, t), &SimOptions::new(1e-4).save_every(1000))?;
        let decay: f64 = traj.dts().iter().map(|dt| 1.0 / (1.0 + dt * PI * PI)).product();
        let last = traj.last();
        let err = (0..n)
            .map(|i| (last.v[i] - (1.0 + 0.5 * decay * (PI * g.center(i)[0]).cos())).abs())
            .fold(0.0, f64::max);
        println!("n = {n:>4}  error {err:.4e}");
        errs.push(err);
    }
    println!("orders in h: {:.3?}", orders(&errs));
    Ok(())
}
