//! Optimal cost against the control radius M on the bundled instance.

use std::path::PathBuf;

use chemotaxis_control::config::RunConfig;
use chemotaxis_control::opt::ordering_experiment;

fn main() -> chemotaxis_control::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/small_1d.toml");
    let cfg = RunConfig::load(&path, &[])?;
    let problem = cfg.problem()?;
    let table = ordering_experiment(&problem, &cfg.optimizer_config()?, &[0.25, 0.5, 1.0, 2.0, 4.0, 8.0])?;

    println!("{:>6} {:>14} {:>10} {:>12}", "M", "J", "||f||", "q J / g_f");
    for r in &table.rows {
        println!("{:>6} {:>14.6e} {:>10.4} {:>12.4e}", r.radius, r.j, r.fnorm, r.threshold);
    }
    println!("monotone: {}", table.monotone);
    match table.plateau {
        Some(m) => println!("plateau from M = {m}"),
        None => println!("no plateau within the sweep"),
    }
    Ok(())
}
