//! Simulation, energy auditing and bounded optimal control of the
//! chemotaxis-consumption system
//!
//! ```text
//! u_t - Lap u = -div(u grad v)
//! v_t - Lap v = -u^s v + f v 1_c
//! ```
//!
//! on boxes with zero-flux boundaries, through its smooth truncation `T^m`.

pub mod cli;
pub mod config;
pub mod cost;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod opt;
pub mod series;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use model::ModelParams;
pub use series::{Control, FieldSeries};
pub use sim::{simulate, simulate_with, SimOptions, State, Trajectory};
