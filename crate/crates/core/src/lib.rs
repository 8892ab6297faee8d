//! Step-size schedules, momentum methods and a verification harness for
//! stochastic first-order optimization.

pub mod adversarial;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optimizers;
pub mod params;
pub mod problems;
pub mod schedules;

pub use error::{Error, Result};
