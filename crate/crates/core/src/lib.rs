//! Fixed-confidence change-point identification in piecewise constant
//! bandits.
//!
//! - [`env`]: ground-truth environments and reward sampling
//! - [`policy`]: the CPI and MCPI policies plus an oracle-tracking baseline
//! - [`bounds`]: lower bounds, optimal proportions, horizon diagnostics
//! - [`harness`]: seeded Monte Carlo sweeps, summaries and CSV I/O

pub mod bounds;
pub mod env;
pub mod error;
pub mod format;
pub mod harness;
pub mod policy;
pub mod rng;

pub use env::{EnvironmentSpec, Gap, Validation};
pub use error::{Error, Result};
