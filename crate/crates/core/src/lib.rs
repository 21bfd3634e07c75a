//! Marked empirical processes for unit-root AR(1) models.
//!
//! The crate covers innovation samplers (i.i.d. stable, GARCH(1,1), linear
//! moving averages), the AR(1) path, quantile and least-squares estimators of
//! the autoregressive coefficient, the marked and residual marked empirical
//! processes, Monte Carlo samplers for their limit laws and a replication
//! harness comparing the two.

pub mod distributions;
pub mod error;
pub mod estimators;
pub mod fsum;
pub mod harness;
pub mod innovations;
pub mod limits;
pub mod marked;
pub mod processes;
pub mod rng;

pub use error::{Error, Result};
pub use rng::NoiseStream;
