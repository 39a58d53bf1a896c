//! Recovery of univariate time series from linear measurements with an
//! untrained 1D convolutional generator, plus classical baselines and an
//! experiment runner.

pub mod autodiff;
pub mod baselines;
mod error;
pub mod generator;
pub mod harness;
pub mod measurements;
pub mod recovery;
pub mod rng;
pub mod signal_io;

pub use error::{Error, Result};
