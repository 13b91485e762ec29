//! Recovery of the photon energy density from pileup-corrupted busy/idle
//! cycle observations of a shot-noise process.

pub mod cli;
pub mod error;
pub mod fourier;
pub mod inversion;
pub mod marks;
pub mod simulator;
pub mod sum;
pub mod transform;
pub mod validation;

pub use error::{Error, Result};
