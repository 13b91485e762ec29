//! Kernel library, Bromwich quadrature and the density estimator.

pub mod config;
pub mod estimator;
pub mod kernel;
pub mod quadrature;

pub use config::{EstimatorConfig, ResolvedSettings, YGrid};
pub use estimator::{
    a_hat, default_y_grid, estimate_density, estimate_density_with, i1_hat, i2_hat, nu_grid, synthesize, trapezoid,
    DensityEstimate, EstimateDiagnostics, Inverter, SpectralPoint,
};
pub use kernel::{kernel_fourier, Kernel};
pub use quadrature::{quadrature, QuadratureResult};
