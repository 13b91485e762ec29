use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inversion::kernel::Kernel;
use crate::inversion::quadrature::{check_resolution, required_points};

/// Output grid `min, min + step, ..., max` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl YGrid {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 || !(self.min < self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::Config(format!("y grid needs count >= 2 and min < max, got {self:?}")));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|k| self.min + step * k as f64).collect()
    }
}

/// Tuning knobs of the estimator. `None` fields are resolved from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Bromwich abscissa.
    pub c: f64,
    /// Duration truncation bound `x`.
    pub x_trunc: f64,
    /// Bandwidth.
    pub h: f64,
    /// ω-truncation Ω; default `40/(c + λ̂)` clamped to `[200, 2000]`.
    pub omega_max: Option<f64>,
    /// Simpson grid size; default smallest odd count `>= Ω·max(8x, min(20/(c + λ̂), 8 max X'))/π`.
    pub omega_points: Option<usize>,
    pub kernel: Kernel,
    /// Output grid; default `[0, max Y']` with 1024 points.
    pub y_grid: Option<YGrid>,
    /// Guard on the (pole-deflated) denominator; default `0.05 (c + λ̂)`.
    pub denominator_floor: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            c: 1e-4,
            x_trunc: 60.0,
            h: 2.0,
            omega_max: None,
            omega_points: None,
            kernel: Kernel::Sinc,
            y_grid: None,
            denominator_floor: None,
        }
    }
}

/// Grid and guard settings actually used for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSettings {
    pub omega_max: f64,
    pub omega_points: usize,
    pub denominator_floor: f64,
    pub nu_max: f64,
    /// Number of ν intervals on `[0, 1/h]`.
    pub nu_intervals: usize,
    pub y_grid: YGrid,
    /// Width of the smoothing poles used for pole subtraction.
    pub kappa: f64,
}

impl EstimatorConfig {
    /// Benchmark setting for the bimodal model: `h = 2`, `c = 1e-4`, `x = 60`, 1024 points on `[0, 200]`.
    pub fn bimodal_benchmark() -> Self {
        Self { y_grid: Some(YGrid { min: 0.0, max: 200.0, count: 1024 }), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("c", self.c)?;
        positive("x_trunc", self.x_trunc)?;
        positive("h", self.h)?;
        if let Some(w) = self.omega_max {
            positive("omega_max", w)?;
        }
        if let Some(f) = self.denominator_floor {
            positive("denominator_floor", f)?;
        }
        if let Some(g) = &self.y_grid {
            g.validate()?;
        }
        self.kernel.validate()
    }

    pub fn default_omega_max(c: f64, lambda: f64) -> f64 {
        (40.0 / (c + lambda)).clamp(200.0, 2000.0)
    }

    /// Fills the data-dependent defaults and checks the resolution invariant.
    pub fn resolve(&self, lambda: f64, x: f64, max_duration: f64, max_energy: f64) -> Result<ResolvedSettings> {
        self.validate()?;
        let omega_max = self.omega_max.unwrap_or_else(|| Self::default_omega_max(self.c, lambda));
        // The grid period 2π/Δω must also cover the decay time of the slow
        // left-half-plane singularities, not only the shift x.
        let window = (8.0 * x).max((20.0 / (self.c + lambda)).min(8.0 * max_duration));
        let omega_points = self.omega_points.unwrap_or_else(|| required_points(omega_max, window / 8.0));
        check_resolution(omega_points, omega_max, x)?;
        let y_grid = self.y_grid.unwrap_or(YGrid { min: 0.0, max: max_energy.max(1e-12), count: 1024 });
        let y_extent = y_grid.max.abs().max(y_grid.min.abs());
        let nu_max = self.kernel.support() / self.h;
        let nu_step_max = std::f64::consts::PI / (2.0 * y_extent);
        let nu_intervals = ((nu_max / nu_step_max).ceil() as usize).max(2);
        Ok(ResolvedSettings {
            omega_max,
            omega_points,
            denominator_floor: self.denominator_floor.unwrap_or(0.05 * (self.c + lambda)),
            nu_max,
            nu_intervals,
            y_grid,
            kappa: (8.0 / x).clamp(1.0, 8.0),
        })
    }
}
