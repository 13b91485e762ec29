//! Composite Simpson quadrature on a symmetric uniform frequency grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::ComplexSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: Complex64,
    /// Bound on the neglected tails `∫_{|ω|>Ω} |f|` from a power-law fit.
    pub tail_bound: f64,
}

/// Smallest odd grid size resolving `e^{iωx}` on `[-Ω, Ω]`: `8Ωx/π`.
pub fn required_points(omega_max: f64, x: f64) -> usize {
    let n = (8.0 * omega_max * x.abs() / std::f64::consts::PI).ceil() as usize;
    (n | 1).max(3)
}

pub fn check_resolution(points: usize, omega_max: f64, x: f64) -> Result<()> {
    let required = required_points(omega_max, x);
    if points < required || points % 2 == 0 {
        return Err(Error::Resolution { points, required: required.max(points + 1) | 1 });
    }
    Ok(())
}

/// Simpson sum of equally spaced samples (odd count).
pub fn simpson_sum(values: &[Complex64], step: f64) -> Complex64 {
    let n = values.len();
    debug_assert!(n >= 3 && n % 2 == 1);
    let mut acc = ComplexSum::new();
    for (j, v) in values.iter().enumerate() {
        let w = if j == 0 || j == n - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc.add(w * v);
    }
    acc.sum() * (step / 3.0)
}

/// Tail bound `4 C Ω^{1-d}/(d-1)` with `C = max |f(ω)| |ω|^d` over the last
/// decade `Ω/10 ≤ |ω| ≤ Ω` of the grid (twice the two-sided power-law tail).
pub fn tail_bound(magnitudes: &[f64], omega_max: f64, decay_order: u32) -> f64 {
    let n = magnitudes.len();
    let step = 2.0 * omega_max / (n - 1) as f64;
    let d = decay_order as f64;
    let mut c: f64 = 0.0;
    for (j, m) in magnitudes.iter().enumerate() {
        let w = (-omega_max + step * j as f64).abs();
        if w >= 0.1 * omega_max {
            c = c.max(m * w.powf(d));
        }
    }
    4.0 * c * omega_max.powf(1.0 - d) / (d - 1.0)
}

/// `∫_{-Ω}^{Ω} f(ω) dω` by composite Simpson; `oscillation` is the largest
/// time shift `x` in a factor `e^{iωx}` that the grid must resolve.
pub fn quadrature<F: Fn(f64) -> Complex64>(
    f: F,
    omega_max: f64,
    omega_points: usize,
    decay_order: u32,
    oscillation: f64,
) -> Result<QuadratureResult> {
    if !(omega_max > 0.0) || !(2..=3).contains(&decay_order) {
        return Err(Error::Config(format!("quadrature needs Ω > 0 and decay order 2 or 3, got {omega_max}, {decay_order}")));
    }
    check_resolution(omega_points, omega_max, oscillation)?;
    let step = 2.0 * omega_max / (omega_points - 1) as f64;
    let values: Vec<Complex64> = (0..omega_points).map(|j| f(-omega_max + step * j as f64)).collect();
    let mags: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    Ok(QuadratureResult { value: simpson_sum(&values, step), tail_bound: tail_bound(&mags, omega_max, decay_order) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lorentzian() {
        let r = quadrature(|w| Complex64::new(1.0 / (1.0 + w * w), 0.0), 1e4, 200_001, 2, 0.0).unwrap();
        assert!((r.value.re - PI).abs() < 1e-3);
        assert!(r.tail_bound >= (r.value.re - PI).abs());
    }

    #[test]
    fn shifted_lorentzian_residue_value() {
        let f = |w: f64| Complex64::from_polar(1.0 / (1.0 + w * w), w);
        let r = quadrature(f, 1e4, 200_001, 2, 1.0).unwrap();
        assert!((r.value - Complex64::new(PI / std::f64::consts::E, 0.0)).norm() < 1e-3, "{}", r.value);
    }

    #[test]
    fn refinement_within_bound() {
        let f = |w: f64| Complex64::from_polar(1.0 / (1.0 + w * w), w);
        let coarse = quadrature(f, 1e3, 40_001, 2, 1.0).unwrap();
        let fine = quadrature(f, 1e3, 80_001, 2, 1.0).unwrap();
        assert!((coarse.value - fine.value).norm() < coarse.tail_bound);
    }

    #[test]
    fn coarse_grid_rejected() {
        let err = quadrature(|_| Complex64::new(1.0, 0.0), 100.0, 101, 2, 60.0).unwrap_err();
        assert!(matches!(err, Error::Resolution { .. }));
        assert!(matches!(quadrature(|_| Complex64::new(1.0, 0.0), 1.0, 100, 2, 0.0), Err(Error::Resolution { .. })));
    }
}
