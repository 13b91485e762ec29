//! Empirical inputs of the inversion: the intensity estimate, the empirical
//! bivariate Laplace transform of the busy periods, and the fluctuation
//! diagnostics Δ̂ and Ê.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::UniformFrequencySum;
use crate::simulator::CycleSet;
use crate::sum::{ComplexSum, NeumaierSum};

/// Exponents above this raise `Error::Overflow` instead of producing `inf`.
pub const EXP_CAP: f64 = 700.0;

/// `λ̂ = 1 / mean(idle)`.
pub fn estimate_lambda(cycles: &CycleSet) -> Result<f64> {
    if cycles.is_empty() {
        return Err(Error::EmptyStream);
    }
    let total: NeumaierSum = cycles.idles().collect();
    Ok(cycles.len() as f64 / total.sum())
}

/// Empirical Laplace transform `L̂(s, p) = n⁻¹ Σ exp(-s X'_k - p Y'_k)` of the
/// busy-period law, with Bromwich abscissa `c`.
#[derive(Debug, Clone)]
pub struct EmpiricalTransform {
    durations: Vec<f64>,
    energies: Vec<f64>,
    c: f64,
}

/// Uniform grid `ω_j = -Ω + j·2Ω/(points-1)` on the line `Re s = c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaGrid {
    pub omega_max: f64,
    pub points: usize,
}

impl OmegaGrid {
    pub fn step(&self) -> f64 {
        2.0 * self.omega_max / (self.points - 1) as f64
    }

    pub fn omega(&self, j: usize) -> f64 {
        -self.omega_max + self.step() * j as f64
    }
}

impl EmpiricalTransform {
    pub fn new(cycles: &CycleSet, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("Bromwich abscissa c must be positive, got {c}")));
        }
        Ok(Self { durations: cycles.durations().collect(), energies: cycles.energies().collect(), c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn max_duration(&self) -> f64 {
        self.durations.iter().copied().fold(0.0, f64::max)
    }

    /// Sample mean of `g(X'_k) exp(-s X'_k - p Y'_k)`, compensated.
    fn weighted_mean<G: Fn(f64) -> f64>(&self, s: Complex64, p: Complex64, g: G) -> Complex64 {
        let mut acc = ComplexSum::new();
        for (&x, &y) in self.durations.iter().zip(&self.energies) {
            let w = g(x);
            if w != 0.0 {
                acc.add(w * (-s * x - p * y).exp());
            }
        }
        acc.sum() / self.len() as f64
    }

    /// `L̂(s, p)`; the estimator also evaluates it at `Re s < 0`.
    pub fn laplace(&self, s: Complex64, p: Complex64) -> Complex64 {
        self.weighted_mean(s, p, |_| 1.0)
    }

    /// `∂L̂/∂s (s, p) = -n⁻¹ Σ X'_k exp(-s X'_k - p Y'_k)`.
    pub fn laplace_ds(&self, s: Complex64, p: Complex64) -> Complex64 {
        -self.weighted_mean(s, p, |x| x)
    }

    /// `(L̂, n⁻¹ Σ X' e, n⁻¹ Σ Y' e)` with `e = exp(-s X' - p Y')`, in one pass.
    pub fn laplace_moments(&self, s: Complex64, p: Complex64) -> (Complex64, Complex64, Complex64) {
        let (mut l, mut lx, mut ly) = (ComplexSum::new(), ComplexSum::new(), ComplexSum::new());
        for (&x, &y) in self.durations.iter().zip(&self.energies) {
            let e = (-s * x - p * y).exp();
            l.add(e);
            lx.add(x * e);
            ly.add(y * e);
        }
        let n = self.len() as f64;
        (l.sum() / n, lx.sum() / n, ly.sum() / n)
    }

    /// Checks that `exp(-Re(s) X'_k)` stays below the overflow cap.
    pub fn check_exponent(&self, s_re: f64, context: &'static str) -> Result<()> {
        let exponent = -s_re * if s_re < 0.0 { self.max_duration() } else { 0.0 };
        if exponent > EXP_CAP {
            return Err(Error::Overflow { exponent, context });
        }
        Ok(())
    }

    /// Builds the reusable lattice plan for evaluating `L̂(c + iω, iν)` on `grid`.
    pub fn plan(&self, grid: OmegaGrid) -> LaplaceGridPlan<'_> {
        let sums = UniformFrequencySum::new(&self.durations, -grid.omega_max, grid.step(), grid.points);
        let damping = self.durations.iter().map(|x| (-self.c * x).exp() / self.len() as f64).collect();
        LaplaceGridPlan { xf: self, grid, sums, damping }
    }
}

/// `L̂(c + iω_j, iν)` for all grid frequencies at once.
#[derive(Debug)]
pub struct LaplaceGridPlan<'a> {
    xf: &'a EmpiricalTransform,
    grid: OmegaGrid,
    sums: UniformFrequencySum,
    damping: Vec<f64>,
}

impl LaplaceGridPlan<'_> {
    pub fn grid(&self) -> OmegaGrid {
        self.grid
    }

    pub fn eval(&self, nu: f64) -> Vec<Complex64> {
        let weights: Vec<Complex64> = self
            .damping
            .iter()
            .zip(&self.xf.energies)
            .map(|(d, y)| Complex64::from_polar(*d, -nu * y))
            .collect();
        self.sums.eval(&weights)
    }
}

/// Exact transform of `P'`, used by the diagnostics.
pub trait TransformOracle: Sync {
    fn laplace(&self, s: Complex64, p: Complex64) -> Complex64;

    /// `L(c + iω_j, iν)` on a uniform grid; override for speed.
    fn laplace_grid(&self, c: f64, grid: OmegaGrid, nu: f64) -> Vec<Complex64> {
        (0..grid.points)
            .map(|j| self.laplace(Complex64::new(c, grid.omega(j)), Complex64::new(0.0, nu)))
            .collect()
    }

    /// `E[1(X' ≤ x) e^{λ̃(X' - x)} e^{-iνY'}]`, if the oracle can provide it.
    fn truncated_functional(&self, _x: f64, _lambda_tilde: f64, _nu: f64) -> Option<Complex64> {
        None
    }
}

impl TransformOracle for EmpiricalTransform {
    fn laplace(&self, s: Complex64, p: Complex64) -> Complex64 {
        EmpiricalTransform::laplace(self, s, p)
    }

    fn laplace_grid(&self, c: f64, grid: OmegaGrid, nu: f64) -> Vec<Complex64> {
        if c == self.c {
            self.plan(grid).eval(nu)
        } else {
            let shifted = EmpiricalTransform { durations: self.durations.clone(), energies: self.energies.clone(), c };
            shifted.plan(grid).eval(nu)
        }
    }

    fn truncated_functional(&self, x: f64, lambda_tilde: f64, nu: f64) -> Option<Complex64> {
        Some(truncated_functional(&self.durations, &self.energies, x, lambda_tilde, nu))
    }
}

fn truncated_functional(durations: &[f64], energies: &[f64], x: f64, lambda_tilde: f64, nu: f64) -> Complex64 {
    let mut acc = ComplexSum::new();
    for (&d, &y) in durations.iter().zip(energies) {
        if d <= x {
            acc.add(Complex64::from_polar((lambda_tilde * (d - x)).exp(), -nu * y));
        }
    }
    acc.sum() / durations.len() as f64
}

/// Result of a sup-norm diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    #[serde(rename = "W")]
    pub w: f64,
    pub grid_step: f64,
    pub value: f64,
}

fn symmetric_points(w: f64, grid_step: f64) -> Result<usize> {
    if !(w >= 0.0) || !(grid_step > 0.0) {
        return Err(Error::Config(format!("diagnostic needs W >= 0 and grid_step > 0, got W = {w}, step = {grid_step}")));
    }
    Ok(2 * (w / grid_step).round() as usize + 1)
}

/// Δ̂(W): max over the `(ω, ν)` grid on `[-W, W]²` of `|L(c+iω, iν) - L̂(c+iω, iν)|`.
/// Hermitian symmetry restricts the scan to `ν ≥ 0`.
pub fn delta_diagnostic(xf: &EmpiricalTransform, oracle: &dyn TransformOracle, w: f64, grid_step: f64) -> Result<DiagnosticReport> {
    let points = symmetric_points(w, grid_step)?;
    let half = points / 2;
    let nus: Vec<f64> = (0..=half).map(|k| k as f64 * grid_step).collect();
    let value = if points == 1 {
        let s = Complex64::new(xf.c(), 0.0);
        let zero = Complex64::new(0.0, 0.0);
        (oracle.laplace(s, zero) - xf.laplace(s, zero)).norm()
    } else {
        let grid = OmegaGrid { omega_max: half as f64 * grid_step, points };
        let plan = xf.plan(grid);
        nus.par_iter()
            .map(|&nu| {
                let est = plan.eval(nu);
                let exact = oracle.laplace_grid(xf.c(), grid, nu);
                est.iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max)
    };
    Ok(DiagnosticReport { w, grid_step, value })
}

/// Ê(W; x, λ̃): max over `ν ∈ [-W, W]` of the error in
/// `E[1(X' ≤ x) e^{λ̃(X' - x)} e^{-iνY'}]`.
pub fn e_diagnostic(
    xf: &EmpiricalTransform,
    oracle: &dyn TransformOracle,
    w: f64,
    x: f64,
    lambda_tilde: f64,
    grid_step: f64,
) -> Result<DiagnosticReport> {
    let points = symmetric_points(w, grid_step)?;
    let half = points / 2;
    let mut value: f64 = 0.0;
    for k in 0..=half {
        let nu = k as f64 * grid_step;
        let exact = oracle
            .truncated_functional(x, lambda_tilde, nu)
            .ok_or_else(|| Error::OracleUnavailable("oracle provides no truncated functional".into()))?;
        let est = truncated_functional(&xf.durations, &xf.energies, x, lambda_tilde, nu);
        value = value.max((exact - est).norm());
    }
    Ok(DiagnosticReport { w, grid_step, value })
}
