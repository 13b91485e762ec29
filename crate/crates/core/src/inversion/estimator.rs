//! The plug-in estimator of the energy density.
//!
//! For each frequency ν the Bromwich integrals defining `â` and `Î₂` are
//! evaluated on the line `Re s = c`. Their integrands carry two poles close
//! to that line: the zero `s₀(ν)` of `D(s) = s + λ - λL(s, iν)` (at the origin
//! when ν = 0) and `s = -λ`. Both are removed analytically with smoothed pole
//! terms whose inverse transforms are known in closed form; Simpson's rule
//! only sees the regular remainder.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inversion::config::{EstimatorConfig, ResolvedSettings, YGrid};
use crate::inversion::kernel::Kernel;
use crate::simulator::CycleSet;
use crate::sum::{ComplexSum, NeumaierSum};
use crate::transform::{estimate_lambda, EmpiricalTransform, LaplaceGridPlan, OmegaGrid, EXP_CAP};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Run-level numerical diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    /// Smallest pole-deflated denominator seen on the ω grid.
    pub min_denominator: f64,
    pub denominator_floor: f64,
    /// Largest ω-truncation bound over the ν grid, on the scale of `â`/`Î₂`.
    pub max_tail_bound: f64,
    /// Max imaginary residual of the ν synthesis relative to `max |m̂|`.
    pub imag_residual: f64,
    pub taylor_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub y: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub config: EstimatorConfig,
    pub settings: ResolvedSettings,
    pub lambda_hat: f64,
    pub n_cycles: usize,
    pub diagnostics: EstimateDiagnostics,
}

impl DensityEstimate {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.y, &self.m_hat)
    }

    /// Clips negative values and renormalizes to unit mass on the grid.
    pub fn project(&mut self) -> Result<()> {
        self.m_hat.iter_mut().for_each(|m| *m = m.max(0.0));
        let mass = self.integral();
        if !(mass > 0.0) {
            return Err(Error::NanDetected { nu: 0.0 });
        }
        self.m_hat.iter_mut().for_each(|m| *m /= mass);
        Ok(())
    }
}

pub fn trapezoid(y: &[f64], f: &[f64]) -> f64 {
    let mut acc = NeumaierSum::new();
    for k in 1..y.len() {
        acc.add(0.5 * (f[k] + f[k - 1]) * (y[k] - y[k - 1]));
    }
    acc.sum()
}

/// Spectral quantities at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub nu: f64,
    pub a_hat: Complex64,
    pub i1_hat: Complex64,
    pub i2_hat: Complex64,
    pub min_denominator: f64,
    pub tail_bound: f64,
}

impl SpectralPoint {
    pub fn ratio(&self) -> Complex64 {
        (self.i1_hat + self.i2_hat) / self.a_hat
    }

    fn conj(&self) -> Self {
        Self {
            nu: -self.nu,
            a_hat: self.a_hat.conj(),
            i1_hat: self.i1_hat.conj(),
            i2_hat: self.i2_hat.conj(),
            ..*self
        }
    }
}

/// `c κ² / ((s-q)(s-q+κ)²)`, inverse `c e^{qt}(1 - e^{-κt}(1 + κt))`.
fn simple_pole(s: Complex64, q: Complex64, c: Complex64, kappa: f64) -> Complex64 {
    let d = s - q;
    c * kappa * kappa / (d * (d + kappa) * (d + kappa))
}

fn simple_pole_inverse(t: f64, q: Complex64, c: Complex64, kappa: f64) -> Complex64 {
    let decay = (-kappa * t).exp() * (1.0 + kappa * t);
    c * (q * t).exp() * (1.0 - decay)
}

/// `c [1/(s-q)² - 1/(s-q+κ)²]`, inverse `c t (e^{qt} - e^{(q-κ)t})`.
fn double_pole(s: Complex64, q: Complex64, c: Complex64, kappa: f64) -> Complex64 {
    let d = s - q;
    c * (1.0 / (d * d) - 1.0 / ((d + kappa) * (d + kappa)))
}

fn double_pole_inverse(t: f64, q: Complex64, c: Complex64, kappa: f64) -> Complex64 {
    c * t * (q * t).exp() * (1.0 - (-kappa * t).exp())
}

/// Evaluates `â`, `Î₁`, `Î₂` at arbitrary ν for a fixed transform and λ.
pub struct Inverter<'a> {
    xf: &'a EmpiricalTransform,
    lambda: f64,
    x: f64,
    settings: ResolvedSettings,
    plan: LaplaceGridPlan<'a>,
}

impl<'a> Inverter<'a> {
    pub fn new(xf: &'a EmpiricalTransform, lambda: f64, x: f64, settings: ResolvedSettings) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        if !(x >= 0.0) {
            return Err(Error::Config(format!("truncation bound must be nonnegative, got {x}")));
        }
        let exponent = lambda * xf.max_duration();
        if exponent > EXP_CAP {
            return Err(Error::Overflow { exponent, context: "exp(lambda X') in the estimator sums" });
        }
        if (lambda + xf.c()) * x > EXP_CAP {
            return Err(Error::Overflow { exponent: (lambda + xf.c()) * x, context: "exp((lambda + c) x)" });
        }
        let grid = OmegaGrid { omega_max: settings.omega_max, points: settings.omega_points };
        Ok(Self { xf, lambda, x, settings, plan: xf.plan(grid) })
    }

    pub fn settings(&self) -> &ResolvedSettings {
        &self.settings
    }

    fn denominator(&self, s: Complex64, nu: f64) -> (Complex64, Complex64, Complex64) {
        let (l, lx, ly) = self.xf.laplace_moments(s, Complex64::new(0.0, nu));
        let d = s + self.lambda - self.lambda * l;
        let ds = 1.0 + self.lambda * lx;
        // ∂D/∂ν = iλ E[Y' e]
        let dnu = I * self.lambda * ly;
        (d, ds, dnu)
    }

    /// Newton iteration for `D(·, iν) = 0`, abandoned once it leaves the disc
    /// of radius `radius` around the guess.
    fn newton(&self, nu: f64, guess: Complex64, radius: f64) -> Option<Complex64> {
        let mut s = guess;
        for _ in 0..40 {
            let (d, ds, _) = self.denominator(s, nu);
            let step = d / ds;
            s -= step;
            if !(s.re.is_finite() && s.im.is_finite()) || (s - guess).norm() > radius || s.re * self.xf.max_duration() < -EXP_CAP {
                return None;
            }
            if step.norm() <= 1e-10 * (1.0 + s.norm()) {
                return Some(s);
            }
        }
        None
    }

    /// Continues the root of `D(·, iν)` from `(nu0, s0)` to `nu1` with an
    /// Euler predictor and Newton corrector, halving the step on failure.
    /// Any root is admissible for the pole subtraction; continuity only keeps
    /// the subtracted pole near the contour.
    fn continue_root(&self, nu0: f64, s0: Complex64, nu1: f64, depth: u32) -> Result<Complex64> {
        let (_, ds, dnu) = self.denominator(s0, nu0);
        let step = (nu1 - nu0) * dnu / ds;
        let predicted = s0 - step;
        // the corrector may move the root by at most the predicted displacement
        let tol = (0.25 * (self.xf.c() + self.lambda)).max(step.norm());
        if let Some(s) = self.newton(nu1, predicted, tol) {
            return Ok(s);
        }
        if depth >= 30 {
            return Err(Error::NanDetected { nu: nu1 });
        }
        let mid = 0.5 * (nu0 + nu1);
        let s_mid = self.continue_root(nu0, s0, mid, depth + 1)?;
        self.continue_root(mid, s_mid, nu1, depth + 1)
    }

    /// Roots `s₀(ν)` along an increasing grid of nonnegative frequencies.
    pub fn track_roots(&self, nus: &[f64]) -> Result<Vec<Complex64>> {
        let mut roots = Vec::with_capacity(nus.len());
        let (mut nu_prev, mut s_prev) = (0.0, Complex64::new(0.0, 0.0));
        let mut before: Option<(f64, Complex64)> = None;
        for &nu in nus {
            assert!(nu >= nu_prev);
            let s = if nu == nu_prev {
                s_prev
            } else {
                // secant predictor from the last two roots, Euler continuation as fallback
                let secant = before.and_then(|(nu_b, s_b)| {
                    let slope = (s_prev - s_b) / (nu_prev - nu_b);
                    let predicted = s_prev + slope * (nu - nu_prev);
                    let tol = (0.25 * (self.xf.c() + self.lambda)).max((slope * (nu - nu_prev)).norm());
                    self.newton(nu, predicted, tol)
                });
                match secant {
                    Some(s) => s,
                    None => self.continue_root(nu_prev, s_prev, nu, 0)?,
                }
            };
            if nu > nu_prev {
                before = Some((nu_prev, s_prev));
            }
            roots.push(s);
            nu_prev = nu;
            s_prev = s;
        }
        Ok(roots)
    }

    /// `â`, `Î₁`, `Î₂` at `nu ≥ 0` given the tracked root `s0`.
    pub fn evaluate(&self, nu: f64, s0: Complex64) -> Result<SpectralPoint> {
        let lambda = self.lambda;
        let c = self.xf.c();
        let x = self.x;
        let kappa = self.settings.kappa;
        let (_, d_s0, _) = self.denominator(s0, nu);

        // sums at s = -λ: L(-λ), L'(-λ), and the closed-form A₁ / Î₁ parts
        let (mut lm, mut lpm, mut i1, mut a1) = (ComplexSum::new(), ComplexSum::new(), ComplexSum::new(), ComplexSum::new());
        for (&d, &y) in self.xf.durations().iter().zip(self.xf.energies()) {
            let e = Complex64::from_polar((lambda * d).exp(), -nu * y);
            lm.add(e);
            lpm.add(-d * e);
            if d <= x {
                i1.add(e);
                a1.add((x - d) * e);
            }
        }
        let n = self.xf.len() as f64;
        let (lm, lpm, i1, a1) = (lm.sum() / n, lpm.sum() / n, i1.sum() / n, a1.sum() / n);

        let q = Complex64::new(-lambda, 0.0);
        let r_a = 1.0 / d_s0;
        let c1_a = -(1.0 + lambda * lpm);
        let c2_a = -lambda * lm;
        let r_b = (s0 + lambda) / (lambda * d_s0);
        let c1_b = -lm;

        let laplace = self.plan.eval(nu);
        let grid = self.plan.grid();
        let step = grid.step();
        let points = grid.points;
        let (mut sum_a, mut sum_b) = (ComplexSum::new(), ComplexSum::new());
        let (mut tail_a, mut tail_b): (f64, f64) = (0.0, 0.0);
        let mut min_den = f64::INFINITY;
        let margin = c + lambda;
        for (j, &l) in laplace.iter().enumerate() {
            let omega = grid.omega(j);
            let s = Complex64::new(c, omega);
            let sl = s + lambda;
            let den = sl - lambda * l;
            let dist = (s - s0).norm();
            min_den = min_den.min(den.norm() * (dist + margin) / dist);
            let f_a = (lambda * l) * (lambda * l) / (sl * sl * den);
            let f_b = lambda * l * l / (sl * den);
            let p_a = simple_pole(s, s0, r_a, kappa) + simple_pole(s, q, c1_a, kappa) + double_pole(s, q, c2_a, kappa);
            let p_b = simple_pole(s, s0, r_b, kappa) + simple_pole(s, q, c1_b, kappa);
            let phase = Complex64::from_polar(1.0, omega * x);
            let (rem_a, rem_b) = ((f_a - p_a) * phase, (f_b - p_b) * phase);
            let w = if j == 0 || j == points - 1 {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum_a.add(w * rem_a);
            sum_b.add(w * rem_b);
            if omega.abs() >= 0.1 * grid.omega_max {
                tail_a = tail_a.max(rem_a.norm() * omega.abs().powi(3));
                tail_b = tail_b.max(rem_b.norm() * omega.abs().powi(2));
            }
        }
        let scale = (c * x).exp() / (2.0 * PI) * step / 3.0;
        let inv_a = sum_a.sum() * scale
            + simple_pole_inverse(x, s0, r_a, kappa)
            + simple_pole_inverse(x, q, c1_a, kappa)
            + double_pole_inverse(x, q, c2_a, kappa);
        let inv_b = sum_b.sum() * scale + simple_pole_inverse(x, s0, r_b, kappa) + simple_pole_inverse(x, q, c1_b, kappa);
        let growth = (lambda * x).exp();
        let a_hat = 1.0 + lambda * a1 + growth * inv_a;
        let i2_hat = growth * inv_b;
        let omega_max = grid.omega_max;
        let tail_bound = growth * (c * x).exp() / (2.0 * PI) * (tail_a / omega_max.powi(2) + 2.0 * tail_b / omega_max);
        if ![a_hat, i1, i2_hat].iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NanDetected { nu });
        }
        Ok(SpectralPoint { nu, a_hat, i1_hat: i1, i2_hat, min_denominator: min_den, tail_bound })
    }

    /// Spectral point at any real ν (negative ν by Hermitian conjugation).
    pub fn at(&self, nu: f64) -> Result<SpectralPoint> {
        let target = nu.abs();
        // approach the target in steps short enough for the predictor
        let steps = (target / 0.01).ceil().max(1.0) as usize;
        let path: Vec<f64> = (1..=steps).map(|k| target * k as f64 / steps as f64).collect();
        let s0 = *self.track_roots(&path)?.last().unwrap();
        let point = self.evaluate(target, s0)?;
        self.guard(&point)?;
        Ok(if nu < 0.0 { point.conj() } else { point })
    }

    fn guard(&self, point: &SpectralPoint) -> Result<()> {
        if point.min_denominator < self.settings.denominator_floor {
            return Err(Error::DenominatorFloor {
                nu: point.nu,
                min: point.min_denominator,
                floor: self.settings.denominator_floor,
            });
        }
        Ok(())
    }
}

fn settings_for(xf: &EmpiricalTransform, lambda: f64, x: f64, cfg: &EstimatorConfig) -> Result<ResolvedSettings> {
    let max_energy = xf.energies().iter().copied().fold(0.0, f64::max);
    let cfg = EstimatorConfig { c: xf.c(), x_trunc: x.max(f64::MIN_POSITIVE), ..cfg.clone() };
    cfg.resolve(lambda, x, xf.max_duration(), max_energy)
}

/// `â(x, iν)`.
pub fn a_hat(xf: &EmpiricalTransform, lambda_hat: f64, x: f64, nu: f64, cfg: &EstimatorConfig) -> Result<Complex64> {
    let settings = settings_for(xf, lambda_hat, x, cfg)?;
    Ok(Inverter::new(xf, lambda_hat, x, settings)?.at(nu)?.a_hat)
}

/// `Î₂(x, iν)`.
pub fn i2_hat(xf: &EmpiricalTransform, lambda_hat: f64, x: f64, nu: f64, cfg: &EstimatorConfig) -> Result<Complex64> {
    let settings = settings_for(xf, lambda_hat, x, cfg)?;
    Ok(Inverter::new(xf, lambda_hat, x, settings)?.at(nu)?.i2_hat)
}

/// `Î₁(x, iν) = n⁻¹ Σ 1(X'_k ≤ x) exp(λ̂ X'_k - iν Y'_k)`.
pub fn i1_hat(cycles: &CycleSet, lambda_hat: f64, x: f64, nu: f64) -> Result<Complex64> {
    let mut acc = ComplexSum::new();
    for c in cycles.cycles() {
        if c.duration <= x {
            let exponent = lambda_hat * c.duration;
            if exponent > EXP_CAP {
                return Err(Error::Overflow { exponent, context: "exp(lambda X') in I1" });
            }
            acc.add(Complex64::from_polar(exponent.exp(), -nu * c.energy));
        }
    }
    Ok(acc.sum() / cycles.len() as f64)
}

/// Frequencies `ν_k = k ν_max / K`, `k = 0..=K`.
pub fn nu_grid(settings: &ResolvedSettings) -> Vec<f64> {
    let k = settings.nu_intervals;
    (0..=k).map(|j| settings.nu_max * j as f64 / k as f64).collect()
}

/// `(1/2π) ∫ φ(ν) K*(hν) e^{iνy} dν` over `[-ν_max, ν_max]` by the trapezoid
/// rule, with `φ(-ν) = conj φ(ν)`. Returns the real part and the max
/// imaginary residual.
pub fn synthesize(nus: &[f64], phis: &[Complex64], kernel: Kernel, h: f64, ys: &[f64]) -> (Vec<f64>, f64) {
    let k = nus.len() - 1;
    let dnu = nus[1] - nus[0];
    let weighted: Vec<Complex64> = nus
        .iter()
        .zip(phis)
        .enumerate()
        .map(|(j, (&nu, &phi))| {
            let w = if j == k { 0.5 } else { 1.0 };
            phi * kernel.fourier(h * nu) * w
        })
        .collect();
    let results: Vec<(f64, f64)> = ys
        .par_iter()
        .map(|&y| {
            let mut re = NeumaierSum::new();
            let mut im = NeumaierSum::new();
            // ν = 0 appears once
            re.add(weighted[0].re);
            im.add(weighted[0].im);
            for j in 1..=k {
                let e = Complex64::from_polar(1.0, nus[j] * y);
                let pos = weighted[j] * e;
                let neg = weighted[j].conj() * e.conj();
                re.add(pos.re + neg.re);
                im.add(pos.im + neg.im);
            }
            (re.sum() * dnu / (2.0 * PI), im.sum() * dnu / (2.0 * PI))
        })
        .collect();
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let imag = results.iter().fold(0.0f64, |m, r| m.max(r.1.abs())) / peak;
    (values, imag)
}

/// Spectral points on the run's ν grid.
pub fn spectral_points(inv: &Inverter<'_>, nus: &[f64]) -> Result<Vec<SpectralPoint>> {
    let roots = inv.track_roots(nus)?;
    let points: Vec<SpectralPoint> =
        nus.par_iter().zip(roots.par_iter()).map(|(&nu, &s0)| inv.evaluate(nu, s0)).collect::<Result<_>>()?;
    for p in &points {
        inv.guard(p)?;
    }
    Ok(points)
}

/// The estimator with externally supplied `λ` and transform (the cycles behind
/// `xf` also provide `Î₁`).
pub fn estimate_density_with(xf: &EmpiricalTransform, lambda: f64, cfg: &EstimatorConfig) -> Result<DensityEstimate> {
    if (xf.c() - cfg.c).abs() > 0.0 {
        return Err(Error::Config(format!("transform built with c = {}, config has c = {}", xf.c(), cfg.c)));
    }
    let max_energy = xf.energies().iter().copied().fold(0.0, f64::max);
    let settings = cfg.resolve(lambda, cfg.x_trunc, xf.max_duration(), max_energy)?;
    let inv = Inverter::new(xf, lambda, cfg.x_trunc, settings)?;
    let nus = nu_grid(&settings);
    let points = spectral_points(&inv, &nus)?;
    let mut phis = Vec::with_capacity(points.len());
    for p in &points {
        let phi = p.ratio();
        if !(phi.re.is_finite() && phi.im.is_finite()) {
            return Err(Error::NanDetected { nu: p.nu });
        }
        phis.push(phi);
    }
    let ys = settings.y_grid.points();
    let (m_hat, imag_residual) = synthesize(&nus, &phis, cfg.kernel, cfg.h, &ys);
    let diagnostics = EstimateDiagnostics {
        min_denominator: points.iter().map(|p| p.min_denominator).fold(f64::INFINITY, f64::min),
        denominator_floor: settings.denominator_floor,
        max_tail_bound: points.iter().map(|p| p.tail_bound).fold(0.0, f64::max),
        imag_residual,
        taylor_order: 0,
    };
    Ok(DensityEstimate {
        y: ys,
        m_hat,
        config: cfg.clone(),
        settings,
        lambda_hat: lambda,
        n_cycles: xf.len(),
        diagnostics,
    })
}

/// `m̂` from cycles: `λ̂` from the idle periods, `L̂` and `Î₁` from the busy periods.
pub fn estimate_density(cycles: &CycleSet, cfg: &EstimatorConfig) -> Result<DensityEstimate> {
    cfg.validate()?;
    let lambda = estimate_lambda(cycles)?;
    let xf = EmpiricalTransform::new(cycles, cfg.c)?;
    estimate_density_with(&xf, lambda, cfg)
}

/// Grid used by `estimate_density` when the configuration leaves it open.
pub fn default_y_grid(cycles: &CycleSet) -> YGrid {
    YGrid { min: 0.0, max: cycles.energies().fold(0.0, f64::max), count: 1024 }
}
