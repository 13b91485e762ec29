//! Independent oracles and the Monte-Carlo experiment harness.
//!
//! Everything here runs in simulation mode, where the intensity and the mark
//! law are known: direct Monte-Carlo evaluation of `a(x, p)`, the transform
//! identity linking `a` to the busy-period law, reference kernel estimates,
//! the bias/variance split of `m̂ - m`, the MISE study, a KS check of the
//! idle law and a rasterizing cycle extractor.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inversion::{estimate_density, estimate_density_with, synthesize, trapezoid, EstimatorConfig, Kernel, YGrid};
use crate::inversion::{nu_grid, DensityEstimate};
use crate::marks::{Mark, MarkModel};
use crate::simulator::{simulate_cycles, Cycle, CycleSet, PhotonEvent, StopRule};
use crate::sum::{ComplexSum, NeumaierSum};
use crate::transform::{estimate_lambda, EmpiricalTransform};

/// Reference sets smaller than this do not count as a transform oracle.
pub const MIN_REFERENCE_CYCLES: usize = 1_000_000;

/// SplitMix64 finalizer; derives independent seed streams from a base seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fresh i.i.d. marks drawn from `model`.
pub fn sample_marks(model: &MarkModel, n: usize, seed: u64) -> Result<Vec<Mark>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| model.sample(&mut rng)).collect()
}

/// A Monte-Carlo value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McValue {
    pub value: Complex64,
    pub std_error: f64,
}

/// `a(x, p) = exp(λ E[e^{-pY} (x - X)₊])` from `n_mc` fresh marks.
pub fn direct_a(model: &MarkModel, lambda: f64, x: f64, p: Complex64, n_mc: usize, seed: u64) -> Result<McValue> {
    if p.re < 0.0 {
        return Err(Error::Config(format!("direct_a needs Re(p) >= 0, got {p}")));
    }
    if n_mc == 0 {
        return Err(Error::Config("direct_a needs n_mc >= 1".into()));
    }
    let marks = sample_marks(model, n_mc, seed)?;
    let terms: Vec<Complex64> = marks.iter().map(|m| (-p * m.energy).exp() * (x - m.duration).max(0.0)).collect();
    let mean = terms.iter().copied().collect::<ComplexSum>().sum() / n_mc as f64;
    let spread = terms.iter().map(|t| (t - mean).norm_sqr()).collect::<NeumaierSum>().sum();
    let se_inner = if n_mc > 1 { (spread / ((n_mc - 1) * n_mc) as f64).sqrt() } else { 0.0 };
    let value = (lambda * mean).exp();
    Ok(McValue { value, std_error: value.norm() * lambda * se_inner })
}

/// Both sides of `∫₀^∞ e^{-(s+λ)u} (a(u,p) - 1) du = λL(s,p) / ((s+λ)(s+λ-λL(s,p)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformIdentityReport {
    pub s: Complex64,
    pub p: Complex64,
    pub lhs: Complex64,
    pub lhs_se: f64,
    pub rhs: Complex64,
    pub rhs_se: f64,
    pub discrepancy: f64,
    pub relative_discrepancy: f64,
    /// Three combined standard errors.
    pub budget: f64,
}

impl TransformIdentityReport {
    pub fn within(&self, relative: f64) -> bool {
        self.relative_discrepancy < relative
    }
}

const BATCHES: usize = 20;

/// Left side from marks: `(x - X)₊` averages are piecewise linear in `u`, so
/// sorted prefix sums give them exactly; beyond the largest `X` the integrand
/// is an exponential and the tail is integrated in closed form.
fn identity_lhs(marks: &[Mark], lambda: f64, s: Complex64, p: Complex64) -> Complex64 {
    let mut sorted: Vec<(f64, Complex64)> = marks.iter().map(|m| (m.duration, (-p * m.energy).exp())).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len() as f64;
    let u_max = sorted.last().map_or(0.0, |m| m.0);
    let sl = s + lambda;
    let intervals = 20_000;
    let step = u_max / intervals as f64;
    let (mut w, mut wx) = (ComplexSum::new(), ComplexSum::new());
    let mut next = 0;
    let mut acc = ComplexSum::new();
    for k in 0..=intervals {
        let u = step * k as f64;
        while next < sorted.len() && sorted[next].0 <= u {
            w.add(sorted[next].1);
            wx.add(sorted[next].1 * sorted[next].0);
            next += 1;
        }
        let g = (u * w.sum() - wx.sum()) / n;
        let f = (-sl * u).exp() * ((lambda * g).exp() - 1.0);
        let weight = if k == 0 || k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc.add(weight * f);
    }
    let body = if u_max > 0.0 { acc.sum() * step / 3.0 } else { Complex64::new(0.0, 0.0) };
    let alpha = sorted.iter().map(|m| m.1).collect::<ComplexSum>().sum() / n;
    let beta = sorted.iter().map(|m| m.1 * m.0).collect::<ComplexSum>().sum() / n;
    let rate = sl - lambda * alpha;
    let tail = (-lambda * beta - rate * u_max).exp() / rate - (-sl * u_max).exp() / sl;
    body + tail
}

fn identity_rhs(xf: &EmpiricalTransform, lambda: f64, s: Complex64, p: Complex64) -> Complex64 {
    let l = xf.laplace(s, p);
    lambda * l / ((s + lambda) * (s + lambda - lambda * l))
}

fn batch_se<T, F: Fn(&[T]) -> Complex64>(items: &[T], f: F) -> f64 {
    let size = items.len() / BATCHES;
    if size < 2 {
        return f64::NAN;
    }
    let values: Vec<Complex64> = items.chunks_exact(size).take(BATCHES).map(f).collect();
    let mean = values.iter().copied().collect::<ComplexSum>().sum() / BATCHES as f64;
    let ss = values.iter().map(|v| (v - mean).norm_sqr()).collect::<NeumaierSum>().sum();
    (ss / ((BATCHES - 1) * BATCHES) as f64).sqrt()
}

/// Checks the transform identity with two independent pipelines: fresh marks
/// for the left side and simulated cycles for the right side.
pub fn theorem1_check(
    model: &MarkModel,
    lambda: f64,
    s: Complex64,
    p: Complex64,
    n_cycles: usize,
    n_mc: usize,
    seed: u64,
) -> Result<TransformIdentityReport> {
    if !(s.re > 0.0) || p.re < 0.0 {
        return Err(Error::Config(format!("theorem1_check needs Re(s) > 0 and Re(p) >= 0, got s = {s}, p = {p}")));
    }
    let marks = sample_marks(model, n_mc.max(1), derive_seed(seed, 0))?;
    let cycles = simulate_cycles(lambda, model, StopRule::NumCycles(n_cycles.max(1)), derive_seed(seed, 1))?;
    let xf = EmpiricalTransform::new(&cycles, s.re)?;
    let lhs = identity_lhs(&marks, lambda, s, p);
    let rhs = identity_rhs(&xf, lambda, s, p);
    let lhs_se = batch_se(&marks, |chunk| identity_lhs(chunk, lambda, s, p));
    let rhs_se = batch_se(cycles.cycles(), |chunk| {
        let set = CycleSet::from_cycles(chunk.to_vec()).expect("nonempty chunk");
        identity_rhs(&EmpiricalTransform::new(&set, s.re).expect("positive abscissa"), lambda, s, p)
    });
    let discrepancy = (lhs - rhs).norm();
    Ok(TransformIdentityReport {
        s,
        p,
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        discrepancy,
        relative_discrepancy: discrepancy / rhs.norm().max(lhs.norm()).max(f64::MIN_POSITIVE),
        budget: 3.0 * lhs_se.hypot(rhs_se),
    })
}

/// A density on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub y: Vec<f64>,
    pub density: Vec<f64>,
}

impl Spectrum {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.y, &self.density)
    }

    /// Mass on the part of the grid strictly above `y0`.
    pub fn mass_above(&self, y0: f64) -> f64 {
        mass_above(&self.y, &self.density, y0)
    }
}

pub fn mass_above(y: &[f64], f: &[f64], y0: f64) -> f64 {
    let start = y.partition_point(|v| *v <= y0);
    if start >= y.len() {
        return 0.0;
    }
    let lo = start.saturating_sub(1);
    // include the partial cell straddling y0 by linear interpolation
    let mut acc = NeumaierSum::new();
    if start > 0 {
        let t = (y0 - y[lo]) / (y[start] - y[lo]);
        let f0 = f[lo] + t * (f[start] - f[lo]);
        acc.add(0.5 * (f0 + f[start]) * (y[start] - y0));
    }
    acc.add(trapezoid(&y[start..], &f[start..]));
    acc.sum()
}

/// `(nh)⁻¹ Σ K((y - Y_k)/h)` on the grid.
pub fn reference_kde(samples: &[f64], h: f64, kernel: Kernel, y_grid: &YGrid) -> Result<Spectrum> {
    if samples.is_empty() {
        return Err(Error::EmptyStream);
    }
    if !(h > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
    }
    kernel.validate()?;
    y_grid.validate()?;
    let y = y_grid.points();
    let scale = 1.0 / (samples.len() as f64 * h);
    let density = y
        .par_iter()
        .map(|&v| samples.iter().map(|s| kernel.spatial((v - s) / h)).collect::<NeumaierSum>().sum() * scale)
        .collect();
    Ok(Spectrum { y, density })
}

/// `∫ (f - m)²` by the trapezoid rule on the grid of `f`.
pub fn ise(y: &[f64], f: &[f64], model: &MarkModel) -> Result<f64> {
    let sq = y.iter().zip(f).map(|(&v, &e)| Ok((e - model.density(v)?).powi(2))).collect::<Result<Vec<f64>>>()?;
    Ok(trapezoid(y, &sq))
}

/// `φ_m(ν) = ∫ m(y) e^{-iνy} dy` by Simpson's rule on the energy support.
pub fn true_characteristic(model: &MarkModel, nus: &[f64]) -> Result<Vec<Complex64>> {
    let (lo, hi) = model.energy_support().ok_or_else(|| Error::OracleUnavailable(format!("no energy support for {}", model.describe())))?;
    let lo = lo.max(0.0);
    let max_nu = nus.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let intervals = (((hi - lo) * (max_nu + 1.0) * 8.0).ceil() as usize).max(4000) * 2;
    let step = (hi - lo) / intervals as f64;
    let dens = (0..=intervals).map(|k| model.density(lo + step * k as f64)).collect::<Result<Vec<f64>>>()?;
    Ok(nus
        .par_iter()
        .map(|&nu| {
            let mut acc = ComplexSum::new();
            for (k, d) in dens.iter().enumerate() {
                let w = if k == 0 || k == intervals {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc.add(Complex64::from_polar(w * d, -nu * (lo + step * k as f64)));
            }
            acc.sum() * step / 3.0
        })
        .collect())
}

/// L² norms of the error terms, with `b₁ + b₂ + V₁ + V₂ = m̂ - m`:
/// `b₁ = K_h*m - m`, `b₂ = m̃(λ, P') - K_h*m`, `V₁ = m̃(λ̂, P') - m̃(λ, P')`,
/// `V₂ = m̂ - m̃(λ̂, P')`, with `P'` replaced by a large reference cycle set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub lambda: f64,
    pub lambda_hat: f64,
    pub n: usize,
    pub n_reference: usize,
    pub seed: u64,
    pub b1: f64,
    pub b2: f64,
    pub v1: f64,
    pub v2: f64,
    pub total: f64,
    /// `‖b₁ + b₂ + V₁ + V₂ - (m̂ - m)‖₂`.
    pub residual: f64,
    pub relative_residual: f64,
    /// `‖E[K_h(y - Y) 1(X > x)]‖₂` from fresh marks; exactly 0 when `X ≤ x` a.s.
    pub b2_direct: f64,
    /// `‖m̃(λ, P'_A) - m̃(λ, P'_B)‖₂` for two independent reference sets.
    pub oracle_noise: f64,
}

impl DecompositionReport {
    /// `b₂` indistinguishable from zero: direct term vanishes and the
    /// oracle-based term is within twice the reference-to-reference spread.
    pub fn b2_vanishes(&self) -> bool {
        self.b2_direct == 0.0 && self.b2 <= 2.0 * self.oracle_noise
    }
}

fn l2(y: &[f64], f: &[f64]) -> f64 {
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    trapezoid(y, &sq).sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Splits `m̂ - m` for one sample of `n` cycles into smoothing bias,
/// truncation bias and the two fluctuation terms.
pub fn error_decomposition(
    model: &MarkModel,
    lambda: f64,
    cfg: &EstimatorConfig,
    n: usize,
    n_reference: usize,
    seed: u64,
) -> Result<DecompositionReport> {
    if n_reference < MIN_REFERENCE_CYCLES {
        return Err(Error::OracleUnavailable(format!(
            "reference set of {n_reference} cycles is below the oracle minimum {MIN_REFERENCE_CYCLES}"
        )));
    }
    if !model.has_density() {
        return Err(Error::OracleUnavailable(format!("no closed-form density for {}", model.describe())));
    }
    let sample = simulate_cycles(lambda, model, StopRule::NumCycles(n), derive_seed(seed, 0))?;
    let ref_a = simulate_cycles(lambda, model, StopRule::NumCycles(n_reference), derive_seed(seed, 1))?;
    let ref_b = simulate_cycles(lambda, model, StopRule::NumCycles(n_reference), derive_seed(seed, 2))?;
    let grid = cfg.y_grid.unwrap_or_else(|| crate::inversion::default_y_grid(&sample));
    let cfg = EstimatorConfig { y_grid: Some(grid), ..cfg.clone() };

    let lambda_hat = estimate_lambda(&sample)?;
    let m_hat = estimate_density(&sample, &cfg)?;
    let xf_a = EmpiricalTransform::new(&ref_a, cfg.c)?;
    let xf_b = EmpiricalTransform::new(&ref_b, cfg.c)?;
    let tilde_true = estimate_density_with(&xf_a, lambda, &cfg)?;
    let tilde_hat = estimate_density_with(&xf_a, lambda_hat, &cfg)?;
    let tilde_b = estimate_density_with(&xf_b, lambda, &cfg)?;

    let y = m_hat.y.clone();
    let m = y.iter().map(|&v| model.density(v)).collect::<Result<Vec<f64>>>()?;
    let smoothed = smoothed_density(model, &m_hat)?;

    let b1 = diff(&smoothed, &m);
    let b2 = diff(&tilde_true.m_hat, &smoothed);
    let v1 = diff(&tilde_hat.m_hat, &tilde_true.m_hat);
    let v2 = diff(&m_hat.m_hat, &tilde_hat.m_hat);
    let err = diff(&m_hat.m_hat, &m);
    let resid: Vec<f64> = (0..y.len()).map(|k| b1[k] + b2[k] + v1[k] + v2[k] - err[k]).collect();

    let marks = sample_marks(model, n_reference, derive_seed(seed, 3))?;
    let b2_direct = truncation_bias_direct(&marks, cfg.x_trunc, cfg.h, cfg.kernel, &y);

    let total = l2(&y, &err);
    let residual = l2(&y, &resid);
    Ok(DecompositionReport {
        lambda,
        lambda_hat,
        n,
        n_reference,
        seed,
        b1: l2(&y, &b1),
        b2: l2(&y, &b2),
        v1: l2(&y, &v1),
        v2: l2(&y, &v2),
        total,
        residual,
        relative_residual: residual / total.max(f64::MIN_POSITIVE),
        b2_direct: l2(&y, &b2_direct),
        oracle_noise: l2(&y, &diff(&tilde_true.m_hat, &tilde_b.m_hat)),
    })
}

/// `K_h * m` with the frequency grid and synthesis of `est`.
pub fn smoothed_density(model: &MarkModel, est: &DensityEstimate) -> Result<Vec<f64>> {
    let nus = nu_grid(&est.settings);
    let phis = true_characteristic(model, &nus)?;
    Ok(synthesize(&nus, &phis, est.config.kernel, est.config.h, &est.y).0)
}

fn truncation_bias_direct(marks: &[Mark], x: f64, h: f64, kernel: Kernel, y: &[f64]) -> Vec<f64> {
    let tail: Vec<f64> = marks.iter().filter(|m| m.duration > x).map(|m| m.energy).collect();
    let scale = 1.0 / (marks.len() as f64 * h);
    y.par_iter()
        .map(|&v| tail.iter().map(|e| kernel.spatial((v - e) / h)).collect::<NeumaierSum>().sum() * scale)
        .collect()
}

/// The parameter varied by a MISE study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiseAxis {
    N,
    C,
    X,
}

impl std::str::FromStr for MiseAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(MiseAxis::N),
            "c" => Ok(MiseAxis::C),
            "x" => Ok(MiseAxis::X),
            other => Err(Error::Config(format!("unknown MISE axis '{other}', expected n, c or x"))),
        }
    }
}

/// One axis value; `MaxDuration` sets `x` to the largest busy period of each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Fixed(f64),
    MaxDuration(MaxDurationTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxDurationTag {
    MaxDuration,
}

impl AxisValue {
    pub const MAX_DURATION: AxisValue = AxisValue::MaxDuration(MaxDurationTag::MaxDuration);

    pub fn label(&self) -> String {
        match self {
            AxisValue::Fixed(v) => format!("{v}"),
            AxisValue::MaxDuration(_) => "max_duration".into(),
        }
    }
}

impl std::str::FromStr for AxisValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "max" || s == "max_duration" {
            return Ok(AxisValue::MAX_DURATION);
        }
        s.parse::<f64>().map(AxisValue::Fixed).map_err(|_| Error::Config(format!("bad axis value '{s}'")))
    }
}

/// Setup of a MISE study. `n` and `base` are the values held fixed off-axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseStudy {
    pub axis: MiseAxis,
    pub values: Vec<AxisValue>,
    pub lambda: f64,
    pub n: usize,
    pub base: EstimatorConfig,
    pub replicates: usize,
    pub seed: u64,
}

impl MiseStudy {
    /// Seed of replicate `r`; shared across axis values (common random numbers).
    pub fn replicate_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, r as u64)
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.values.is_empty() || self.n == 0 {
            return Err(Error::Config("MISE study needs at least one value, one replicate and n >= 1".into()));
        }
        for v in &self.values {
            match (self.axis, v) {
                (MiseAxis::X, _) => {}
                (_, AxisValue::MaxDuration(_)) => {
                    return Err(Error::Config("max_duration is only valid on the x axis".into()));
                }
                (MiseAxis::N, AxisValue::Fixed(n)) if !(*n >= 1.0 && n.fract() == 0.0) => {
                    return Err(Error::Config(format!("n axis values must be positive integers, got {n}")));
                }
                _ => {}
            }
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    /// Value actually used on the axis (resolves `max_duration`).
    pub axis_value: f64,
    pub ise: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseRow {
    pub value: AxisValue,
    pub replicates: Vec<ReplicateResult>,
    pub mean_ise: f64,
    pub std_error: f64,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseReport {
    pub study: MiseStudy,
    pub model: String,
    pub rows: Vec<MiseRow>,
}

impl MiseReport {
    pub fn mean_ises(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_ise).collect()
    }

    pub fn max_min_ratio(&self) -> f64 {
        let m = self.mean_ises();
        m.iter().copied().fold(f64::NEG_INFINITY, f64::max) / m.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mean ISE strictly decreasing along the listed values.
    pub fn strictly_decreasing(&self) -> bool {
        self.mean_ises().windows(2).all(|w| w[1] < w[0])
    }

    /// CSV with one row per axis value.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["axis", "value", "mean_ise", "std_error", "replicates", "excluded"]).map_err(csv_io)?;
        let axis = match self.study.axis {
            MiseAxis::N => "n",
            MiseAxis::C => "c",
            MiseAxis::X => "x",
        };
        for r in &self.rows {
            w.write_record([
                axis.to_string(),
                r.value.label(),
                format!("{:.6e}", r.mean_ise),
                format!("{:.6e}", r.std_error),
                r.replicates.len().to_string(),
                r.excluded.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn run_replicate(model: &MarkModel, study: &MiseStudy, value: AxisValue, r: usize) -> ReplicateResult {
    let seed = study.replicate_seed(r);
    let mut cfg = study.base.clone();
    let mut n = study.n;
    let mut axis_value = f64::NAN;
    let outcome = (|| -> Result<f64> {
        match (study.axis, value) {
            (MiseAxis::N, AxisValue::Fixed(v)) => n = v as usize,
            (MiseAxis::C, AxisValue::Fixed(v)) => cfg.c = v,
            (MiseAxis::X, AxisValue::Fixed(v)) => cfg.x_trunc = v,
            _ => {}
        }
        let cycles = simulate_cycles(study.lambda, model, StopRule::NumCycles(n), seed)?;
        if let AxisValue::MaxDuration(_) = value {
            cfg.x_trunc = cycles.max_duration();
        }
        axis_value = match study.axis {
            MiseAxis::N => n as f64,
            MiseAxis::C => cfg.c,
            MiseAxis::X => cfg.x_trunc,
        };
        let est = estimate_density(&cycles, &cfg)?;
        ise(&est.y, &est.m_hat, model)
    })();
    match outcome {
        Ok(v) => ReplicateResult { replicate: r, seed, axis_value, ise: Some(v), error: None },
        Err(e) => {
            log::warn!("replicate {r} at {} excluded: {e}", value.label());
            ReplicateResult { replicate: r, seed, axis_value, ise: None, error: Some(e.to_string()) }
        }
    }
}

/// Runs the study; failed replicates are recorded and excluded from the means.
pub fn run_mise_study(model: &MarkModel, study: &MiseStudy) -> Result<MiseReport> {
    study.validate()?;
    if !model.has_density() {
        return Err(Error::OracleUnavailable(format!("no closed-form density for {}", model.describe())));
    }
    let jobs: Vec<(usize, usize)> =
        (0..study.values.len()).flat_map(|v| (0..study.replicates).map(move |r| (v, r))).collect();
    let mut results: Vec<(usize, ReplicateResult)> =
        jobs.par_iter().map(|&(v, r)| (v, run_replicate(model, study, study.values[v], r))).collect();
    results.sort_by_key(|(v, res)| (*v, res.replicate));
    let rows = study
        .values
        .iter()
        .enumerate()
        .map(|(v, &value)| {
            let replicates: Vec<ReplicateResult> =
                results.iter().filter(|(k, _)| *k == v).map(|(_, res)| res.clone()).collect();
            let ises: Vec<f64> = replicates.iter().filter_map(|r| r.ise).collect();
            let k = ises.len();
            let (mean_ise, std_error) = if k == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let mean = crate::sum::mean(&ises);
                let ss = ises.iter().map(|i| (i - mean).powi(2)).collect::<NeumaierSum>().sum();
                (mean, if k > 1 { (ss / ((k - 1) * k) as f64).sqrt() } else { 0.0 })
            };
            MiseRow { value, excluded: replicates.len() - k, replicates, mean_ise, std_error }
        })
        .collect();
    Ok(MiseReport { study: study.clone(), model: model.describe(), rows })
}

/// One-sample Kolmogorov–Smirnov test of the idle periods against `Exp(rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub n: usize,
    pub rate: f64,
    pub statistic: f64,
    /// Asymptotic 1% critical value `1.628/√n`.
    pub critical_1pct: f64,
}

impl KsReport {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_1pct
    }
}

pub fn ks_exponential(samples: &[f64], rate: f64) -> Result<KsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = -(-rate * v).exp_m1();
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(KsReport { n: sorted.len(), rate, statistic, critical_1pct: 1.628 / n.sqrt() })
}

pub fn idle_ks_check(cycles: &CycleSet) -> Result<KsReport> {
    let rate = estimate_lambda(cycles)?;
    ks_exponential(&cycles.idles().collect::<Vec<_>>(), rate)
}

/// Random stream on the integer lattice: integer arrivals, durations and
/// energies, so that every cycle quantity is exact in floating point.
pub fn lattice_stream(seed: u64, max_photons: usize) -> Vec<PhotonEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(1..=max_photons.max(1));
    let mut t = 0.0;
    (0..count)
        .map(|_| {
            t += rng.gen_range(1..=12) as f64;
            PhotonEvent { arrival: t, duration: rng.gen_range(1..=10) as f64, energy: rng.gen_range(1..=1000) as f64 }
        })
        .collect()
}

/// Brute-force cycle extraction for lattice streams: each pulse switches on
/// the unit cells `[T, T + X)`, busy periods are maximal runs of switched-on
/// cells, and a photon belongs to the run containing its arrival cell.
pub fn raster_cycles(events: &[PhotonEvent]) -> Result<Vec<Cycle>> {
    if events.is_empty() {
        return Err(Error::EmptyStream);
    }
    let on_lattice = |v: f64| v >= 0.0 && v.fract() == 0.0 && v < 1e9;
    if !events.iter().all(|e| on_lattice(e.arrival) && on_lattice(e.duration) && e.duration >= 1.0) {
        return Err(Error::InvalidEvents("raster oracle needs integer arrivals and durations".into()));
    }
    let horizon = events.iter().map(|e| (e.arrival + e.duration) as usize).max().unwrap_or(0);
    let mut on = vec![false; horizon];
    let mut energy_at = vec![0.0; horizon];
    for e in events {
        let t = e.arrival as usize;
        on[t..t + e.duration as usize].iter_mut().for_each(|c| *c = true);
        energy_at[t] += e.energy;
    }
    let mut cycles = Vec::new();
    let mut last_end = 0usize;
    let mut k = 0;
    while k < horizon {
        if !on[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < horizon && on[k] {
            k += 1;
        }
        let energy = energy_at[start..k].iter().sum();
        cycles.push(Cycle { idle: (start - last_end) as f64, duration: (k - start) as f64, energy });
        last_end = k;
    }
    Ok(cycles)
}
