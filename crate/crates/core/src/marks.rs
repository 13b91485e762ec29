//! Joint law of the photon marks (pulse duration `X`, pulse energy `Y`).
//!
//! Every built-in model exposes a seeded sampler, the marginal density of `Y`
//! and the first moments of `X` and `Y`. Truncated Gaussians are sampled by
//! inverse CDF so draws are rejection-free and bit-reproducible per seed.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp, Gamma};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 - Φ(z)`, accurate for large `z`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Normal quantile, Wichura's AS 241 (PPND16), relative accuracy about 1e-16.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_049e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Gaussian `N(mean, std²)` restricted to `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGaussian {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
    // standardized bounds and retained mass, cached at construction
    alpha: f64,
    beta: f64,
    mass: f64,
}

impl TruncatedGaussian {
    pub fn new(mean: f64, std: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::Config(format!("truncated gaussian std must be positive, got {std}")));
        }
        if !(lower < upper) || !mean.is_finite() {
            return Err(Error::Config(format!(
                "truncated gaussian needs lower < upper, got [{lower}, {upper}]"
            )));
        }
        let alpha = (lower - mean) / std;
        let beta = (upper - mean) / std;
        let mass = if alpha > 0.0 {
            normal_sf(alpha) - normal_sf(beta)
        } else {
            normal_cdf(beta) - normal_cdf(alpha)
        };
        if !(mass > 0.0) {
            return Err(Error::Config(format!(
                "truncation interval [{lower}, {upper}] carries no mass for N({mean}, {std}^2)"
            )));
        }
        Ok(Self { mean, std, lower, upper, alpha, beta, mass })
    }

    /// Truncation to `[0, mean + 10 std]`: the positive half-line with a finite
    /// upper support bound. The discarded upper mass is below 1e-23.
    pub fn positive(mean: f64, std: f64) -> Result<Self> {
        Self::new(mean, std, 0.0, mean + 10.0 * std)
    }

    pub fn pdf(&self, v: f64) -> f64 {
        if v < self.lower || v > self.upper {
            return 0.0;
        }
        let d = normal_pdf((v - self.mean) / self.std) / (self.std * self.mass);
        if d < f64::MIN_POSITIVE {
            0.0
        } else {
            d
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= self.lower {
            return 0.0;
        }
        if v >= self.upper {
            return 1.0;
        }
        let z = (v - self.mean) / self.std;
        if self.alpha > 0.0 {
            (normal_sf(self.alpha) - normal_sf(z)) / self.mass
        } else {
            (normal_cdf(z) - normal_cdf(self.alpha)) / self.mass
        }
    }

    pub fn mean_value(&self) -> f64 {
        self.mean + self.std * (normal_pdf(self.alpha) - normal_pdf(self.beta)) / self.mass
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        // Work in the tail that keeps precision: mirror when the interval
        // lies in the upper half.
        let z = if self.alpha > 0.0 {
            let lo = normal_sf(self.alpha);
            let hi = normal_sf(self.beta);
            -normal_quantile(lo - u * (lo - hi))
        } else {
            let lo = normal_cdf(self.alpha);
            let hi = normal_cdf(self.beta);
            normal_quantile(lo + u * (hi - lo))
        };
        (self.mean + self.std * z).clamp(self.lower, self.upper)
    }
}

/// Finite mixture of truncated Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<(f64, TruncatedGaussian)>,
}

impl GaussianMixture {
    pub fn new(components: Vec<(f64, TruncatedGaussian)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        if components.iter().any(|(w, _)| !(*w > 0.0)) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        Ok(Self { components: components.into_iter().map(|(w, g)| (w / total, g)).collect() })
    }

    pub fn components(&self) -> &[(f64, TruncatedGaussian)] {
        &self.components
    }

    pub fn pdf(&self, v: f64) -> f64 {
        self.components.iter().map(|(w, g)| w * g.pdf(v)).sum()
    }

    pub fn mean_value(&self) -> f64 {
        self.components.iter().map(|(w, g)| w * g.mean_value()).sum()
    }

    pub fn support(&self) -> (f64, f64) {
        let lo = self.components.iter().map(|(_, g)| g.lower).fold(f64::INFINITY, f64::min);
        let hi = self.components.iter().map(|(_, g)| g.upper).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (w, g) in &self.components {
            acc += w;
            if u < acc {
                return g.sample(rng);
            }
        }
        self.components[self.components.len() - 1].1.sample(rng)
    }
}

/// Piecewise-linear density read from a `y,density` table, renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    ys: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if ys.len() < 2 || ys.len() != values.len() {
            return Err(Error::Config("tabulated density needs at least two (y, density) rows".into()));
        }
        if ys.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("tabulated density grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("tabulated density values must be finite and nonnegative".into()));
        }
        if ys[0] < 0.0 {
            return Err(Error::Config("tabulated density must live on the positive half-line".into()));
        }
        let mut cumulative = Vec::with_capacity(ys.len());
        cumulative.push(0.0);
        for k in 1..ys.len() {
            let area = 0.5 * (values[k] + values[k - 1]) * (ys[k] - ys[k - 1]);
            cumulative.push(cumulative[k - 1] + area);
        }
        let total = *cumulative.last().unwrap();
        if !(total > 0.0) {
            return Err(Error::Config("tabulated density has zero mass".into()));
        }
        let values = values.into_iter().map(|v| v / total).collect();
        let cumulative = cumulative.into_iter().map(|c| c / total).collect();
        Ok(Self { ys, values, cumulative })
    }

    /// Reads the two-column CSV format `y,density` (header required).
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut ys = Vec::new();
        let mut values = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim().replace(' ', "") == "y,density" => {}
            Some((_, header)) => {
                return Err(Error::Parse { line: 1, message: format!("expected header `y,density`, got `{header}`") })
            }
            None => return Err(Error::Parse { line: 1, message: "empty density file".into() }),
        }
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |f: Option<&str>| -> Result<f64> {
                f.map(str::trim)
                    .ok_or_else(|| Error::Parse { line: line_no, message: "expected two fields".into() })?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })
            };
            let y = parse(fields.next())?;
            let d = parse(fields.next())?;
            if fields.next().is_some() {
                return Err(Error::Parse { line: line_no, message: "expected two fields".into() });
            }
            if d < 0.0 {
                return Err(Error::Parse { line: line_no, message: "negative density".into() });
            }
            if let Some(&last) = ys.last() {
                if !(y > last) {
                    return Err(Error::Parse { line: line_no, message: "y must be strictly increasing".into() });
                }
            }
            ys.push(y);
            values.push(d);
        }
        Self::new(ys, values)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.ys[0], self.ys[self.ys.len() - 1])
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let (lo, hi) = self.support();
        if y < lo || y > hi {
            return 0.0;
        }
        let k = self.ys.partition_point(|&g| g <= y).clamp(1, self.ys.len() - 1);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        let t = (y - y0) / (y1 - y0);
        self.values[k - 1] + t * (self.values[k] - self.values[k - 1])
    }

    pub fn mean_value(&self) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.ys.len() {
            let (y0, y1) = (self.ys[k - 1], self.ys[k]);
            let (f0, f1) = (self.values[k - 1], self.values[k]);
            acc += (y1 - y0) / 6.0 * (f0 * (2.0 * y0 + y1) + f1 * (y0 + 2.0 * y1));
        }
        acc
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let k = self.cumulative.partition_point(|&c| c <= u).clamp(1, self.ys.len() - 1);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        let (f0, f1) = (self.values[k - 1], self.values[k]);
        let width = y1 - y0;
        let rem = u - self.cumulative[k - 1];
        let slope_half = (f1 - f0) / (2.0 * width);
        let disc = (f0 * f0 + 4.0 * slope_half * rem).max(0.0);
        let denom = f0 + disc.sqrt();
        let d = if denom > 0.0 { 2.0 * rem / denom } else { 0.0 };
        (y0 + d).clamp(y0, y1)
    }
}

/// Law of the photon energy used by the conditional-Gamma model.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyMarginal {
    Mixture(GaussianMixture),
    Tabulated(TabulatedDensity),
}

impl EnergyMarginal {
    pub fn pdf(&self, y: f64) -> f64 {
        match self {
            EnergyMarginal::Mixture(m) => m.pdf(y),
            EnergyMarginal::Tabulated(t) => t.pdf(y),
        }
    }

    pub fn mean_value(&self) -> f64 {
        match self {
            EnergyMarginal::Mixture(m) => m.mean_value(),
            EnergyMarginal::Tabulated(t) => t.mean_value(),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            EnergyMarginal::Mixture(m) => m.support(),
            EnergyMarginal::Tabulated(t) => t.support(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            EnergyMarginal::Mixture(m) => m.sample(rng),
            EnergyMarginal::Tabulated(t) => t.sample(rng),
        }
    }
}

/// The energy law `0.6 N(100, 6) + 0.4 N(130, 9)`, each component truncated.
pub fn bimodal_energy() -> GaussianMixture {
    GaussianMixture::new(vec![
        (0.6, TruncatedGaussian::positive(100.0, 6.0).expect("valid component")),
        (0.4, TruncatedGaussian::positive(130.0, 9.0).expect("valid component")),
    ])
    .expect("valid mixture")
}

/// Independent duration `X ~ N(20, 3)` and bimodal energy.
#[derive(Debug, Clone, PartialEq)]
pub struct BimodalModel {
    pub duration: TruncatedGaussian,
    pub energy: GaussianMixture,
}

/// `Y ~ m`, then `X | Y = y ~ Gamma(2 + y/1024, 1)` truncated to `(0, 4 + y/2048]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGammaModel {
    pub marginal: EnergyMarginal,
}

impl ConditionalGammaModel {
    pub fn shape(y: f64) -> f64 {
        2.0 + y / 1024.0
    }

    pub fn truncation(y: f64) -> f64 {
        4.0 + y / 2048.0
    }

    /// Probability that the untruncated Gamma lands inside the truncation
    /// interval, i.e. the rejection sampler's acceptance rate.
    pub fn acceptance(y: f64) -> f64 {
        gamma_lr(Self::shape(y), Self::truncation(y))
    }

    /// `E[X | Y = y]` for the truncated Gamma.
    pub fn conditional_mean(y: f64) -> f64 {
        let k = Self::shape(y);
        let t = Self::truncation(y);
        k * gamma_lr(k + 1.0, t) / gamma_lr(k, t)
    }

    pub fn sample_duration<R: Rng + ?Sized>(y: f64, rng: &mut R) -> Result<f64> {
        let acceptance = Self::acceptance(y);
        if !(acceptance >= 1e-6) {
            return Err(Error::RejectionStall { rate: acceptance });
        }
        let gamma = Gamma::new(Self::shape(y), 1.0).map_err(|e| Error::Config(e.to_string()))?;
        let t = Self::truncation(y);
        loop {
            let x: f64 = gamma.sample(rng);
            if x > 0.0 && x <= t {
                return Ok(x);
            }
        }
    }
}

/// Positive service-time law for the M/G/∞ special case (`Y = X`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceDist {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Gamma { shape: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
}

impl ServiceDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ServiceDist::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            ServiceDist::Deterministic { value } => value > 0.0 && value.is_finite(),
            ServiceDist::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
            ServiceDist::Uniform { low, high } => low >= 0.0 && high > low && high.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("service distribution {self:?} must be supported on (0, ∞)")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ServiceDist::Exponential { rate } => 1.0 / rate,
            ServiceDist::Deterministic { value } => value,
            ServiceDist::Gamma { shape, scale } => shape * scale,
            ServiceDist::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    pub fn upper(&self) -> Option<f64> {
        match *self {
            ServiceDist::Deterministic { value } => Some(value),
            ServiceDist::Uniform { high, .. } => Some(high),
            _ => None,
        }
    }

    pub fn pdf(&self, v: f64) -> Option<f64> {
        if v <= 0.0 {
            return Some(0.0);
        }
        match *self {
            ServiceDist::Exponential { rate } => Some(rate * (-rate * v).exp()),
            ServiceDist::Deterministic { .. } => None,
            ServiceDist::Gamma { shape, scale } => {
                let ln = (shape - 1.0) * v.ln() - v / scale - statrs::function::gamma::ln_gamma(shape) - shape * scale.ln();
                Some(ln.exp())
            }
            ServiceDist::Uniform { low, high } => Some(if v >= low && v <= high { 1.0 / (high - low) } else { 0.0 }),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ServiceDist::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            ServiceDist::Deterministic { value } => value,
            ServiceDist::Gamma { shape, scale } => Gamma::new(shape, scale).expect("validated").sample(rng),
            ServiceDist::Uniform { low, high } => rng.gen_range(low..high),
        }
    }
}

/// Plug-in interface for user-defined mark laws.
pub trait MarkSampler: Send + Sync + fmt::Debug {
    fn sample(&self, rng: &mut dyn RngCore) -> (f64, f64);

    fn density(&self, _y: f64) -> Option<f64> {
        None
    }

    fn mean_x(&self) -> Option<f64> {
        None
    }

    fn mean_y(&self) -> Option<f64> {
        None
    }

    fn x_max(&self) -> Option<f64> {
        None
    }

    fn describe(&self) -> String;
}

/// Joint law `P` of the marks `(X, Y)`.
#[derive(Debug, Clone)]
pub enum MarkModel {
    IndependentBimodal(BimodalModel),
    ConditionalGamma(ConditionalGammaModel),
    MgInfinity(ServiceDist),
    Custom(Arc<dyn MarkSampler>),
}

/// One pair of marks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mark {
    pub duration: f64,
    pub energy: f64,
}

pub fn build_bimodal_model() -> MarkModel {
    MarkModel::IndependentBimodal(BimodalModel {
        duration: TruncatedGaussian::positive(20.0, 3.0).expect("valid duration law"),
        energy: bimodal_energy(),
    })
}

/// Conditional-Gamma durations over the given energy law; `None` uses the
/// bimodal mixture as the stand-in marginal.
pub fn build_conditional_gamma_model(marginal: Option<EnergyMarginal>) -> MarkModel {
    MarkModel::ConditionalGamma(ConditionalGammaModel {
        marginal: marginal.unwrap_or_else(|| EnergyMarginal::Mixture(bimodal_energy())),
    })
}

pub fn build_mg_infinity_model(service: ServiceDist) -> Result<MarkModel> {
    service.validate()?;
    Ok(MarkModel::MgInfinity(service))
}

impl MarkModel {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Mark> {
        let (x, y) = match self {
            MarkModel::IndependentBimodal(m) => {
                let x = m.duration.sample(rng);
                let y = m.energy.sample(rng);
                (x, y)
            }
            MarkModel::ConditionalGamma(m) => {
                let y = m.marginal.sample(rng);
                let x = ConditionalGammaModel::sample_duration(y, rng)?;
                (x, y)
            }
            MarkModel::MgInfinity(s) => {
                let x = s.sample(rng);
                (x, x)
            }
            MarkModel::Custom(c) => c.sample(rng),
        };
        if !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidMark { x, y });
        }
        Ok(Mark { duration: x, energy: y })
    }

    /// Marginal density `m(y)` of the energy; zero for `y <= 0`.
    pub fn density(&self, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        match self {
            MarkModel::IndependentBimodal(m) => Ok(m.energy.pdf(y)),
            MarkModel::ConditionalGamma(m) => Ok(m.marginal.pdf(y)),
            MarkModel::MgInfinity(s) => s.pdf(y).ok_or_else(|| Error::Unavailable(self.describe())),
            MarkModel::Custom(c) => c.density(y).ok_or_else(|| Error::Unavailable(c.describe())),
        }
    }

    pub fn has_density(&self) -> bool {
        self.density(1.0).is_ok()
    }

    pub fn mean_x(&self) -> Option<f64> {
        match self {
            MarkModel::IndependentBimodal(m) => Some(m.duration.mean_value()),
            MarkModel::ConditionalGamma(m) => {
                let (lo, hi) = m.marginal.support();
                Some(simpson(|y| m.marginal.pdf(y) * ConditionalGammaModel::conditional_mean(y), lo.max(0.0), hi, 8000))
            }
            MarkModel::MgInfinity(s) => Some(s.mean()),
            MarkModel::Custom(c) => c.mean_x(),
        }
    }

    pub fn mean_y(&self) -> Option<f64> {
        match self {
            MarkModel::IndependentBimodal(m) => Some(m.energy.mean_value()),
            MarkModel::ConditionalGamma(m) => Some(m.marginal.mean_value()),
            MarkModel::MgInfinity(s) => Some(s.mean()),
            MarkModel::Custom(c) => c.mean_y(),
        }
    }

    /// Almost-sure upper bound on the pulse duration, when one is known.
    pub fn x_max(&self) -> Option<f64> {
        match self {
            MarkModel::IndependentBimodal(m) => Some(m.duration.upper),
            MarkModel::ConditionalGamma(m) => Some(ConditionalGammaModel::truncation(m.marginal.support().1)),
            MarkModel::MgInfinity(s) => s.upper(),
            MarkModel::Custom(c) => c.x_max(),
        }
    }

    /// Interval outside which `m` vanishes (up to clamped tails).
    pub fn energy_support(&self) -> Option<(f64, f64)> {
        match self {
            MarkModel::IndependentBimodal(m) => Some(m.energy.support()),
            MarkModel::ConditionalGamma(m) => Some(m.marginal.support()),
            MarkModel::MgInfinity(ServiceDist::Exponential { rate }) => Some((0.0, 50.0 / rate)),
            MarkModel::MgInfinity(ServiceDist::Gamma { shape, scale }) => Some((0.0, (shape + 40.0 * shape.sqrt() + 40.0) * scale)),
            MarkModel::MgInfinity(ServiceDist::Uniform { low, high }) => Some((*low, *high)),
            MarkModel::MgInfinity(ServiceDist::Deterministic { .. }) => None,
            MarkModel::Custom(_) => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MarkModel::IndependentBimodal(_) => {
                "bimodal: X ~ N(20,3), Y ~ 0.6 N(100,6) + 0.4 N(130,9), independent, truncated to R+".into()
            }
            MarkModel::ConditionalGamma(m) => match &m.marginal {
                EnergyMarginal::Mixture(_) => {
                    "conditional-gamma: Y ~ bimodal mixture, X|Y=y ~ Gamma(2+y/1024, 1) truncated at 4+y/2048".into()
                }
                EnergyMarginal::Tabulated(t) => format!(
                    "conditional-gamma: Y ~ tabulated density on [{}, {}], X|Y=y ~ Gamma(2+y/1024, 1) truncated at 4+y/2048",
                    t.support().0,
                    t.support().1
                ),
            },
            MarkModel::MgInfinity(s) => format!("mg-infinity: X = Y ~ {s:?}"),
            MarkModel::Custom(c) => format!("custom: {}", c.describe()),
        }
    }
}

/// Composite Simpson rule with `intervals` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = crate::sum::NeumaierSum::new();
    acc.add(f(a));
    acc.add(f(b));
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc.add(w * f(a + k as f64 * h));
    }
    acc.sum() * h / 3.0
}
