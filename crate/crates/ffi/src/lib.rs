//! C interface to the pileup estimator.
//!
//! Objects are opaque handles created by `pileup_*_new`/`pileup_simulate`/`pileup_estimate`
//! and released with the matching `*_free`. Every fallible call returns a
//! [`PileupStatus`]; the message of the last failure on the calling thread is
//! available from [`pileup_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pileup::inversion::{estimate_density, DensityEstimate, EstimatorConfig, Kernel, YGrid};
use pileup::marks::{build_bimodal_model, build_conditional_gamma_model, build_mg_infinity_model, MarkModel, ServiceDist};
use pileup::simulator::{simulate_cycles, Cycle, CycleSet, StopRule};
use pileup::Error;

/// Status codes. The first four match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PileupStatus {
    Ok = 0,
    Config = 1,
    Data = 2,
    Numerical = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Mark law handle.
pub struct PileupModel(MarkModel);

/// Cycle sample handle.
pub struct PileupCycles(CycleSet);

/// Density estimate handle.
pub struct PileupEstimate(DensityEstimate);

/// Estimator settings. Zero in `omega_max`, `denominator_floor` or `y_count`
/// selects the data-driven default; `trapezoid_a` of zero selects the sinc kernel.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PileupEstimatorConfig {
    pub c: f64,
    pub x_trunc: f64,
    pub h: f64,
    pub omega_max: f64,
    pub denominator_floor: f64,
    pub trapezoid_a: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub y_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> PileupStatus {
    let status = match e.exit_code() {
        1 => PileupStatus::Config,
        2 => PileupStatus::Data,
        _ => PileupStatus::Numerical,
    };
    set_error(e.to_string());
    status
}

fn guard<F: FnOnce() -> PileupStatus>(f: F) -> PileupStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            PileupStatus::Panic
        }
    }
}

fn null(what: &str) -> PileupStatus {
    set_error(format!("null pointer: {what}"));
    PileupStatus::NullPointer
}

unsafe fn emit<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pileup_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn pileup_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Independent bimodal marks.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pileup_model_bimodal(out: *mut *mut PileupModel) -> PileupStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        emit(out, PileupModel(build_bimodal_model()));
        PileupStatus::Ok
    })
}

/// Conditional-Gamma durations over the bimodal energy law.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pileup_model_conditional_gamma(out: *mut *mut PileupModel) -> PileupStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        emit(out, PileupModel(build_conditional_gamma_model(None)));
        PileupStatus::Ok
    })
}

/// `X = Y ~ Exp(rate)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pileup_model_mg_exponential(rate: f64, out: *mut *mut PileupModel) -> PileupStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        match build_mg_infinity_model(ServiceDist::Exponential { rate }) {
            Ok(m) => {
                emit(out, PileupModel(m));
                PileupStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must come from a `pileup_model_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn pileup_model_free(model: *mut PileupModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates `n_cycles` complete cycles at rate `lambda`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pileup_simulate(
    model: *const PileupModel,
    lambda: f64,
    n_cycles: usize,
    seed: u64,
    out: *mut *mut PileupCycles,
) -> PileupStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return null("model/out");
        }
        match simulate_cycles(lambda, &(*model).0, StopRule::NumCycles(n_cycles), seed) {
            Ok(set) => {
                emit(out, PileupCycles(set));
                PileupStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Builds a cycle set from three arrays of length `n`.
///
/// # Safety
/// The arrays must hold `n` readable doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pileup_cycles_new(
    idle: *const f64,
    duration: *const f64,
    energy: *const f64,
    n: usize,
    out: *mut *mut PileupCycles,
) -> PileupStatus {
    guard(|| {
        if idle.is_null() || duration.is_null() || energy.is_null() || out.is_null() {
            return null("cycle arrays/out");
        }
        let (i, d, e) = (
            std::slice::from_raw_parts(idle, n),
            std::slice::from_raw_parts(duration, n),
            std::slice::from_raw_parts(energy, n),
        );
        let cycles = (0..n).map(|k| Cycle { idle: i[k], duration: d[k], energy: e[k] }).collect();
        match CycleSet::from_cycles(cycles) {
            Ok(set) => {
                emit(out, PileupCycles(set));
                PileupStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of cycles, 0 for NULL.
///
/// # Safety
/// `cycles` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pileup_cycles_len(cycles: *const PileupCycles) -> usize {
    cycles.as_ref().map_or(0, |c| c.0.len())
}

/// Copies up to `capacity` cycles into the given arrays; returns the number copied.
///
/// # Safety
/// Each array must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn pileup_cycles_copy(
    cycles: *const PileupCycles,
    idle: *mut f64,
    duration: *mut f64,
    energy: *mut f64,
    capacity: usize,
) -> usize {
    let Some(set) = cycles.as_ref() else { return 0 };
    if idle.is_null() || duration.is_null() || energy.is_null() {
        return 0;
    }
    let n = set.0.len().min(capacity);
    for (k, c) in set.0.cycles()[..n].iter().enumerate() {
        *idle.add(k) = c.idle;
        *duration.add(k) = c.duration;
        *energy.add(k) = c.energy;
    }
    n
}

/// # Safety
/// `cycles` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn pileup_cycles_free(cycles: *mut PileupCycles) {
    if !cycles.is_null() {
        drop(Box::from_raw(cycles));
    }
}

/// Defaults of the estimator (`c = 1e-4`, `x = 60`, `h = 2`, sinc kernel, data-driven grids).
#[no_mangle]
pub extern "C" fn pileup_estimator_config_default() -> PileupEstimatorConfig {
    let d = EstimatorConfig::default();
    PileupEstimatorConfig {
        c: d.c,
        x_trunc: d.x_trunc,
        h: d.h,
        omega_max: 0.0,
        denominator_floor: 0.0,
        trapezoid_a: 0.0,
        y_min: 0.0,
        y_max: 0.0,
        y_count: 0,
    }
}

fn to_config(c: &PileupEstimatorConfig) -> EstimatorConfig {
    let positive = |v: f64| (v != 0.0).then_some(v);
    EstimatorConfig {
        c: c.c,
        x_trunc: c.x_trunc,
        h: c.h,
        omega_max: positive(c.omega_max),
        omega_points: None,
        kernel: if c.trapezoid_a == 0.0 { Kernel::Sinc } else { Kernel::FlatTopTrapezoid { a: c.trapezoid_a } },
        y_grid: (c.y_count != 0).then_some(YGrid { min: c.y_min, max: c.y_max, count: c.y_count }),
        denominator_floor: positive(c.denominator_floor),
    }
}

/// Runs the estimator on a cycle set.
///
/// # Safety
/// `cycles` and `config` must be valid; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pileup_estimate(
    cycles: *const PileupCycles,
    config: *const PileupEstimatorConfig,
    out: *mut *mut PileupEstimate,
) -> PileupStatus {
    guard(|| {
        if cycles.is_null() || config.is_null() || out.is_null() {
            return null("cycles/config/out");
        }
        match estimate_density(&(*cycles).0, &to_config(&*config)) {
            Ok(est) => {
                emit(out, PileupEstimate(est));
                PileupStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of output grid points, 0 for NULL.
///
/// # Safety
/// `est` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pileup_estimate_len(est: *const PileupEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.0.y.len())
}

/// Plug-in rate used by the estimate, NaN for NULL.
///
/// # Safety
/// `est` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pileup_estimate_lambda_hat(est: *const PileupEstimate) -> f64 {
    est.as_ref().map_or(f64::NAN, |e| e.0.lambda_hat)
}

/// Copies up to `capacity` grid points and density values; returns the number copied.
///
/// # Safety
/// `y` and `m_hat` must each have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn pileup_estimate_copy(est: *const PileupEstimate, y: *mut f64, m_hat: *mut f64, capacity: usize) -> usize {
    let Some(e) = est.as_ref() else { return 0 };
    if y.is_null() || m_hat.is_null() {
        return 0;
    }
    let n = e.0.y.len().min(capacity);
    ptr::copy_nonoverlapping(e.0.y.as_ptr(), y, n);
    ptr::copy_nonoverlapping(e.0.m_hat.as_ptr(), m_hat, n);
    n
}

/// # Safety
/// `est` must come from [`pileup_estimate`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn pileup_estimate_free(est: *mut PileupEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}
