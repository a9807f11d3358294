//! C ABI over `levelconf`.
//!
//! Objects are opaque handles created by `lc_*` constructors and released
//! with the matching `*_free`. Every fallible call returns an [`LcStatus`];
//! on failure, [`lc_last_error_message`] describes the error for the
//! calling thread. Output pointers are written only on success.
//!
//! Arrays are passed as pointer plus length. Covariate matrices are
//! row-major `n × d`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use levelconf::band::{default_grid_points, default_workers, DEFAULT_DRAWS, DEFAULT_REFINE_ITERATIONS, DEFAULT_SEED};
use levelconf::level_set::Geometry;
use nalgebra::{DMatrix, DVector};
use levelconf::{
    band_at, confidence_set, critical_constant, fit_ols, sublevel_set, BandSpec, BasisMap, BoxRegion,
    CriticalConstant, Dataset, Error, LevelSetEstimate, MonteCarloConfig, RegressionFit, SetKind, Shape, Side,
};

/// Status codes; stable across releases.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    RankDeficient = 4,
    SampleTooSmall = 5,
    NonFinite = 6,
    InvalidRegion = 7,
    NotPositiveDefinite = 8,
    KindMismatch = 9,
    Unsupported = 10,
    Io = 11,
    Internal = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcSide {
    Upper = 0,
    Lower = 1,
    TwoSided = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcShape {
    Hyperbolic = 0,
    ConstantWidth = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcSetKind {
    G1u = 0,
    G1l = 1,
    G2u = 2,
    G2l = 3,
}

/// Monte Carlo settings. Zero in `grid_points_per_dim` or `workers` selects
/// the default.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LcMcConfig {
    pub draws: usize,
    pub seed: u64,
    pub workers: usize,
    pub grid_points_per_dim: usize,
    pub refine_iterations: usize,
}

pub struct LcFit(RegressionFit);
pub struct LcConstant(CriticalConstant);
pub struct LcLevelSet(LevelSetEstimate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> LcStatus {
    match err {
        Error::DimensionMismatch { .. } => LcStatus::DimensionMismatch,
        Error::RankDeficient { .. } => LcStatus::RankDeficient,
        Error::SampleTooSmall { .. } => LcStatus::SampleTooSmall,
        Error::NonFinite(_) => LcStatus::NonFinite,
        Error::InvalidRegion(_) | Error::EmptyRegion => LcStatus::InvalidRegion,
        Error::NotPositiveDefinite => LcStatus::NotPositiveDefinite,
        Error::KindMismatch { .. } | Error::MismatchedProblems(_) => LcStatus::KindMismatch,
        Error::GeometryUnsupported(_) => LcStatus::Unsupported,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => LcStatus::Io,
        Error::InvalidArgument(_) | Error::Config(_) => LcStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LcStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            LcStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&format!("{}: {e}", e.code()));
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal error (panic)");
            LcStatus::Internal
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn side(s: LcSide) -> Side {
    match s {
        LcSide::Upper => Side::Upper,
        LcSide::Lower => Side::Lower,
        LcSide::TwoSided => Side::TwoSided,
    }
}

fn shape(s: LcShape) -> Shape {
    match s {
        LcShape::Hyperbolic => Shape::Hyperbolic,
        LcShape::ConstantWidth => Shape::ConstantWidth,
    }
}

fn kind(k: LcSetKind) -> SetKind {
    match k {
        LcSetKind::G1u => SetKind::G1u,
        LcSetKind::G1l => SetKind::G1l,
        LcSetKind::G2u => SetKind::G2u,
        LcSetKind::G2l => SetKind::G2l,
    }
}

unsafe fn region(lower: *const f64, upper: *const f64, dim: usize) -> Result<BoxRegion, Failure> {
    let lo = slice(lower, dim, "lower")?;
    let hi = slice(upper, dim, "upper")?;
    Ok(BoxRegion::new(lo.to_vec(), hi.to_vec())?)
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Default Monte Carlo settings for a region with `free_dims` free
/// coordinates.
#[no_mangle]
pub extern "C" fn lc_mc_config_default(free_dims: usize) -> LcMcConfig {
    LcMcConfig {
        draws: DEFAULT_DRAWS,
        seed: DEFAULT_SEED,
        workers: 0,
        grid_points_per_dim: default_grid_points(free_dims),
        refine_iterations: DEFAULT_REFINE_ITERATIONS,
    }
}

/// Least squares with an affine basis. `x` is row-major `n × d`.
///
/// # Safety
/// `y` must point to `n` doubles, `x` to `n * d` doubles and `out` to
/// writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn lc_fit_ols(y: *const f64, x: *const f64, n: usize, d: usize, out: *mut *mut LcFit) -> LcStatus {
    guard(|| {
        let basis = BasisMap::affine(d)?;
        fit_rows(y, x, n, d, basis, out)
    })
}

/// Least squares on one covariate with the basis `1, x, …, x^degree`.
///
/// # Safety
/// As [`lc_fit_ols`] with `d = 1`.
#[no_mangle]
pub unsafe extern "C" fn lc_fit_ols_poly(
    y: *const f64,
    x: *const f64,
    n: usize,
    degree: usize,
    out: *mut *mut LcFit,
) -> LcStatus {
    guard(|| {
        let basis = BasisMap::polynomial(degree)?;
        fit_rows(y, x, n, 1, basis, out)
    })
}

unsafe fn fit_rows(y: *const f64, x: *const f64, n: usize, d: usize, basis: BasisMap, out: *mut *mut LcFit) -> Result<(), Failure> {
    let ys = slice(y, n, "y")?;
    let xs = slice(x, n * d, "x")?;
    let data = Dataset::new(ys.to_vec(), DMatrix::from_row_slice(n, d, xs))?;
    let fit = fit_ols(&data, basis)?;
    put(out, Box::into_raw(Box::new(LcFit(fit))), "out")
}

/// Known-scale estimate `β̂ ~ N(β, cov)` with an affine basis; `cov` is
/// row-major `k × k` with `k = len(beta)`.
///
/// # Safety
/// `beta` must point to `k` doubles, `cov` to `k * k` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_fit_from_covariance(
    beta: *const f64,
    cov: *const f64,
    k: usize,
    out: *mut *mut LcFit,
) -> LcStatus {
    guard(|| {
        if k < 2 {
            return Err(Error::InvalidArgument("need an intercept and at least one slope".into()).into());
        }
        let b = slice(beta, k, "beta")?;
        let c = slice(cov, k * k, "cov")?;
        let fit = RegressionFit::from_covariance(
            DVector::from_column_slice(b),
            DMatrix::from_row_slice(k, k, c),
            BasisMap::affine(k - 1)?,
        )?;
        put(out, Box::into_raw(Box::new(LcFit(fit))), "out")
    })
}

/// # Safety
/// `fit` must be null or a handle from an `lc_fit_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn lc_fit_free(fit: *mut LcFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of coefficients.
///
/// # Safety
/// `fit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lc_fit_coefficient_count(fit: *const LcFit, out: *mut usize) -> LcStatus {
    guard(|| put(out, get(fit, "fit")?.0.beta_hat().len(), "out"))
}

/// Copies `β̂` into `out[0..len]`; `len` must equal the coefficient count.
///
/// # Safety
/// `fit` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_fit_coefficients(fit: *const LcFit, out: *mut f64, len: usize) -> LcStatus {
    guard(|| {
        let beta = get(fit, "fit")?.0.beta_hat();
        if len != beta.len() {
            return Err(Error::DimensionMismatch {
                expected: beta.len(),
                got: len,
            }
            .into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(beta.as_slice());
        Ok(())
    })
}

/// `σ̂` and `ν` (infinite for a known scale).
///
/// # Safety
/// `fit` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_fit_scale(fit: *const LcFit, sigma_hat: *mut f64, dof: *mut f64) -> LcStatus {
    guard(|| {
        let f = &get(fit, "fit")?.0;
        put(sigma_hat, f.sigma_hat(), "sigma_hat")?;
        put(dof, f.dof().as_f64(), "dof")
    })
}

/// Simulates the critical constant of one band over the box
/// `[lower, upper]`. `config` may be null for defaults.
///
/// # Safety
/// `fit` must be a live handle, `lower`/`upper` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_critical_constant(
    fit: *const LcFit,
    lower: *const f64,
    upper: *const f64,
    dim: usize,
    band_side: LcSide,
    band_shape: LcShape,
    alpha: f64,
    config: *const LcMcConfig,
    out: *mut *mut LcConstant,
) -> LcStatus {
    guard(|| {
        let f = &get(fit, "fit")?.0;
        let region = region(lower, upper, dim)?;
        let spec = BandSpec::new(side(band_side), shape(band_shape), alpha, region.clone())?;
        let mut mc = MonteCarloConfig::for_region(&region);
        if let Some(c) = config.as_ref() {
            mc.draws = c.draws;
            mc.seed = c.seed;
            mc.refine_iterations = c.refine_iterations;
            if c.workers > 0 {
                mc.workers = c.workers;
            }
            if c.grid_points_per_dim > 0 {
                mc.grid_points_per_dim = c.grid_points_per_dim;
            }
        }
        if mc.workers == 0 {
            mc.workers = default_workers();
        }
        let c = critical_constant(f, &spec, &mc)?;
        put(out, Box::into_raw(Box::new(LcConstant(c))), "out")
    })
}

/// Wraps an externally known constant (no simulation).
///
/// # Safety
/// `lower`/`upper` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_constant_fixed(
    value: f64,
    lower: *const f64,
    upper: *const f64,
    dim: usize,
    band_side: LcSide,
    band_shape: LcShape,
    alpha: f64,
    out: *mut *mut LcConstant,
) -> LcStatus {
    guard(|| {
        let spec = BandSpec::new(side(band_side), shape(band_shape), alpha, region(lower, upper, dim)?)?;
        let c = CriticalConstant::fixed(value, spec)?;
        put(out, Box::into_raw(Box::new(LcConstant(c))), "out")
    })
}

/// Value and Monte Carlo standard error.
///
/// # Safety
/// `c` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_constant_value(c: *const LcConstant, value: *mut f64, std_error: *mut f64) -> LcStatus {
    guard(|| {
        let c = &get(c, "constant")?.0;
        put(value, c.value, "value")?;
        if !std_error.is_null() {
            std_error.write(c.std_error);
        }
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle from an `lc_constant_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn lc_constant_free(c: *mut LcConstant) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Band bounds at `x`; the open side of a one-sided band is ±infinity.
///
/// # Safety
/// Handles must be live and `x` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_band_at(
    fit: *const LcFit,
    c: *const LcConstant,
    x: *const f64,
    dim: usize,
    lower: *mut f64,
    upper: *mut f64,
) -> LcStatus {
    guard(|| {
        let (lo, hi) = band_at(&get(fit, "fit")?.0, &get(c, "constant")?.0, slice(x, dim, "x")?)?;
        put(lower, lo, "lower")?;
        put(upper, hi, "upper")
    })
}

/// Builds a confidence set for `{f ≥ λ}`, or for `{f ≤ λ}` when
/// `sublevel` is non-zero.
///
/// # Safety
/// Handles must be live.
#[no_mangle]
pub unsafe extern "C" fn lc_level_set(
    fit: *const LcFit,
    c: *const LcConstant,
    lambda: f64,
    set_kind: LcSetKind,
    sublevel: c_int,
    out: *mut *mut LcLevelSet,
) -> LcStatus {
    guard(|| {
        let f = &get(fit, "fit")?.0;
        let c = &get(c, "constant")?.0;
        let set = if sublevel != 0 {
            sublevel_set(f, c, lambda, kind(set_kind))?
        } else {
            confidence_set(f, c, lambda, kind(set_kind))?
        };
        put(out, Box::into_raw(Box::new(LcLevelSet(set))), "out")
    })
}

/// Writes 1 if `x` belongs to the set, else 0.
///
/// # Safety
/// `set` must be live and `x` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_level_set_contains(set: *const LcLevelSet, x: *const f64, dim: usize, out: *mut c_int) -> LcStatus {
    guard(|| {
        let inside = get(set, "set")?.0.contains(slice(x, dim, "x")?)?;
        put(out, c_int::from(inside), "out")
    })
}

/// Writes 1 if the set is empty, else 0.
///
/// # Safety
/// `set` must be live.
#[no_mangle]
pub unsafe extern "C" fn lc_level_set_is_empty(set: *const LcLevelSet, out: *mut c_int) -> LcStatus {
    guard(|| put(out, c_int::from(get(set, "set")?.0.is_empty), "out"))
}

fn intervals(set: &LevelSetEstimate) -> Result<&[(f64, f64)], Failure> {
    match &set.geometry {
        Geometry::Intervals(v) => Ok(v),
        _ => Err(Error::GeometryUnsupported("intervals exist only for one-dimensional regions".into()).into()),
    }
}

/// Number of disjoint intervals of a one-dimensional set.
///
/// # Safety
/// `set` must be live.
#[no_mangle]
pub unsafe extern "C" fn lc_level_set_interval_count(set: *const LcLevelSet, out: *mut usize) -> LcStatus {
    guard(|| put(out, intervals(&get(set, "set")?.0)?.len(), "out"))
}

/// Endpoints of interval `index` (sorted ascending).
///
/// # Safety
/// `set` must be live; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_level_set_interval(set: *const LcLevelSet, index: usize, lo: *mut f64, hi: *mut f64) -> LcStatus {
    guard(|| {
        let iv = intervals(&get(set, "set")?.0)?;
        let &(a, b) = iv
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("interval {index} out of range ({} intervals)", iv.len())))?;
        put(lo, a, "lo")?;
        put(hi, b, "hi")
    })
}

/// # Safety
/// `set` must be null or a handle from [`lc_level_set`].
#[no_mangle]
pub unsafe extern "C" fn lc_level_set_free(set: *mut LcLevelSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}
