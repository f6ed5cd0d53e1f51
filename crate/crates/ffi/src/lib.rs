//! C interface to the tsre estimators.
//!
//! Every entry point returns a [`TsreStatus`]. On failure the message is
//! available from [`tsre_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tsre::estimators::{estimate_summary, Bootstrap, Estimate, Method};
use tsre::genotype::{compute_grm, standardize, GenotypeMatrix, Grm, StandardizedGenotypes};
use tsre::sumstats::VariantSummary;
use tsre::tsre::{tsre_estimate, tsre_from_genotypes, Centering, TsreFit};
use tsre::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsreStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    /// Invalid argument or method code.
    Usage = 2,
    /// Malformed, mismatched or too-small data.
    Data = 3,
    /// Numerical failure such as a weak genetic signal.
    Numeric = 4,
    /// An internal panic was caught.
    Panic = 5,
}

pub const TSRE_CENTERING_COVARIANCE: i32 = 0;
pub const TSRE_CENTERING_RAW: i32 = 1;

pub const TSRE_METHOD_RATIO: i32 = 0;
pub const TSRE_METHOD_IVW_FE: i32 = 2;
pub const TSRE_METHOD_IVW_RE: i32 = 3;
pub const TSRE_METHOD_EGGER: i32 = 4;
pub const TSRE_METHOD_SIMPLE_MEDIAN: i32 = 5;
pub const TSRE_METHOD_WEIGHTED_MEDIAN: i32 = 6;

/// Column-standardized genotype matrix.
pub struct TsreGenotypes(StandardizedGenotypes);

/// Genetic relationship matrix.
pub struct TsreGrm(Grm);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TsreFitResult {
    pub theta_hat: f64,
    pub se: f64,
    pub eta_hat: f64,
    pub delta_hat: f64,
    pub tau2_hat: f64,
    pub n: usize,
    pub m: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TsreVariantSummary {
    pub gamma_x: f64,
    pub se_x: f64,
    pub gamma_y: f64,
    pub se_y: f64,
    pub p_x: f64,
}

/// `intercept` and `overdispersion` are NaN when the method has none.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TsreEstimate {
    pub theta_hat: f64,
    pub se: f64,
    pub intercept: f64,
    pub overdispersion: f64,
    pub n_iv: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(TsreStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => TsreStatus::Usage,
            3 => TsreStatus::Data,
            _ => TsreStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(TsreStatus::Null, format!("{name} is null"))
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure(TsreStatus::Usage, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TsreStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            TsreStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            TsreStatus::Panic
        }
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

fn centering(code: i32) -> Result<Centering, Failure> {
    match code {
        TSRE_CENTERING_COVARIANCE => Ok(Centering::Covariance),
        TSRE_CENTERING_RAW => Ok(Centering::Raw),
        other => Err(usage(format!("unknown centering code {other}"))),
    }
}

fn summary_method(code: i32) -> Result<Method, Failure> {
    Ok(match code {
        TSRE_METHOD_RATIO => Method::Ratio,
        TSRE_METHOD_IVW_FE => Method::IvwFe,
        TSRE_METHOD_IVW_RE => Method::IvwRe,
        TSRE_METHOD_EGGER => Method::Egger,
        TSRE_METHOD_SIMPLE_MEDIAN => Method::SimpleMedian,
        TSRE_METHOD_WEIGHTED_MEDIAN => Method::WeightedMedian,
        other => return Err(usage(format!("unknown summary method code {other}"))),
    })
}

impl From<TsreFit> for TsreFitResult {
    fn from(f: TsreFit) -> Self {
        TsreFitResult {
            theta_hat: f.theta_hat,
            se: f.se,
            eta_hat: f.eta_hat,
            delta_hat: f.delta_hat,
            tau2_hat: f.tau2_hat,
            n: f.n,
            m: f.m,
        }
    }
}

impl From<Estimate> for TsreEstimate {
    fn from(e: Estimate) -> Self {
        TsreEstimate {
            theta_hat: e.theta_hat,
            se: e.se,
            intercept: e.intercept.unwrap_or(f64::NAN),
            overdispersion: e.overdispersion.unwrap_or(f64::NAN),
            n_iv: e.n_iv,
        }
    }
}

/// Message of the last failed call on this thread, or "" after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tsre_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tsre_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Standardizes an n×m row-major matrix of allele counts (0, 1 or 2).
/// Monomorphic variants are dropped.
///
/// # Safety
/// `dosages` must point to `n * m` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsre_genotypes_new(
    dosages: *const u8,
    n: usize,
    m: usize,
    out: *mut *mut TsreGenotypes,
) -> TsreStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let len = n.checked_mul(m).ok_or_else(|| usage("n * m overflows"))?;
        let d = slice_arg(dosages, len, "dosages")?;
        let g = GenotypeMatrix::from_dosages(n, m, d.to_vec())?;
        *out = Box::into_raw(Box::new(TsreGenotypes(standardize(&g)?)));
        Ok(())
    })
}

/// # Safety
/// `g` must come from [`tsre_genotypes_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tsre_genotypes_free(g: *mut TsreGenotypes) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Individuals and retained variants.
///
/// # Safety
/// `g` must be a live handle; `n` and `m` may be null.
#[no_mangle]
pub unsafe extern "C" fn tsre_genotypes_shape(g: *const TsreGenotypes, n: *mut usize, m: *mut usize) -> TsreStatus {
    guard(|| {
        let g = ref_arg(g, "g")?;
        if let Some(n) = n.as_mut() {
            *n = g.0.n();
        }
        if let Some(m) = m.as_mut() {
            *m = g.0.m();
        }
        Ok(())
    })
}

/// # Safety
/// `g` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsre_grm_compute(g: *const TsreGenotypes, out: *mut *mut TsreGrm) -> TsreStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let g = ref_arg(g, "g")?;
        *out = Box::into_raw(Box::new(TsreGrm(compute_grm(&g.0)?)));
        Ok(())
    })
}

/// # Safety
/// `a` must come from [`tsre_grm_compute`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tsre_grm_free(a: *mut TsreGrm) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// # Safety
/// `a` must be a live handle; `n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsre_grm_size(a: *const TsreGrm, n: *mut usize) -> TsreStatus {
    guard(|| {
        let a = ref_arg(a, "a")?;
        *n.as_mut().ok_or_else(|| null("n"))? = a.0.n();
        Ok(())
    })
}

/// Entry A_ij (symmetric).
///
/// # Safety
/// `a` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsre_grm_get(a: *const TsreGrm, i: usize, j: usize, out: *mut f64) -> TsreStatus {
    guard(|| {
        let a = ref_arg(a, "a")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let n = a.0.n();
        if i >= n || j >= n {
            return Err(usage(format!("index ({i}, {j}) outside {n}x{n}")));
        }
        *out = a.0.get(i, j);
        Ok(())
    })
}

/// TS-RE estimate from a GRM and `n` exposure and outcome values.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsre_estimate_grm(
    a: *const TsreGrm,
    x: *const f64,
    y: *const f64,
    n: usize,
    centering_code: i32,
    out: *mut TsreFitResult,
) -> TsreStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let a = ref_arg(a, "a")?;
        let (x, y) = (slice_arg(x, n, "x")?, slice_arg(y, n, "y")?);
        *out = tsre_estimate(&a.0, x, y, centering(centering_code)?)?.into();
        Ok(())
    })
}

/// TS-RE estimate straight from genotypes, without materializing the GRM
/// when the variant count is small.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsre_estimate_genotypes(
    g: *const TsreGenotypes,
    x: *const f64,
    y: *const f64,
    n: usize,
    centering_code: i32,
    out: *mut TsreFitResult,
) -> TsreStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let g = ref_arg(g, "g")?;
        let (x, y) = (slice_arg(x, n, "x")?, slice_arg(y, n, "y")?);
        *out = tsre_from_genotypes(&g.0, x, y, centering(centering_code)?)?.into();
        Ok(())
    })
}

/// Summary-statistics estimator over `len` variants. `resamples` and
/// `seed` drive the median bootstrap and are ignored otherwise.
///
/// # Safety
/// `summaries` must point to `len` records; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsre_estimate_summary(
    method_code: i32,
    summaries: *const TsreVariantSummary,
    len: usize,
    resamples: usize,
    seed: u64,
    out: *mut TsreEstimate,
) -> TsreStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let method = summary_method(method_code)?;
        let s: Vec<VariantSummary> = slice_arg(summaries, len, "summaries")?
            .iter()
            .enumerate()
            .map(|(k, v)| VariantSummary {
                variant_id: format!("v{}", k + 1),
                gamma_x: v.gamma_x,
                se_x: v.se_x,
                gamma_y: v.gamma_y,
                se_y: v.se_y,
                p_x: v.p_x,
            })
            .collect();
        *out = estimate_summary(method, &s, &Bootstrap { resamples, seed })?.into();
        Ok(())
    })
}
