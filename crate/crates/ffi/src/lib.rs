//! C ABI over the `ssqda` classifier.
//!
//! Matrices are passed as row-major `double` buffers of `n * p` entries.
//! Every fallible function returns an [`SsqdaStatus`]; on failure a message is
//! available from [`ssqda_last_error`] on the same thread. Models are opaque
//! handles released with [`ssqda_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use ssqda::baselines::{fit_ridge_lda, fit_ridge_qda, fit_sdar, fit_slda};
use ssqda::classifier::{fit, BinaryClassifier, FitOptions};
use ssqda::cli::container::ModelContainer;
use ssqda::dantzig::rate_scale;
use ssqda::evaluation::{cv_seed, tune_and_fit, FittedModel, GridSpec, Method, PathCap, TuningGrid, TuningOptions};
use ssqda::{Error, SampleMatrix};

/// Result codes.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsqdaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Convergence = 4,
    Infeasible = 5,
    Degenerate = 6,
    Numerical = 7,
    Format = 8,
    Panic = 9,
}

/// Classification methods.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsqdaMethod {
    Ssqda = 0,
    Sdar = 1,
    Slda = 2,
    RidgeLda = 3,
    RidgeQda = 4,
}

fn method_from_code(code: i32) -> Result<Method, Failure> {
    Ok(match code {
        0 => Method::Ssqda,
        1 => Method::Sdar,
        2 => Method::Slda,
        3 => Method::RidgeLda,
        4 => Method::RidgeQda,
        _ => return Err(Error::InvalidInput(format!("unknown method code {code}")).into()),
    })
}

impl From<Method> for SsqdaMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Ssqda => SsqdaMethod::Ssqda,
            Method::Sdar => SsqdaMethod::Sdar,
            Method::Slda => SsqdaMethod::Slda,
            Method::RidgeLda => SsqdaMethod::RidgeLda,
            Method::RidgeQda => SsqdaMethod::RidgeQda,
        }
    }
}

/// A fitted binary classifier.
pub struct SsqdaModel {
    inner: ModelContainer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SsqdaStatus {
    match e {
        Error::InvalidInput(_) | Error::InsufficientSamples { .. } => SsqdaStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => SsqdaStatus::DimensionMismatch,
        Error::Convergence { .. } => SsqdaStatus::Convergence,
        Error::Infeasible(_) => SsqdaStatus::Infeasible,
        Error::DegenerateModel(_) | Error::NotPositiveDefinite(_) => SsqdaStatus::Degenerate,
        Error::Numerical(_) | Error::Generation(_) => SsqdaStatus::Numerical,
        Error::Format(_) | Error::Io(_) => SsqdaStatus::Format,
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

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SsqdaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SsqdaStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer passed for {what}"));
            SsqdaStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            SsqdaStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

/// Copies a row-major `n × p` buffer into a sample matrix.
unsafe fn samples(data: *const f64, n: usize, p: usize, what: &'static str) -> Result<SampleMatrix, Failure> {
    let data = non_null(data, what)?;
    let len = n
        .checked_mul(p)
        .ok_or_else(|| Error::InvalidInput(format!("{what}: size overflows")))?;
    if len == 0 {
        return Err(Error::InvalidInput(format!("{what}: empty sample")).into());
    }
    let slice = std::slice::from_raw_parts(data, len);
    Ok(SampleMatrix::new(DMatrix::from_row_slice(n, p, slice))?)
}

unsafe fn model_ref<'a>(model: *const SsqdaModel) -> Result<&'a SsqdaModel, Failure> {
    Ok(&*non_null(model, "model")?)
}

unsafe fn emit(out: *mut *mut SsqdaModel, container: ModelContainer) -> Result<(), Failure> {
    *out = Box::into_raw(Box::new(SsqdaModel { inner: container }));
    Ok(())
}

fn check_lambda(name: &str, v: f64) -> Result<f64, Failure> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite and non-negative, got {v}")).into())
    }
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ssqda_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ssqda_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fits `method` (an `SSQDA_METHOD_*` code) at fixed tuning levels.
/// `lambda1` is used by SSQDA and SDAR, `lambda2` by SSQDA, SDAR and SLDA;
/// the ridge baselines ignore both.
///
/// # Safety
/// `x1` and `x2` must point to `n1 * p` and `n2 * p` readable doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssqda_fit(
    method: i32,
    x1: *const f64,
    n1: usize,
    x2: *const f64,
    n2: usize,
    p: usize,
    lambda1: f64,
    lambda2: f64,
    out: *mut *mut SsqdaModel,
) -> SsqdaStatus {
    guard(|| {
        *non_null(out, "out")?.cast_mut() = ptr::null_mut();
        let method = method_from_code(method)?;
        let (c1, c2) = (samples(x1, n1, p, "x1")?, samples(x2, n2, p, "x2")?);
        let opts = FitOptions::default();
        let container = match method {
            Method::Ssqda => {
                let (l1, l2) = (check_lambda("lambda1", lambda1)?, check_lambda("lambda2", lambda2)?);
                ModelContainer::new(FittedModel::Ssqda(fit(&c1, &c2, l1, l2, &opts)?), Some(l1), Some(l2))
            }
            Method::Sdar => {
                let (l1, l2) = (check_lambda("lambda1", lambda1)?, check_lambda("lambda2", lambda2)?);
                ModelContainer::new(fit_sdar(&c1, &c2, l1, l2, &opts.solver)?.into(), Some(l1), Some(l2))
            }
            Method::Slda => {
                let l2 = check_lambda("lambda2", lambda2)?;
                ModelContainer::new(fit_slda(&c1, &c2, l2, &opts.solver)?.into(), None, Some(l2))
            }
            Method::RidgeLda => ModelContainer::new(fit_ridge_lda(&c1, &c2)?.into(), None, None),
            Method::RidgeQda => ModelContainer::new(fit_ridge_qda(&c1, &c2)?.into(), None, None),
        };
        emit(out, container)
    })
}

/// Fits `method` (an `SSQDA_METHOD_*` code) with tuning levels chosen by
/// stratified `folds`-fold cross-validation over the default grid. Same seed,
/// same model.
///
/// # Safety
/// As for [`ssqda_fit`].
#[no_mangle]
pub unsafe extern "C" fn ssqda_fit_tuned(
    method: i32,
    x1: *const f64,
    n1: usize,
    x2: *const f64,
    n2: usize,
    p: usize,
    folds: usize,
    seed: u64,
    out: *mut *mut SsqdaModel,
) -> SsqdaStatus {
    guard(|| {
        *non_null(out, "out")?.cast_mut() = ptr::null_mut();
        let method = method_from_code(method)?;
        let (c1, c2) = (samples(x1, n1, p, "x1")?, samples(x2, n2, p, "x2")?);
        let g = GridSpec::default();
        let tuning = TuningOptions {
            grid: TuningGrid::log_spaced(g.lo, g.hi, g.points, rate_scale(n1.min(n2), p))?,
            folds,
            seed: cv_seed(seed, 0),
            fit: FitOptions::default(),
            path_cap: PathCap::default(),
        };
        let tuned = tune_and_fit(method, &c1, &c2, &tuning)?;
        emit(out, ModelContainer::new(tuned.model, tuned.lambda1, tuned.lambda2))
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssqda_model_free(model: *mut SsqdaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ssqda_model_dim(model: *const SsqdaModel, out: *mut usize) -> SsqdaStatus {
    guard(|| {
        let m = model_ref(model)?;
        *non_null(out, "out")?.cast_mut() = m.inner.p;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ssqda_model_method(model: *const SsqdaModel, out: *mut SsqdaMethod) -> SsqdaStatus {
    guard(|| {
        let m = model_ref(model)?;
        *non_null(out, "out")?.cast_mut() = m.inner.method.into();
        Ok(())
    })
}

/// Discriminant value at one point; positive means class 1.
///
/// # Safety
/// `z` must point to `p` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssqda_model_score(
    model: *const SsqdaModel,
    z: *const f64,
    p: usize,
    out: *mut f64,
) -> SsqdaStatus {
    guard(|| {
        let m = model_ref(model)?;
        let z = non_null(z, "z")?;
        non_null(out, "out")?;
        if p != m.inner.p {
            return Err(Error::DimensionMismatch {
                expected: m.inner.p,
                found: p,
            }
            .into());
        }
        let z = DVector::from_column_slice(std::slice::from_raw_parts(z, p));
        *out = m.inner.model.score(&z);
        Ok(())
    })
}

/// Labels (1 or 2) for the `n` rows of a row-major `n × p` buffer.
///
/// # Safety
/// `x` must point to `n * p` readable doubles and `labels` to `n` writable
/// `uint32_t`.
#[no_mangle]
pub unsafe extern "C" fn ssqda_model_predict(
    model: *const SsqdaModel,
    x: *const f64,
    n: usize,
    p: usize,
    labels: *mut u32,
) -> SsqdaStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(labels, "labels")?;
        let data = samples(x, n, p, "x")?;
        let predicted = m.inner.model.predict(&data)?;
        let out = std::slice::from_raw_parts_mut(labels, n);
        for (o, l) in out.iter_mut().zip(predicted) {
            *o = l as u32;
        }
        Ok(())
    })
}

/// Serializes a model to JSON. Release the string with [`ssqda_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ssqda_model_to_json(model: *const SsqdaModel, out: *mut *mut c_char) -> SsqdaStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        let json = m.inner.to_json()?;
        *out = CString::new(json).map_err(|e| Error::Format(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Restores a model written by [`ssqda_model_to_json`] or the command-line tool.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ssqda_model_from_json(json: *const c_char, out: *mut *mut SsqdaModel) -> SsqdaStatus {
    guard(|| {
        let json = non_null(json, "json")?;
        *non_null(out, "out")?.cast_mut() = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Error::Format(format!("model JSON is not UTF-8: {e}")))?;
        emit(out, ModelContainer::from_json(text)?)
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssqda_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
