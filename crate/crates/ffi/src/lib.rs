//! C interface to saved anomalens models.
//!
//! Models are opaque handles created by [`anomalens_model_load`] and released
//! with [`anomalens_model_free`]. Every fallible call returns an
//! [`AnomalensStatus`]; on failure a description is available from
//! [`anomalens_last_error`] on the same thread. Multimodal records are passed
//! as the concatenation of their data types in the model's type order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use anomalens::contribution::{estimate_contribution, ContributionConfig};
use anomalens::multimodal::mae_estimate_contribution;
use anomalens::persist::{load_model, Model};
use anomalens::Error;
use ndarray::ArrayView1;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalensStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    Numerical = 6,
    /// The model has no anomaly threshold (PCA baselines).
    NoThreshold = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

/// Opaque model handle.
pub struct AnomalensModel {
    model: Model,
    /// Input width per data type; a single entry for one-type models.
    dims: Vec<usize>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AnomalensStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::TypeDimensionMismatch { .. } => AnomalensStatus::DimensionMismatch,
        Error::Divergence { .. } | Error::NonFinite { .. } | Error::Numerical(_) => AnomalensStatus::Numerical,
        Error::Format(_) | Error::Json(_) => AnomalensStatus::Format,
        Error::Io(_) | Error::Csv(_) | Error::Data { .. } => AnomalensStatus::Io,
        _ => AnomalensStatus::InvalidArgument,
    }
}

fn fail(status: AnomalensStatus, msg: impl Into<String>) -> AnomalensStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), AnomalensStatus>) -> AnomalensStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AnomalensStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(AnomalensStatus::Internal, "internal panic"),
    }
}

fn lib_err(e: Error) -> AnomalensStatus {
    fail(status_of(&e), e.to_string())
}

fn null(what: &str) -> AnomalensStatus {
    fail(AnomalensStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(m: *const AnomalensModel) -> Result<&'a AnomalensModel, AnomalensStatus> {
    // SAFETY: the caller passes a handle from anomalens_model_load or null.
    unsafe { m.as_ref() }.ok_or_else(|| null("model"))
}

unsafe fn record<'a>(m: &AnomalensModel, x: *const f64, len: usize) -> Result<&'a [f64], AnomalensStatus> {
    if x.is_null() {
        return Err(null("record"));
    }
    let want: usize = m.dims.iter().sum();
    if len != want {
        return Err(fail(
            AnomalensStatus::DimensionMismatch,
            format!("record has {len} values, model expects {want}"),
        ));
    }
    // SAFETY: the caller guarantees `x` points to `len` readable doubles.
    Ok(unsafe { std::slice::from_raw_parts(x, len) })
}

fn split<'a>(dims: &[usize], x: &'a [f64]) -> Vec<ArrayView1<'a, f64>> {
    let mut start = 0;
    dims.iter()
        .map(|&d| {
            let v = ArrayView1::from(&x[start..start + d]);
            start += d;
            v
        })
        .collect()
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), AnomalensStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: non-null and, per the contract, writable.
    unsafe { out.write(value) };
    Ok(())
}

/// Score and decision for one record. PCA models report `anomalous = false`.
fn evaluate(m: &AnomalensModel, x: &[f64]) -> Result<(f64, Option<bool>), AnomalensStatus> {
    match &m.model {
        Model::Autoencoder(d) => {
            let r = d.is_anomalous(ArrayView1::from(x)).map_err(lib_err)?;
            Ok((r.score, Some(r.anomalous)))
        }
        Model::Multimodal(mm) => {
            let (s, a) = mm.is_anomalous(&split(&m.dims, x)).map_err(lib_err)?;
            Ok((s.wmse, Some(a)))
        }
        Model::Pca(p) => Ok((p.score(ArrayView1::from(x)).map_err(lib_err)?, None)),
    }
}

/// Loads a model file written by `anomalens train`.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anomalens_model_load(path: *const c_char, out: *mut *mut AnomalensModel) -> AnomalensStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("output pointer"));
        }
        // SAFETY: checked non-null; nul-termination is the caller's contract.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| fail(AnomalensStatus::InvalidArgument, "path is not UTF-8"))?;
        let model = load_model(Path::new(path)).map_err(lib_err)?;
        let dims = match &model {
            Model::Autoencoder(d) => vec![d.input_dim()],
            Model::Multimodal(m) => m.net.input_dims(),
            Model::Pca(p) => vec![p.mean.len()],
        };
        let handle = Box::into_raw(Box::new(AnomalensModel { model, dims }));
        // SAFETY: checked non-null above.
        unsafe { out.write(handle) };
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`anomalens_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn anomalens_model_free(model: *mut AnomalensModel) {
    if !model.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of values in one record (all types concatenated).
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anomalens_model_input_dim(model: *const AnomalensModel, out: *mut usize) -> AnomalensStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        unsafe { write(out, m.dims.iter().sum()) }
    })
}

/// Number of data types: 1 unless the model is multimodal.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anomalens_model_type_count(model: *const AnomalensModel, out: *mut usize) -> AnomalensStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        unsafe { write(out, m.dims.len()) }
    })
}

/// Anomaly threshold on the score.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anomalens_model_threshold(model: *const AnomalensModel, out: *mut f64) -> AnomalensStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let t = match &m.model {
            Model::Autoencoder(d) => d.threshold,
            Model::Multimodal(mm) => mm.threshold,
            Model::Pca(_) => return Err(fail(AnomalensStatus::NoThreshold, "PCA models have no threshold")),
        };
        unsafe { write(out, t) }
    })
}

/// Reconstruction score of one record: MSE, weighted MSE, or PCA residual.
///
/// # Safety
/// `x` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anomalens_score(
    model: *const AnomalensModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> AnomalensStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let x = unsafe { record(m, x, len)? };
        let (score, _) = evaluate(m, x)?;
        unsafe { write(out, score) }
    })
}

/// Score plus the strict `score > threshold` decision.
///
/// # Safety
/// `x` must point to `len` doubles; `out_score` may be null, `out_anomalous` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anomalens_is_anomalous(
    model: *const AnomalensModel,
    x: *const f64,
    len: usize,
    out_score: *mut f64,
    out_anomalous: *mut bool,
) -> AnomalensStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let x = unsafe { record(m, x, len)? };
        if out_anomalous.is_null() {
            return Err(null("output pointer"));
        }
        let (score, flag) = evaluate(m, x)?;
        let flag = flag.ok_or_else(|| fail(AnomalensStatus::NoThreshold, "PCA models have no threshold"))?;
        if !out_score.is_null() {
            unsafe { out_score.write(score) };
        }
        unsafe { write(out_anomalous, flag) }
    })
}

/// Contribution degree per input value (default solver settings).
///
/// `eta` receives `len` values in normalized units. `out_lambda` may be null.
///
/// # Safety
/// `x` must point to `len` doubles and `eta` to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn anomalens_explain(
    model: *const AnomalensModel,
    x: *const f64,
    len: usize,
    eta: *mut f64,
    out_lambda: *mut f64,
) -> AnomalensStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let x = unsafe { record(m, x, len)? };
        if eta.is_null() {
            return Err(null("eta"));
        }
        let cfg = ContributionConfig::default();
        let result = match &m.model {
            Model::Autoencoder(d) => estimate_contribution(d, ArrayView1::from(x), &cfg).map_err(lib_err)?,
            Model::Multimodal(mm) => mae_estimate_contribution(mm, &split(&m.dims, x), &cfg).map_err(lib_err)?.combined,
            Model::Pca(_) => {
                return Err(fail(AnomalensStatus::InvalidArgument, "contribution needs an autoencoder model"));
            }
        };
        // SAFETY: caller provides `len` writable doubles.
        let dst = unsafe { std::slice::from_raw_parts_mut(eta, len) };
        dst.copy_from_slice(result.eta.as_slice().expect("contiguous"));
        if !out_lambda.is_null() {
            unsafe { out_lambda.write(result.lambda_used) };
        }
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn anomalens_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn anomalens_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
