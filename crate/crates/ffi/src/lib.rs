//! C ABI for the pc3 calibration engine.
//!
//! Objects cross the boundary as opaque handles created by `pc3_*_new` style
//! functions and released with the matching `pc3_*_free`. Every fallible call
//! returns a [`Pc3ErrorCode`]; the message of the most recent failure on the
//! calling thread is available from [`pc3_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pc3::{CalibrationConfig, Error, FeatureTable};

pub static LIB_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pc3ErrorCode {
    Ok = 0,
    Validation = 1,
    Numeric = 2,
    Io = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Agreement between two label vectors.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Pc3Metrics {
    pub srcc: f64,
    pub plcc: f64,
    pub krocc: f64,
    pub mse: f64,
}

/// Calibration hyperparameters.
pub struct Pc3Config(CalibrationConfig);

/// Feature rows, one per item.
pub struct Pc3FeatureTable(FeatureTable);

/// Calibrated labels and the per-epoch loss trace.
pub struct Pc3Calibration {
    labels: Vec<f64>,
    trace: Vec<pc3::EpochReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_for(err: &Error) -> Pc3ErrorCode {
    match err {
        Error::Io { .. } => Pc3ErrorCode::Io,
        e if e.is_validation() => Pc3ErrorCode::Validation,
        _ => Pc3ErrorCode::Numeric,
    }
}

fn fail(code: Pc3ErrorCode, msg: impl Into<String>) -> Pc3ErrorCode {
    set_last_error(msg.into());
    code
}

/// Runs `f`, mapping errors and panics onto codes.
fn guard<F>(f: F) -> Pc3ErrorCode
where
    F: FnOnce() -> Result<(), Pc3ErrorCode>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => Pc3ErrorCode::Ok,
        Ok(Err(code)) => code,
        Err(_) => fail(Pc3ErrorCode::Panic, "panic inside pc3"),
    }
}

fn lift<T>(r: pc3::Result<T>) -> Result<T, Pc3ErrorCode> {
    r.map_err(|e| fail(code_for(&e), e.to_string()))
}

fn null(what: &str) -> Pc3ErrorCode {
    fail(Pc3ErrorCode::NullPointer, format!("`{what}` is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Pc3ErrorCode> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Pc3ErrorCode> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(Pc3ErrorCode::Validation, format!("`{what}` is not UTF-8")))
}

fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Pc3ErrorCode> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pc3_version() -> *const c_char {
    LIB_VERSION.as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Free with
/// [`pc3_string_free`].
#[no_mangle]
pub extern "C" fn pc3_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |s| s.clone().into_raw())
    })
}

/// # Safety
/// `s` must come from [`pc3_last_error_message`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pc3_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration (alpha 0.1, beta 1/9, lambda 1e-4, one warm-up epoch).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_new(out: *mut *mut Pc3Config) -> Pc3ErrorCode {
    guard(|| emit(out, Pc3Config(CalibrationConfig::default())))
}

/// Parses a flat JSON configuration; omitted keys keep their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_from_json(
    json: *const c_char,
    out: *mut *mut Pc3Config,
) -> Pc3ErrorCode {
    guard(|| {
        let text = c_str(json, "json")?;
        let config = lift(pc3::io::parse_config(text, Path::new("<json>")))?;
        emit(out, Pc3Config(config))
    })
}

/// # Safety
/// `config` must be a live handle from `pc3_config_new` or NULL.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_free(config: *mut Pc3Config) {
    free(config)
}

/// Applies `edit` to a copy of the config and commits it only if it validates.
unsafe fn update(config: *mut Pc3Config, edit: impl FnOnce(&mut CalibrationConfig)) -> Pc3ErrorCode {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null("config"))?;
        let mut next = c.0.clone();
        edit(&mut next);
        lift(next.validate())?;
        c.0 = next;
        Ok(())
    })
}

/// MOS update step size, in [0, 1].
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_set_alpha(config: *mut Pc3Config, value: f64) -> Pc3ErrorCode {
    update(config, |c| c.alpha = value)
}

/// Weight of the constancy constraint term, >= 0.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_set_beta(config: *mut Pc3Config, value: f64) -> Pc3ErrorCode {
    update(config, |c| c.beta = value)
}

/// Adam learning rate, >= 0.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_set_lambda(config: *mut Pc3Config, value: f64) -> Pc3ErrorCode {
    update(config, |c| c.lambda = value)
}

/// Epochs during which the MOS estimate is pinned to the input labels.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_set_warmup_epochs(config: *mut Pc3Config, value: usize) -> Pc3ErrorCode {
    update(config, |c| c.warmup_epochs = value)
}

/// Number of alternating iterations, >= 1.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_set_total_epochs(config: *mut Pc3Config, value: usize) -> Pc3ErrorCode {
    update(config, |c| c.total_epochs = value)
}

/// Mini-batch size, >= 1.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_set_batch_size(config: *mut Pc3Config, value: usize) -> Pc3ErrorCode {
    update(config, |c| c.batch_size = value)
}

/// Seed for initialization, reference sampling and shuffling.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_set_seed(config: *mut Pc3Config, value: u64) -> Pc3ErrorCode {
    update(config, |c| c.seed = value)
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc3_config_set_hidden_dims(
    config: *mut Pc3Config,
    first: usize,
    second: usize,
) -> Pc3ErrorCode {
    update(config, |c| c.hidden_dims = (first, second))
}

/// Copies a row-major `n_items x dim` matrix. Items get ids `"0"`, `"1"`, ...
///
/// # Safety
/// `data` must point to `n_items * dim` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pc3_features_new(
    data: *const f64,
    n_items: usize,
    dim: usize,
    out: *mut *mut Pc3FeatureTable,
) -> Pc3ErrorCode {
    guard(|| {
        let len = n_items
            .checked_mul(dim)
            .ok_or_else(|| fail(Pc3ErrorCode::Validation, "n_items * dim overflows"))?;
        let values = slice(data, len, "data")?.to_vec();
        let ids = (0..n_items).map(|i| i.to_string()).collect();
        let table = lift(FeatureTable::new(ids, dim, values))?;
        emit(out, Pc3FeatureTable(table))
    })
}

/// Loads a features CSV (`item_id,f0,...`).
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pc3_features_read_csv(
    path: *const c_char,
    out: *mut *mut Pc3FeatureTable,
) -> Pc3ErrorCode {
    guard(|| {
        let p = c_str(path, "path")?;
        let table = lift(pc3::io::read_features(Path::new(p)))?;
        emit(out, Pc3FeatureTable(table))
    })
}

/// Number of items, or 0 for NULL.
///
/// # Safety
/// `table` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pc3_features_len(table: *const Pc3FeatureTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// Feature dimension, or 0 for NULL.
///
/// # Safety
/// `table` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pc3_features_dim(table: *const Pc3FeatureTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.dim())
}

/// # Safety
/// `table` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pc3_features_free(table: *mut Pc3FeatureTable) {
    free(table)
}

/// Calibrates `n` raw single opinion scores aligned with the table rows.
///
/// # Safety
/// Handles must be live; `sos` must point to `n` doubles; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn pc3_calibrate(
    features: *const Pc3FeatureTable,
    sos: *const f64,
    n: usize,
    config: *const Pc3Config,
    out: *mut *mut Pc3Calibration,
) -> Pc3ErrorCode {
    guard(|| {
        let features = features.as_ref().ok_or_else(|| null("features"))?;
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        let sos = slice(sos, n, "sos")?;
        let (labels, result) = lift(pc3::calibrate_raw(&features.0, sos, &config.0))?;
        emit(
            out,
            Pc3Calibration {
                labels,
                trace: result.trace,
            },
        )
    })
}

/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pc3_calibration_len(result: *const Pc3Calibration) -> usize {
    result.as_ref().map_or(0, |r| r.labels.len())
}

/// Copies the calibrated labels (raw scale) into `out`, which holds `len` doubles.
///
/// # Safety
/// `result` must be live; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pc3_calibration_labels(
    result: *const Pc3Calibration,
    out: *mut f64,
    len: usize,
) -> Pc3ErrorCode {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if len != r.labels.len() {
            return Err(fail(
                Pc3ErrorCode::Validation,
                format!("buffer holds {len} values, result has {}", r.labels.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&r.labels);
        Ok(())
    })
}

/// Number of epochs in the trace.
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pc3_calibration_epochs(result: *const Pc3Calibration) -> usize {
    result.as_ref().map_or(0, |r| r.trace.len())
}

/// Loss terms recorded for `epoch`. Any output pointer may be NULL.
///
/// # Safety
/// `result` must be live; non-NULL outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pc3_calibration_epoch_loss(
    result: *const Pc3Calibration,
    epoch: usize,
    data_fit: *mut f64,
    constraint: *mut f64,
    total: *mut f64,
) -> Pc3ErrorCode {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let e = r.trace.get(epoch).ok_or_else(|| {
            fail(
                Pc3ErrorCode::Validation,
                format!("epoch {epoch} out of range ({} recorded)", r.trace.len()),
            )
        })?;
        for (p, v) in [
            (data_fit, e.data_fit_loss),
            (constraint, e.constraint_loss),
            (total, e.total_loss),
        ] {
            if let Some(slot) = p.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pc3_calibration_free(result: *mut Pc3Calibration) {
    free(result)
}

/// SRCC, PLCC, KROCC and MSE between `pred` and `truth`.
///
/// # Safety
/// `pred` and `truth` must point to `n` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pc3_evaluate(
    pred: *const f64,
    truth: *const f64,
    n: usize,
    out: *mut Pc3Metrics,
) -> Pc3ErrorCode {
    guard(|| {
        let p = slice(pred, n, "pred")?;
        let t = slice(truth, n, "truth")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = lift(pc3::metrics::evaluate(p, t))?;
        *out = Pc3Metrics {
            srcc: m.srcc,
            plcc: m.plcc,
            krocc: m.krocc,
            mse: m.mse,
        };
        Ok(())
    })
}
