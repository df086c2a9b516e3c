//! C ABI over the sepsis mortality pipeline.
//!
//! Conventions: every function returns an [`SmStatus`] (or null for
//! constructors); the last failure's message is retrievable per thread
//! via [`sm_last_error_message`]. Models are opaque handles created by
//! [`sm_model_load`] and released with [`sm_model_free`]. Strings are
//! NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use sepsis_mortality::config::{load_config, RunConfig};
use sepsis_mortality::data::Matrix;
use sepsis_mortality::error::Error;
use sepsis_mortality::learners::{predict_scores, TrainedModel};
use sepsis_mortality::pipeline;
use sepsis_mortality::synth::generate_dataset;

/// Status codes mirroring the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    /// configuration problem (bad file, bad value)
    Config = 2,
    /// data or schema problem (missing file, malformed table)
    Data = 3,
    /// training/evaluation/orchestration failure
    Pipeline = 4,
    /// a required pointer argument was null
    NullArg = 5,
    /// a string argument was not valid UTF-8
    Utf8 = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> SmStatus {
    match err.exit_code() {
        2 => SmStatus::Config,
        3 => SmStatus::Data,
        _ => SmStatus::Pipeline,
    }
}

fn fail(err: &Error) -> SmStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// # Safety
/// `ptr` must be null or point to a NUL-terminated string valid for the
/// duration of the call.
unsafe fn opt_str<'a>(ptr: *const c_char) -> Result<Option<&'a str>, SmStatus> {
    if ptr.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(ptr).to_str().map(Some).map_err(|_| {
        set_error("argument is not valid UTF-8");
        SmStatus::Utf8
    })
}

unsafe fn req_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, SmStatus> {
    match opt_str(ptr)? {
        Some(s) => Ok(s),
        None => {
            set_error(&format!("{name} must not be null"));
            Err(SmStatus::NullArg)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last error raised on this thread; valid until the next
/// failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn sm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

fn build_run_config(
    config_path: Option<&str>,
    data_dir: Option<&str>,
    out_dir: Option<&str>,
    seed: u64,
) -> Result<RunConfig, Error> {
    let mut cfg = match config_path {
        Some(path) => load_config(Path::new(path))?,
        None => RunConfig::default(),
    };
    if let Some(dir) = data_dir {
        cfg.data_dir = Some(dir.into());
    }
    if let Some(dir) = out_dir {
        cfg.out_dir = Some(dir.into());
    }
    if seed != u64::MAX {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the full pipeline. `config_path` may be null (defaults apply);
/// `data_dir` and `out_dir` override the config when non-null. Pass
/// `seed = UINT64_MAX` to keep the config's seed.
///
/// # Safety
/// All pointer arguments must be null or valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sm_run_pipeline(
    config_path: *const c_char,
    data_dir: *const c_char,
    out_dir: *const c_char,
    seed: u64,
) -> SmStatus {
    let (config_path, data_dir, out_dir) =
        match (opt_str(config_path), opt_str(data_dir), opt_str(out_dir)) {
            (Ok(c), Ok(d), Ok(o)) => (c, d, o),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
    match build_run_config(config_path, data_dir, out_dir, seed)
        .and_then(|cfg| pipeline::run_pipeline(&cfg).map(|_| ()))
    {
        Ok(()) => SmStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// Generates a synthetic dataset into `out_dir` using the `[synth]`
/// block of the config (or defaults when `config_path` is null). Pass
/// `seed = UINT64_MAX` to keep the config's seed.
///
/// # Safety
/// Pointer arguments must be null or valid NUL-terminated strings;
/// `out_dir` must not be null.
#[no_mangle]
pub unsafe extern "C" fn sm_generate_synthetic(
    config_path: *const c_char,
    out_dir: *const c_char,
    seed: u64,
) -> SmStatus {
    let config_path = match opt_str(config_path) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let out_dir = match req_str(out_dir, "out_dir") {
        Ok(s) => s,
        Err(s) => return s,
    };
    let result = build_run_config(config_path, None, Some(out_dir), seed)
        .and_then(|cfg| generate_dataset(&cfg.synth, Path::new(out_dir)).map(|_| ()));
    match result {
        Ok(()) => SmStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// Opaque handle to a trained model.
pub struct SmModel {
    inner: TrainedModel,
}

/// Loads a model JSON written by the pipeline's train stage. Returns
/// null on failure (see [`sm_last_error_message`]).
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sm_model_load(path: *const c_char) -> *mut SmModel {
    let path = match req_str(path, "path") {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    match pipeline::load_model(Path::new(path)) {
        Ok(inner) => Box::into_raw(Box::new(SmModel { inner })),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// Number of features the model expects per row.
///
/// # Safety
/// `model` must be a live handle from [`sm_model_load`].
#[no_mangle]
pub unsafe extern "C" fn sm_model_feature_count(model: *const SmModel) -> usize {
    if model.is_null() {
        set_error("model must not be null");
        return 0;
    }
    (*model).inner.n_features()
}

/// Scores `n_rows` rows of `n_cols` row-major features into
/// `out_scores` (length `n_rows`). Scores are probabilities in [0,1].
///
/// # Safety
/// `model` must be a live handle; `features` must point to
/// `n_rows * n_cols` readable doubles; `out_scores` to `n_rows`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sm_model_predict(
    model: *const SmModel,
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    out_scores: *mut f64,
) -> SmStatus {
    if model.is_null() || features.is_null() || out_scores.is_null() {
        set_error("model, features and out_scores must not be null");
        return SmStatus::NullArg;
    }
    let data = std::slice::from_raw_parts(features, n_rows * n_cols).to_vec();
    let matrix = match Matrix::from_vec(data, n_rows, n_cols) {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };
    match predict_scores(&(*model).inner, &matrix) {
        Ok(scores) => {
            std::ptr::copy_nonoverlapping(scores.as_ptr(), out_scores, n_rows);
            SmStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a handle from [`sm_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_model_free(model: *mut SmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
