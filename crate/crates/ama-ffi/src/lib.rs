//! C ABI for the core training pipeline.
//!
//! All entry points return an `AmaStatus` code; the out-parameter is only
//! written on `AMA_OK`. On failure `ama_last_error_message` returns a
//! thread-local description of the most recent error. Handles are opaque
//! and must be released with their matching `_free` function.

use ama_core::checkpoint::compute_checkpoint_score;
use ama_core::config::run_from_config;
use ama_core::error::AmaError;
use ama_core::io::{load_datasets, load_params, save_params};
use ama_core::losses::ParamVector;
use ama_core::TrainResult;
use libc::{c_char, c_double, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

/// Result codes mirroring the CLI exit codes, plus argument errors.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmaStatus {
    AmaOk = 0,
    AmaConfigError = 1,
    AmaRuntimeError = 2,
    AmaIoError = 3,
    AmaInvalidArgument = 4,
}

/// Opaque handle to a completed training run.
pub struct AmaTrainResult {
    inner: TrainResult,
}

/// Opaque handle to a parameter vector.
pub struct AmaParams {
    inner: ParamVector,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &AmaError) -> AmaStatus {
    match err.exit_code() {
        1 => AmaStatus::AmaConfigError,
        3 => AmaStatus::AmaIoError,
        _ => AmaStatus::AmaRuntimeError,
    }
}

fn fail(err: AmaError) -> AmaStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn invalid(message: &str) -> AmaStatus {
    set_error(message);
    AmaStatus::AmaInvalidArgument
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, AmaStatus> {
    if ptr.is_null() {
        return Err(invalid("null path"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(invalid("path is not valid UTF-8")),
    }
}

/// Message for the most recent error on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ama_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Runs the full pipeline from a JSON config file; artifacts are written
/// to the configured output directory and the result handle is returned.
///
/// # Safety
/// `config_path` must be a NUL-terminated string and `out_result` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn ama_run_from_config(
    config_path: *const c_char,
    out_result: *mut *mut AmaTrainResult,
) -> AmaStatus {
    if out_result.is_null() {
        return invalid("null out_result");
    }
    let path = match path_arg(config_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match run_from_config(path) {
        Ok(result) => {
            *out_result = Box::into_raw(Box::new(AmaTrainResult { inner: result }));
            AmaStatus::AmaOk
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `result` must come from `ama_run_from_config` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ama_train_result_free(result: *mut AmaTrainResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of tasks in the run, or 0 for a null handle.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ama_train_result_num_tasks(result: *const AmaTrainResult) -> size_t {
    if result.is_null() {
        return 0;
    }
    (*result).inner.sample_counts.len()
}

/// Samples drawn from one task over the run, or -1 for a bad handle/index.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ama_train_result_sample_count(
    result: *const AmaTrainResult,
    task: size_t,
) -> i64 {
    if result.is_null() {
        return -1;
    }
    match (&(*result).inner.sample_counts).get(task) {
        Some(&c) => c as i64,
        None => -1,
    }
}

/// Copies the final parameters into a fresh `AmaParams` handle.
///
/// # Safety
/// `result` must be a live handle; `out_params` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ama_train_result_final_params(
    result: *const AmaTrainResult,
    out_params: *mut *mut AmaParams,
) -> AmaStatus {
    if result.is_null() || out_params.is_null() {
        return invalid("null argument");
    }
    let theta = (*result).inner.final_theta.clone();
    *out_params = Box::into_raw(Box::new(AmaParams { inner: theta }));
    AmaStatus::AmaOk
}

/// Loads a params binary into a handle.
///
/// # Safety
/// `path` must be NUL-terminated; `out_params` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ama_params_load(
    path: *const c_char,
    out_params: *mut *mut AmaParams,
) -> AmaStatus {
    if out_params.is_null() {
        return invalid("null out_params");
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_params(path) {
        Ok(theta) => {
            *out_params = Box::into_raw(Box::new(AmaParams { inner: theta }));
            AmaStatus::AmaOk
        }
        Err(e) => fail(e),
    }
}

/// Writes a params handle to a binary file.
///
/// # Safety
/// `params` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ama_params_save(
    params: *const AmaParams,
    path: *const c_char,
) -> AmaStatus {
    if params.is_null() {
        return invalid("null params");
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match save_params(&(*params).inner, path) {
        Ok(()) => AmaStatus::AmaOk,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `params` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ama_params_free(params: *mut AmaParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Dimension of a parameter vector, or 0 for a null handle.
///
/// # Safety
/// `params` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ama_params_dim(params: *const AmaParams) -> size_t {
    if params.is_null() {
        return 0;
    }
    (*params).inner.dim()
}

/// Copies the parameter values into a caller-owned buffer of length `len`
/// (which must equal the dimension).
///
/// # Safety
/// `buffer` must point to at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ama_params_copy_values(
    params: *const AmaParams,
    buffer: *mut c_double,
    len: size_t,
) -> AmaStatus {
    if params.is_null() || buffer.is_null() {
        return invalid("null argument");
    }
    let values = &(*params).inner.values;
    if len != values.len() {
        return invalid("buffer length does not match dimension");
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), buffer, len);
    AmaStatus::AmaOk
}

/// Mean per-task preference accuracy of saved params on a JSONL dataset.
///
/// # Safety
/// Both paths must be NUL-terminated; `out_accuracy` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ama_evaluate(
    params_path: *const c_char,
    dataset_path: *const c_char,
    out_accuracy: *mut c_double,
) -> AmaStatus {
    if out_accuracy.is_null() {
        return invalid("null out_accuracy");
    }
    let params_path = match path_arg(params_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let dataset_path = match path_arg(dataset_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let run = (|| {
        let theta = load_params(params_path)?;
        let datasets = load_datasets(dataset_path)?;
        let score = compute_checkpoint_score(&theta, 0, &datasets)?;
        Ok::<f64, AmaError>(score.combined_accuracy)
    })();
    match run {
        Ok(acc) => {
            *out_accuracy = acc;
            AmaStatus::AmaOk
        }
        Err(e) => fail(e),
    }
}
