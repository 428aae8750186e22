//! C ABI for the blockprop pipeline.
//!
//! Every function is callable from C through the generated
//! `include/blockprop.h`. The conventions:
//!
//! - Handles (`BpEventLog`, `BpModel`) are opaque pointers created and
//!   destroyed by this library; never free them with `free()`.
//! - Functions return a [`BpStatus`]; outputs go through out-pointers that
//!   are written only on `Ok`.
//! - After any non-`Ok` status, [`bp_last_error_message`] returns a
//!   malloc'd description of the failure for the calling thread; release
//!   it (and every other returned string) with [`bp_string_free`].
//! - Panics are caught at the boundary and reported as `Panic` instead of
//!   unwinding into the caller.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use blockprop::config::RunConfig;
use blockprop::ingest::{parse_replay_file, summarize, EventLog};
use blockprop::learner::{load_model, roc_auc, ModelKind};
use blockprop::{pipeline, Error};

/// Result of every fallible call in this ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpStatus {
    /// The call succeeded and out-parameters are valid.
    Ok = 0,
    /// Invalid configuration or arguments.
    ConfigError = 2,
    /// A required upstream artifact is missing.
    DependencyError = 3,
    /// Input data violates a contract.
    DataError = 4,
    /// A required pointer argument was null.
    NullArgument = 5,
    /// A string argument was not valid UTF-8.
    Utf8Error = 6,
    /// The library panicked; treat the handle state as poisoned.
    Panic = 7,
}

/// Opaque parsed event log.
pub struct BpEventLog {
    log: EventLog,
}

/// Opaque trained model (classifier or regressor).
pub struct BpModel {
    model: ModelKind,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let cleaned: Vec<u8> = message.bytes().filter(|&b| b != 0).collect();
    let owned = CString::new(cleaned).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(owned));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(err: &Error) -> BpStatus {
    match err.exit_code() {
        2 => BpStatus::ConfigError,
        3 => BpStatus::DependencyError,
        _ => BpStatus::DataError,
    }
}

fn fail(err: &Error) -> BpStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn guard<F: FnOnce() -> BpStatus>(body: F) -> BpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".into());
            set_error(&format!("internal panic: {message}"));
            BpStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for the call.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, BpStatus> {
    if ptr.is_null() {
        set_error(&format!("argument `{name}` is null"));
        return Err(BpStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("argument `{name}` is not valid UTF-8"));
        BpStatus::Utf8Error
    })
}

fn require_out<T>(ptr: *mut T, name: &str) -> Result<(), BpStatus> {
    if ptr.is_null() {
        set_error(&format!("out-pointer `{name}` is null"));
        Err(BpStatus::NullArgument)
    } else {
        Ok(())
    }
}

fn leak_string(text: String) -> *mut c_char {
    let cleaned: Vec<u8> = text.bytes().filter(|&b| b != 0).collect();
    CString::new(cleaned).unwrap_or_default().into_raw()
}

/// Version of the library as a static string; do not free.
#[no_mangle]
pub extern "C" fn bp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Description of the calling thread's most recent failure, or null when
/// the last call succeeded. Free with [`bp_string_free`].
#[no_mangle]
pub extern "C" fn bp_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(message) => message.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `ptr` must be null or a pointer returned by this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn bp_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Parses a replay file into an event log handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_eventlog_parse_file(
    path: *const c_char,
    out: *mut *mut BpEventLog,
) -> BpStatus {
    guard(|| {
        let path = match utf8_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        match parse_replay_file(Path::new(path), None) {
            Ok(outcome) => {
                clear_error();
                *out = Box::into_raw(Box::new(BpEventLog { log: outcome.log }));
                BpStatus::Ok
            }
            Err(err) => fail(&err),
        }
    })
}

/// Number of events in the log.
///
/// # Safety
/// `log` must be a live handle from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bp_eventlog_event_count(
    log: *const BpEventLog,
    out: *mut u64,
) -> BpStatus {
    guard(|| {
        if log.is_null() {
            set_error("argument `log` is null");
            return BpStatus::NullArgument;
        }
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        clear_error();
        *out = (*log).log.events().len() as u64;
        BpStatus::Ok
    })
}

/// Activity summary of the log as a JSON document.
///
/// # Safety
/// `log` must be a live handle from this library; `out` must be writable.
/// Free the returned string with [`bp_string_free`].
#[no_mangle]
pub unsafe extern "C" fn bp_eventlog_summary_json(
    log: *const BpEventLog,
    out: *mut *mut c_char,
) -> BpStatus {
    guard(|| {
        if log.is_null() {
            set_error("argument `log` is null");
            return BpStatus::NullArgument;
        }
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        let summary = summarize(&(*log).log);
        match serde_json::to_string_pretty(&summary) {
            Ok(text) => {
                clear_error();
                *out = leak_string(text);
                BpStatus::Ok
            }
            Err(err) => fail(&Error::from(err)),
        }
    })
}

/// Releases an event log handle. Null is a no-op.
///
/// # Safety
/// `log` must be null or a live handle that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn bp_eventlog_free(log: *mut BpEventLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// Runs one pipeline command with a key=value config document.
///
/// `command` is one of synth, ingest, features, label, train, explain,
/// ablate, regress, report, run-all. `config_text` may be empty for the
/// all-defaults run.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bp_pipeline_run(
    config_text: *const c_char,
    command: *const c_char,
) -> BpStatus {
    guard(|| {
        let config_text = match utf8_arg(config_text, "config_text") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let command = match utf8_arg(command, "command") {
            Ok(c) => c,
            Err(status) => return status,
        };
        let cfg = match RunConfig::parse(config_text) {
            Ok(cfg) => cfg,
            Err(err) => return fail(&err),
        };
        let run = match command {
            "synth" => pipeline::cmd_synth(&cfg),
            "ingest" => pipeline::cmd_ingest(&cfg),
            "features" => pipeline::cmd_features(&cfg),
            "label" => pipeline::cmd_label(&cfg),
            "train" => pipeline::cmd_train(&cfg),
            "explain" => pipeline::cmd_explain(&cfg),
            "ablate" => pipeline::cmd_ablate(&cfg),
            "regress" => pipeline::cmd_regress(&cfg),
            "report" => pipeline::cmd_report(&cfg),
            "run-all" => pipeline::cmd_run_all(&cfg),
            other => {
                let err = Error::Config(format!("unknown command `{other}`"));
                return fail(&err);
            }
        };
        match run {
            Ok(()) => {
                clear_error();
                BpStatus::Ok
            }
            Err(err) => fail(&err),
        }
    })
}

/// ROC AUC of scores against binary labels (0 or 1).
///
/// # Safety
/// `labels` and `scores` must point to `len` readable elements; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn bp_roc_auc(
    labels: *const u8,
    scores: *const f64,
    len: usize,
    out: *mut f64,
) -> BpStatus {
    guard(|| {
        if labels.is_null() || scores.is_null() {
            set_error("arguments `labels` and `scores` must not be null");
            return BpStatus::NullArgument;
        }
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        let labels = std::slice::from_raw_parts(labels, len);
        let scores = std::slice::from_raw_parts(scores, len);
        if labels.iter().any(|&l| l > 1) {
            let err = Error::Data("labels must be 0 or 1".into());
            return fail(&err);
        }
        match roc_auc(labels, scores) {
            Ok(auc) => {
                clear_error();
                *out = auc;
                BpStatus::Ok
            }
            Err(err) => fail(&err),
        }
    })
}

/// Loads a trained model saved by the pipeline.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bp_model_load_file(
    path: *const c_char,
    out: *mut *mut BpModel,
) -> BpStatus {
    guard(|| {
        let path = match utf8_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        match load_model(Path::new(path)) {
            Ok(model) => {
                clear_error();
                *out = Box::into_raw(Box::new(BpModel { model }));
                BpStatus::Ok
            }
            Err(err) => fail(&err),
        }
    })
}

/// Number of features the model expects per row.
///
/// # Safety
/// `model` must be a live handle from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bp_model_num_features(
    model: *const BpModel,
    out: *mut usize,
) -> BpStatus {
    guard(|| {
        if model.is_null() {
            set_error("argument `model` is null");
            return BpStatus::NullArgument;
        }
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        clear_error();
        *out = (*model).model.num_features();
        BpStatus::Ok
    })
}

/// Scores one feature row: probability for classifiers, value for
/// regressors.
///
/// # Safety
/// `features` must point to `len` readable doubles matching
/// [`bp_model_num_features`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bp_model_predict(
    model: *const BpModel,
    features: *const f64,
    len: usize,
    out: *mut f64,
) -> BpStatus {
    guard(|| {
        if model.is_null() || features.is_null() {
            set_error("arguments `model` and `features` must not be null");
            return BpStatus::NullArgument;
        }
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        let model = &(*model).model;
        if len != model.num_features() {
            let err = Error::Data(format!(
                "row has {len} features but the model expects {}",
                model.num_features()
            ));
            return fail(&err);
        }
        let row = std::slice::from_raw_parts(features, len);
        clear_error();
        *out = model.predict_row(row);
        BpStatus::Ok
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a live handle that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn bp_model_free(model: *mut BpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn last_error() -> String {
        let ptr = bp_last_error_message();
        assert!(!ptr.is_null(), "expected an error message");
        let text = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_string();
        unsafe { bp_string_free(ptr) };
        text
    }

    #[test]
    fn version_is_the_crate_version() {
        let v = unsafe { CStr::from_ptr(bp_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn roc_auc_matches_library_and_reports_errors() {
        let labels = [0u8, 0, 1, 1];
        let scores = [0.1, 0.4, 0.35, 0.8];
        let mut auc = 0.0;
        let status = unsafe { bp_roc_auc(labels.as_ptr(), scores.as_ptr(), 4, &mut auc) };
        assert_eq!(status, BpStatus::Ok);
        assert_eq!(auc, roc_auc(&labels, &scores).unwrap());
        assert!(bp_last_error_message().is_null());

        let one_class = [1u8, 1];
        let status = unsafe { bp_roc_auc(one_class.as_ptr(), scores.as_ptr(), 2, &mut auc) };
        assert_eq!(status, BpStatus::DataError);
        assert!(last_error().contains("both classes"));

        let status = unsafe { bp_roc_auc(std::ptr::null(), scores.as_ptr(), 2, &mut auc) };
        assert_eq!(status, BpStatus::NullArgument);
    }

    #[test]
    fn eventlog_handles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let line = r#"{"id":"e1","kind":"post","action":"create","actor":"ann","ts":"2025-01-02T03:04:05Z","text":"hi","langs":["en"]}"#;
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let cpath = c(path.to_str().unwrap());

        let mut log: *mut BpEventLog = std::ptr::null_mut();
        let status = unsafe { bp_eventlog_parse_file(cpath.as_ptr(), &mut log) };
        assert_eq!(status, BpStatus::Ok);
        let mut count = 0;
        assert_eq!(
            unsafe { bp_eventlog_event_count(log, &mut count) },
            BpStatus::Ok
        );
        assert_eq!(count, 1);

        let mut json: *mut c_char = std::ptr::null_mut();
        assert_eq!(
            unsafe { bp_eventlog_summary_json(log, &mut json) },
            BpStatus::Ok
        );
        let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap();
        assert!(text.contains("\"unique_users\": 1"));
        unsafe { bp_string_free(json) };
        unsafe { bp_eventlog_free(log) };

        let missing = c(dir.path().join("absent.ndjson").to_str().unwrap());
        let mut log2: *mut BpEventLog = std::ptr::null_mut();
        let status = unsafe { bp_eventlog_parse_file(missing.as_ptr(), &mut log2) };
        assert_eq!(status, BpStatus::DataError);
        assert!(log2.is_null());
    }

    #[test]
    fn pipeline_statuses_map_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cfg_text = format!("out_dir = {}\n", out.display());

        let bad = c("no_such_key = 1");
        let status = unsafe { bp_pipeline_run(bad.as_ptr(), c("synth").as_ptr()) };
        assert_eq!(status, BpStatus::ConfigError);

        let cfg = c(&cfg_text);
        let status = unsafe { bp_pipeline_run(cfg.as_ptr(), c("features").as_ptr()) };
        assert_eq!(status, BpStatus::DependencyError);
        assert!(last_error().contains("blockprop ingest"));

        let status = unsafe { bp_pipeline_run(cfg.as_ptr(), c("bogus").as_ptr()) };
        assert_eq!(status, BpStatus::ConfigError);
    }

    #[test]
    fn model_handles_score_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cfg_text = format!(
            "out_dir = {}\nsynth_users = 150\nmin_posts = 3\nestimators = 10\nmax_depth = 2\n\
             cv_runs = 1\ncv_folds = 2\nquantiles = 0.5\ndefinition = raw\n",
            out.display()
        );
        let cfg = c(&cfg_text);
        for command in ["synth", "ingest", "features", "label", "train"] {
            let status = unsafe { bp_pipeline_run(cfg.as_ptr(), c(command).as_ptr()) };
            assert_eq!(status, BpStatus::Ok, "command {command} failed");
        }

        let model_path = out.join("train").join("model_raw_q0.5.json");
        let cpath = c(model_path.to_str().unwrap());
        let mut model: *mut BpModel = std::ptr::null_mut();
        assert_eq!(
            unsafe { bp_model_load_file(cpath.as_ptr(), &mut model) },
            BpStatus::Ok
        );

        let mut width = 0usize;
        assert_eq!(
            unsafe { bp_model_num_features(model, &mut width) },
            BpStatus::Ok
        );
        assert!(width > 0);

        let row = vec![0.0f64; width];
        let mut score = f64::NAN;
        assert_eq!(
            unsafe { bp_model_predict(model, row.as_ptr(), width, &mut score) },
            BpStatus::Ok
        );
        assert!((0.0..=1.0).contains(&score));

        let mut bad_score = 0.0;
        let status = unsafe { bp_model_predict(model, row.as_ptr(), width - 1, &mut bad_score) };
        assert_eq!(status, BpStatus::DataError);
        assert!(last_error().contains("expects"));

        unsafe { bp_model_free(model) };
    }
}
