//! C ABI for the trade-forensics pipeline.
//!
//! The surface follows the usual C-binding conventions: opaque handles,
//! integer status codes, UTF-8 `char*` in and out, and explicit free
//! functions for everything this library allocates. The authoritative header
//! lives at `include/trade_forensics.h` and is kept in lockstep with this
//! file by the `header_matches_exports` test.
//!
//! Errors: every fallible call returns a [`TfStatus`]; the detail message of
//! the most recent failure on the current thread is available through
//! `tf_last_error_message`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::PathBuf;

use libc::c_char;

use trade_forensics::config::PipelineConfig;
use trade_forensics::error::Error;
use trade_forensics::pipeline::{run_pipeline, RunManifest, RunMode};
use trade_forensics::synthgen::{generate_dataset, PlantSpec};

/// Status codes mirror the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    ConfigError = 1,
    IoError = 2,
    StageError = 3,
    NullArgument = 4,
    InvalidUtf8 = 5,
    InternalError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).ok();
    });
}

fn status_of(e: &Error) -> TfStatus {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::DegenerateInput(_) => TfStatus::ConfigError,
        Error::Io(_) => TfStatus::IoError,
        Error::Stage { .. } => TfStatus::StageError,
    }
}

fn fail(e: &Error) -> TfStatus {
    set_last_error(e.to_string());
    status_of(e)
}

/// Opaque result of one pipeline run.
pub struct TfRun {
    manifest: RunManifest,
}

unsafe fn utf8_arg<'a>(ptr: *const c_char) -> Result<&'a str, TfStatus> {
    if ptr.is_null() {
        set_last_error("null pointer argument".into());
        return Err(TfStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("argument is not valid UTF-8".into());
        TfStatus::InvalidUtf8
    })
}

unsafe fn optional_utf8_arg<'a>(ptr: *const c_char) -> Result<Option<&'a str>, TfStatus> {
    if ptr.is_null() {
        return Ok(None);
    }
    utf8_arg(ptr).map(Some)
}

fn run_ffi(
    input: &str,
    out_dir: &str,
    config_path: Option<&str>,
    mode: RunMode,
    out_run: *mut *mut TfRun,
) -> TfStatus {
    let mut config = match config_path {
        Some(path) => match PipelineConfig::load(std::path::Path::new(path)) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        },
        None => PipelineConfig::default(),
    };
    config.input = Some(PathBuf::from(input));
    config.out_dir = Some(PathBuf::from(out_dir));
    match run_pipeline(&config, mode) {
        Ok(manifest) => {
            let run = Box::new(TfRun { manifest });
            unsafe { *out_run = Box::into_raw(run) };
            TfStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Run the full pipeline. On success, `*out_run` owns the run handle; free
/// it with `tf_run_free`.
///
/// # Safety
/// `input_path` and `out_dir` must be valid NUL-terminated strings;
/// `config_path` may be NULL; `out_run` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tf_analyze(
    input_path: *const c_char,
    out_dir: *const c_char,
    config_path: *const c_char,
    out_run: *mut *mut TfRun,
) -> TfStatus {
    if out_run.is_null() {
        set_last_error("out_run is null".into());
        return TfStatus::NullArgument;
    }
    *out_run = std::ptr::null_mut();
    let (input, out, config) = match (
        utf8_arg(input_path),
        utf8_arg(out_dir),
        optional_utf8_arg(config_path),
    ) {
        (Ok(i), Ok(o), Ok(c)) => (i, o, c),
        (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
    };
    run_ffi(input, out, config, RunMode::Full, out_run)
}

/// Parse the input and write only the reject quarantine.
///
/// # Safety
/// Same contract as [`tf_analyze`].
#[no_mangle]
pub unsafe extern "C" fn tf_ingest(
    input_path: *const c_char,
    out_dir: *const c_char,
    config_path: *const c_char,
    out_run: *mut *mut TfRun,
) -> TfStatus {
    if out_run.is_null() {
        set_last_error("out_run is null".into());
        return TfStatus::NullArgument;
    }
    *out_run = std::ptr::null_mut();
    let (input, out, config) = match (
        utf8_arg(input_path),
        utf8_arg(out_dir),
        optional_utf8_arg(config_path),
    ) {
        (Ok(i), Ok(o), Ok(c)) => (i, o, c),
        (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
    };
    run_ffi(input, out, config, RunMode::IngestOnly, out_run)
}

/// Generate a synthetic dataset with planted ground truth, writing
/// `synthetic.csv` and `ground_truth.json` into `out_dir`.
///
/// # Safety
/// `out_dir` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tf_synth(
    records: u64,
    seed: u64,
    outliers: u64,
    vague: u64,
    mega: u64,
    defect_rate: f64,
    out_dir: *const c_char,
) -> TfStatus {
    let out = match utf8_arg(out_dir) {
        Ok(o) => o,
        Err(s) => return s,
    };
    let spec = PlantSpec {
        n_records: records as usize,
        n_price_outliers: outliers as usize,
        n_vague: vague as usize,
        n_mega_trades: mega as usize,
        defect_rate,
        seed,
        ..PlantSpec::default()
    };
    let (csv, truth) = match generate_dataset(&spec) {
        Ok(pair) => pair,
        Err(e) => return fail(&e),
    };
    let dir = PathBuf::from(out);
    let io = std::fs::create_dir_all(&dir)
        .and_then(|_| std::fs::write(dir.join("synthetic.csv"), csv))
        .and_then(|_| {
            let json = serde_json::to_string_pretty(&truth).expect("ground truth serializes");
            std::fs::write(dir.join("ground_truth.json"), json)
        });
    match io {
        Ok(()) => TfStatus::Ok,
        Err(e) => {
            set_last_error(e.to_string());
            TfStatus::IoError
        }
    }
}

/// Records parsed in this run.
///
/// # Safety
/// `run` must be a live handle from `tf_analyze`/`tf_ingest`.
#[no_mangle]
pub unsafe extern "C" fn tf_run_parsed(run: *const TfRun) -> u64 {
    run.as_ref().map_or(0, |r| r.manifest.counts.parsed as u64)
}

/// Lines quarantined in this run.
///
/// # Safety
/// `run` must be a live handle from `tf_analyze`/`tf_ingest`.
#[no_mangle]
pub unsafe extern "C" fn tf_run_rejected(run: *const TfRun) -> u64 {
    run.as_ref().map_or(0, |r| r.manifest.counts.rejected as u64)
}

/// Case-file entries produced by this run.
///
/// # Safety
/// `run` must be a live handle from `tf_analyze`/`tf_ingest`.
#[no_mangle]
pub unsafe extern "C" fn tf_run_case_entries(run: *const TfRun) -> u64 {
    run.as_ref()
        .map_or(0, |r| r.manifest.counts.case_file_entries as u64)
}

/// Mega-trades flagged by this run.
///
/// # Safety
/// `run` must be a live handle from `tf_analyze`/`tf_ingest`.
#[no_mangle]
pub unsafe extern "C" fn tf_run_mega_trades(run: *const TfRun) -> u64 {
    run.as_ref().map_or(0, |r| r.manifest.counts.mega_trades as u64)
}

/// Full run manifest as a JSON string; free it with `tf_string_free`.
/// Returns NULL on a null handle.
///
/// # Safety
/// `run` must be a live handle from `tf_analyze`/`tf_ingest`.
#[no_mangle]
pub unsafe extern "C" fn tf_run_manifest_json(run: *const TfRun) -> *mut c_char {
    let Some(run) = run.as_ref() else {
        return std::ptr::null_mut();
    };
    match serde_json::to_string(&run.manifest) {
        Ok(json) => CString::new(json).map_or(std::ptr::null_mut(), CString::into_raw),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Release a run handle. NULL is ignored.
///
/// # Safety
/// `run` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn tf_run_free(run: *mut TfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Release a string allocated by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn tf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Detail message of the most recent failure on this thread, or NULL when
/// nothing failed yet. Free with `tf_string_free`.
#[no_mangle]
pub extern "C" fn tf_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null_mut(), |msg| msg.clone().into_raw())
    })
}

/// Static library version string; do not free.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
