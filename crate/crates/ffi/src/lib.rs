//! C ABI over the `pkde` crate.
//!
//! Datasets and detection results are opaque handles created by `pkde_*`
//! constructors and released with the matching `*_free` function. Every
//! fallible call returns a [`PkdeStatus`]; on failure a message is kept in
//! thread-local storage and can be read with [`pkde_last_error_message`]
//! until the next failing call on the same thread.
//!
//! Passing a pointer that did not come from this library, or one that was
//! already freed, is undefined behavior. Null pointers are detected and
//! reported as `PKDE_STATUS_NULL_POINTER`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pkde::datasets::{gen_synthetic, load_csv, Dataset, LabelColumn, SynthSpec};
use pkde::detector::{fit_scores, DetectorConfig, DetectorId};
use pkde::kde::BandwidthRule;
use pkde::metrics::f1_score;
use pkde::{DetectionResult, Error, ErrorClass, Matrix};

/// Status codes; the non-zero data values match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkdeStatus {
    Ok = 0,
    InvalidArgument = 1,
    DataError = 2,
    NumericalError = 3,
    NullPointer = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkdeBandwidthRule {
    Scott = 0,
    ScottSquared = 1,
}

/// Detector settings. Zero in `fixed_dim` or `neighbors` means "unset".
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PkdeConfig {
    pub contamination: f64,
    pub variance_threshold: f64,
    pub fixed_dim: usize,
    pub bandwidth_rule: PkdeBandwidthRule,
    pub neighbors: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PkdeF1 {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Opaque dataset handle.
pub struct PkdeDataset(Dataset);

/// Opaque detection result handle.
pub struct PkdeResult(DetectionResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: PkdeStatus, msg: impl Into<String>) -> PkdeStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> PkdeStatus {
    match e.class() {
        ErrorClass::Usage => PkdeStatus::InvalidArgument,
        ErrorClass::Data => match e {
            Error::InvalidInput(_) => PkdeStatus::InvalidArgument,
            _ => PkdeStatus::DataError,
        },
        ErrorClass::Numerical => PkdeStatus::NumericalError,
    }
}

fn from_error(e: Error) -> PkdeStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

/// Runs `f`, converting panics into `PKDE_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> PkdeStatus) -> PkdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(PkdeStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, PkdeStatus> {
    if p.is_null() {
        return Err(fail(PkdeStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        fail(
            PkdeStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> PkdeStatus {
    *out = Box::into_raw(Box::new(value));
    PkdeStatus::Ok
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn pkde_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pkde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn pkde_config_default() -> PkdeConfig {
    let d = DetectorConfig::default();
    PkdeConfig {
        contamination: d.contamination,
        variance_threshold: d.variance_threshold,
        fixed_dim: 0,
        bandwidth_rule: PkdeBandwidthRule::Scott,
        neighbors: 0,
    }
}

impl From<&PkdeConfig> for DetectorConfig {
    fn from(c: &PkdeConfig) -> Self {
        DetectorConfig {
            contamination: c.contamination,
            variance_threshold: c.variance_threshold,
            fixed_dim: (c.fixed_dim != 0).then_some(c.fixed_dim),
            bandwidth_rule: match c.bandwidth_rule {
                PkdeBandwidthRule::Scott => BandwidthRule::Scott,
                PkdeBandwidthRule::ScottSquared => BandwidthRule::ScottSquared,
            },
            neighbors: (c.neighbors != 0).then_some(c.neighbors),
        }
    }
}

/// Copies a row-major `rows × cols` array. `labels` may be null; otherwise
/// it must hold `rows` values, each 0 or 1.
#[no_mangle]
pub unsafe extern "C" fn pkde_dataset_from_rows(
    data: *const f64,
    rows: usize,
    cols: usize,
    labels: *const u8,
    out: *mut *mut PkdeDataset,
) -> PkdeStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return fail(PkdeStatus::NullPointer, "data or out is null");
        }
        let Some(len) = rows.checked_mul(cols) else {
            return fail(PkdeStatus::InvalidArgument, "rows * cols overflows");
        };
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let labels = (!labels.is_null()).then(|| std::slice::from_raw_parts(labels, rows).to_vec());
        match Matrix::new(rows, cols, values).and_then(|x| Dataset::new(x, labels, "ffi")) {
            Ok(ds) => store(out, PkdeDataset(ds)),
            Err(e) => from_error(e),
        }
    })
}

/// Loads a CSV file. `label_column` may be null (no labels), "last",
/// "auto", or a header name.
#[no_mangle]
pub unsafe extern "C" fn pkde_dataset_load_csv(
    path: *const c_char,
    has_header: bool,
    label_column: *const c_char,
    out: *mut *mut PkdeDataset,
) -> PkdeStatus {
    guard(|| {
        if out.is_null() {
            return fail(PkdeStatus::NullPointer, "out is null");
        }
        let path = match c_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let label = if label_column.is_null() {
            LabelColumn::None
        } else {
            match c_str(label_column, "label_column").map(str::parse::<LabelColumn>) {
                Ok(Ok(l)) => l,
                Ok(Err(e)) => return from_error(e),
                Err(s) => return s,
            }
        };
        match load_csv(path, has_header, &label) {
            Ok(ds) => store(out, PkdeDataset(ds)),
            Err(e) => from_error(e),
        }
    })
}

/// Generates a synthetic dataset with default shape parameters. `kind` is
/// one of "gaussian", "gaussian-cov", "dual-density", "gaussian-planted".
#[no_mangle]
pub unsafe extern "C" fn pkde_dataset_synth(
    kind: *const c_char,
    n_normal: usize,
    n_outlier: usize,
    dim: usize,
    seed: u64,
    out: *mut *mut PkdeDataset,
) -> PkdeStatus {
    guard(|| {
        if out.is_null() {
            return fail(PkdeStatus::NullPointer, "out is null");
        }
        let kind = match c_str(kind, "kind") {
            Ok(k) => k,
            Err(s) => return s,
        };
        match kind
            .parse()
            .and_then(|k| gen_synthetic(&SynthSpec::new(k, n_normal, n_outlier, dim, seed)))
        {
            Ok(ds) => store(out, PkdeDataset(ds)),
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn pkde_dataset_rows(ds: *const PkdeDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n())
}

#[no_mangle]
pub unsafe extern "C" fn pkde_dataset_cols(ds: *const PkdeDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.d())
}

#[no_mangle]
pub unsafe extern "C" fn pkde_dataset_has_labels(ds: *const PkdeDataset) -> bool {
    ds.as_ref().is_some_and(|d| d.0.labels.is_some())
}

/// Copies the ground-truth labels into `out`, which must hold `len` bytes
/// with `len == rows`.
#[no_mangle]
pub unsafe extern "C" fn pkde_dataset_labels(
    ds: *const PkdeDataset,
    out: *mut u8,
    len: usize,
) -> PkdeStatus {
    guard(|| {
        let Some(ds) = ds.as_ref() else {
            return fail(PkdeStatus::NullPointer, "dataset is null");
        };
        if out.is_null() {
            return fail(PkdeStatus::NullPointer, "out is null");
        }
        let Some(labels) = &ds.0.labels else {
            return fail(PkdeStatus::DataError, "dataset has no labels");
        };
        copy_out(labels, out, len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn pkde_dataset_free(ds: *mut PkdeDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Runs the named detector ("pkde", "mahalanobis", "knn-dist", "lof").
#[no_mangle]
pub unsafe extern "C" fn pkde_detect(
    detector: *const c_char,
    ds: *const PkdeDataset,
    config: *const PkdeConfig,
    out: *mut *mut PkdeResult,
) -> PkdeStatus {
    guard(|| {
        if out.is_null() || config.is_null() {
            return fail(PkdeStatus::NullPointer, "config or out is null");
        }
        let Some(ds) = ds.as_ref() else {
            return fail(PkdeStatus::NullPointer, "dataset is null");
        };
        let name = match c_str(detector, "detector") {
            Ok(n) => n,
            Err(s) => return s,
        };
        let cfg = DetectorConfig::from(&*config);
        let run = || -> pkde::Result<DetectionResult> {
            let id: DetectorId = name.parse()?;
            cfg.validate()?;
            fit_scores(id, &ds.0.x, &cfg)?.label(cfg.contamination)
        };
        match run() {
            Ok(r) => store(out, PkdeResult(r)),
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn pkde_result_len(res: *const PkdeResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.scores.len())
}

#[no_mangle]
pub unsafe extern "C" fn pkde_result_k_used(res: *const PkdeResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.k_used)
}

#[no_mangle]
pub unsafe extern "C" fn pkde_result_reduced_dim(res: *const PkdeResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.reduced_dim)
}

/// Seconds spent fitting, or a negative value for a null handle.
#[no_mangle]
pub unsafe extern "C" fn pkde_result_fit_time(res: *const PkdeResult) -> f64 {
    res.as_ref().map_or(-1.0, |r| r.0.fit_time)
}

#[no_mangle]
pub unsafe extern "C" fn pkde_result_score_time(res: *const PkdeResult) -> f64 {
    res.as_ref().map_or(-1.0, |r| r.0.score_time)
}

unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, len: usize) -> PkdeStatus {
    if len != src.len() {
        return fail(
            PkdeStatus::InvalidArgument,
            format!("buffer holds {len} values, need {}", src.len()),
        );
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, len);
    PkdeStatus::Ok
}

/// Copies anomaly scores (higher = more anomalous) into `out[0..len]`.
#[no_mangle]
pub unsafe extern "C" fn pkde_result_scores(
    res: *const PkdeResult,
    out: *mut f64,
    len: usize,
) -> PkdeStatus {
    guard(|| match (res.as_ref(), out.is_null()) {
        (Some(r), false) => copy_out(&r.0.scores, out, len),
        _ => fail(PkdeStatus::NullPointer, "result or out is null"),
    })
}

/// Copies 0/1 outlier labels into `out[0..len]`.
#[no_mangle]
pub unsafe extern "C" fn pkde_result_labels(
    res: *const PkdeResult,
    out: *mut u8,
    len: usize,
) -> PkdeStatus {
    guard(|| match (res.as_ref(), out.is_null()) {
        (Some(r), false) => copy_out(&r.0.labels, out, len),
        _ => fail(PkdeStatus::NullPointer, "result or out is null"),
    })
}

#[no_mangle]
pub unsafe extern "C" fn pkde_result_free(res: *mut PkdeResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Precision, recall and F1 of `predicted` against `truth`, both `len`
/// bytes of 0/1.
#[no_mangle]
pub unsafe extern "C" fn pkde_f1_score(
    predicted: *const u8,
    truth: *const u8,
    len: usize,
    out: *mut PkdeF1,
) -> PkdeStatus {
    guard(|| {
        if predicted.is_null() || truth.is_null() || out.is_null() {
            return fail(PkdeStatus::NullPointer, "predicted, truth or out is null");
        }
        let p = std::slice::from_raw_parts(predicted, len);
        let t = std::slice::from_raw_parts(truth, len);
        match f1_score(p, t) {
            Ok(s) => {
                *out = PkdeF1 {
                    tp: s.tp,
                    fp: s.fp,
                    fn_: s.fn_,
                    tn: s.tn,
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                };
                PkdeStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
