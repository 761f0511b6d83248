//! C ABI over the verichain scoring and evaluation primitives.
//!
//! Conventions:
//!
//! - Every fallible function returns a [`VcStatus`] and writes results
//!   through out-pointers. On failure, [`vc_last_error_message`] describes
//!   the error for the calling thread.
//! - Handles are opaque. Each `*_new` has a matching `*_free`; freeing null
//!   is a no-op.
//! - Strings returned to the caller are owned by the caller and released
//!   with [`vc_string_free`].
//! - Panics never cross the boundary; they surface as `VC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use verichain::backend::{FinishReason, Generation};
use verichain::datasets::DatasetKind;
use verichain::entailment::SemanticPartition;
use verichain::entropy::{
    length_normalized_entropy, lexical_similarity_uncertainty, predictive_entropy, rouge_l_f1,
    rouge_tokens, semantic_entropy, SampleSet,
};
use verichain::evaluation::{accuracy, auroc, build_report, Cell, ScoredItem};
use verichain::verification::uncertainty_level;
use verichain::{Error, Method};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    InsufficientSamples = 4,
    DegenerateSample = 5,
    UndefinedMetric = 6,
    ContractViolation = 7,
    Capability = 8,
    Internal = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: VcStatus, msg: impl Into<String>) -> VcStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> VcStatus {
    let status = match &e {
        Error::InsufficientSamples { .. } => VcStatus::InsufficientSamples,
        Error::DegenerateSample(_) => VcStatus::DegenerateSample,
        Error::UndefinedMetric(_) => VcStatus::UndefinedMetric,
        Error::ContractViolation(_) => VcStatus::ContractViolation,
        Error::Capability(_) => VcStatus::Capability,
        Error::Config(_) => VcStatus::InvalidArgument,
        _ => VcStatus::Internal,
    };
    fail(status, e.to_string())
}

/// Clear the thread's error slot, run `f`, and convert panics.
fn guard(f: impl FnOnce() -> VcStatus) -> VcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(VcStatus::Panic, "panic inside verichain"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, VcStatus> {
    if p.is_null() {
        return Err(fail(VcStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VcStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> VcStatus {
    if out.is_null() {
        return fail(VcStatus::NullPointer, "output pointer is null");
    }
    *out = value;
    VcStatus::Ok
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> VcStatus {
    match CString::new(s) {
        Ok(c) => write_out(out, c.into_raw()),
        Err(_) => fail(VcStatus::Internal, "string contains an interior NUL"),
    }
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn vc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// ROUGE-L F1 between two texts, tokenized by lowercase whitespace split.
///
/// # Safety
/// `reference` and `candidate` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vc_rouge_l_f1(
    reference: *const c_char,
    candidate: *const c_char,
    out: *mut f64,
) -> VcStatus {
    guard(|| {
        let r = try_ffi!(str_arg(reference, "reference"));
        let c = try_ffi!(str_arg(candidate, "candidate"));
        write_out(out, rouge_l_f1(&rouge_tokens(r), &rouge_tokens(c)))
    })
}

/// Fraction of inconsistent statements; `(0, 0)` gives 1.0 and sets
/// `out_degenerate`.
///
/// # Safety
/// Out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn vc_uncertainty_level(
    inconsistent: usize,
    total: usize,
    out_value: *mut f64,
    out_degenerate: *mut bool,
) -> VcStatus {
    guard(|| {
        if out_value.is_null() || out_degenerate.is_null() {
            return fail(VcStatus::NullPointer, "output pointer is null");
        }
        match uncertainty_level(inconsistent, total) {
            Ok(l) => {
                *out_value = l.value;
                *out_degenerate = l.degenerate;
                VcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Uncertainty scores paired with answer correctness.
pub struct VcScoreSet {
    items: Vec<ScoredItem>,
}

#[no_mangle]
pub extern "C" fn vc_score_set_new() -> *mut VcScoreSet {
    Box::into_raw(Box::new(VcScoreSet { items: Vec::new() }))
}

/// # Safety
/// `set` must come from [`vc_score_set_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn vc_score_set_free(set: *mut VcScoreSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

unsafe fn handle<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, VcStatus> {
    p.as_mut()
        .ok_or_else(|| fail(VcStatus::NullPointer, format!("`{name}` is null")))
}

/// # Safety
/// `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vc_score_set_push(set: *mut VcScoreSet, uncertainty: f64, correct: bool) -> VcStatus {
    guard(|| {
        let set = try_ffi!(handle(set, "set"));
        if !uncertainty.is_finite() {
            return fail(VcStatus::InvalidArgument, "uncertainty must be finite");
        }
        set.items.push(ScoredItem::new(uncertainty, correct));
        VcStatus::Ok
    })
}

/// # Safety
/// `set` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn vc_score_set_len(set: *const VcScoreSet) -> usize {
    set.as_ref().map_or(0, |s| s.items.len())
}

/// `VC_STATUS_UNDEFINED_METRIC` when only one class is present.
///
/// # Safety
/// `set` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vc_score_set_auroc(set: *mut VcScoreSet, out: *mut f64) -> VcStatus {
    guard(|| {
        let set = try_ffi!(handle(set, "set"));
        match auroc(&set.items) {
            Ok(v) => write_out(out, v),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `set` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vc_score_set_accuracy(set: *mut VcScoreSet, out: *mut f64) -> VcStatus {
    guard(|| {
        let set = try_ffi!(handle(set, "set"));
        match accuracy(&set.items) {
            Ok(v) => write_out(out, v),
            Err(e) => from_error(e),
        }
    })
}

/// Sampled answers for one question.
pub struct VcSampleSet {
    inner: SampleSet,
}

/// # Safety
/// `question` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vc_sample_set_new(question: *const c_char) -> *mut VcSampleSet {
    let mut handle = ptr::null_mut();
    let status = guard(|| {
        let q = try_ffi!(str_arg(question, "question"));
        handle = Box::into_raw(Box::new(VcSampleSet {
            inner: SampleSet {
                question_id: String::new(),
                question_text: q.to_string(),
                generations: Vec::new(),
            },
        }));
        VcStatus::Ok
    });
    if status == VcStatus::Ok {
        handle
    } else {
        ptr::null_mut()
    }
}

/// # Safety
/// `set` must come from [`vc_sample_set_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn vc_sample_set_free(set: *mut VcSampleSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Add one generation. `logprobs` may be null when the backend had none;
/// otherwise it points to `n_logprobs` per-token log-probabilities.
///
/// # Safety
/// `text` must be NUL-terminated; `logprobs` must be null or readable for
/// `n_logprobs` values.
#[no_mangle]
pub unsafe extern "C" fn vc_sample_set_add(
    set: *mut VcSampleSet,
    text: *const c_char,
    logprobs: *const f64,
    n_logprobs: usize,
) -> VcStatus {
    guard(|| {
        let set = try_ffi!(handle(set, "set"));
        let text = try_ffi!(str_arg(text, "text"));
        let token_logprobs = if logprobs.is_null() {
            None
        } else {
            let lp = std::slice::from_raw_parts(logprobs, n_logprobs);
            if lp.iter().any(|x| !x.is_finite() || *x > 0.0) {
                return fail(VcStatus::InvalidArgument, "logprobs must be finite and <= 0");
            }
            Some(lp.to_vec())
        };
        set.inner.generations.push(Generation {
            text: text.to_string(),
            tokens: Vec::new(),
            token_logprobs,
            finish_reason: FinishReason::Stop,
        });
        VcStatus::Ok
    })
}

unsafe fn sample_score(
    set: *mut VcSampleSet,
    out: *mut f64,
    f: impl FnOnce(&SampleSet) -> verichain::Result<f64>,
) -> VcStatus {
    guard(|| {
        let set = try_ffi!(handle(set, "set"));
        match f(&set.inner) {
            Ok(v) => write_out(out, v),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `set` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vc_sample_set_lexical_similarity(set: *mut VcSampleSet, out: *mut f64) -> VcStatus {
    sample_score(set, out, lexical_similarity_uncertainty)
}

/// # Safety
/// `set` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vc_sample_set_predictive_entropy(set: *mut VcSampleSet, out: *mut f64) -> VcStatus {
    sample_score(set, out, predictive_entropy)
}

/// # Safety
/// `set` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vc_sample_set_length_normalized_entropy(
    set: *mut VcSampleSet,
    out: *mut f64,
) -> VcStatus {
    sample_score(set, out, length_normalized_entropy)
}

/// Semantic entropy with a caller-supplied clustering: `cluster_ids[i]` is
/// the cluster label of generation `i`. Labels are arbitrary integers.
///
/// # Safety
/// `set` must be a live handle; `cluster_ids` readable for `n` values;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vc_sample_set_semantic_entropy(
    set: *mut VcSampleSet,
    cluster_ids: *const usize,
    n: usize,
    out: *mut f64,
) -> VcStatus {
    if cluster_ids.is_null() {
        return fail(VcStatus::NullPointer, "`cluster_ids` is null");
    }
    let ids = std::slice::from_raw_parts(cluster_ids, n).to_vec();
    sample_score(set, out, move |s| {
        if ids.len() != s.generations.len() {
            return Err(Error::ContractViolation(format!(
                "{} cluster ids for {} generations",
                ids.len(),
                s.generations.len()
            )));
        }
        let mut labels: Vec<usize> = Vec::new();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            match labels.iter().position(|l| l == id) {
                Some(c) => clusters[c].push(i),
                None => {
                    labels.push(*id);
                    clusters.push(vec![i]);
                }
            }
        }
        let partition = SemanticPartition {
            clusters,
            context: s.question_text.clone(),
        };
        semantic_entropy(s, &partition)
    })
}

/// AUROC cells collected for a benchmark table.
pub struct VcReport {
    cells: Vec<Cell>,
}

#[no_mangle]
pub extern "C" fn vc_report_new() -> *mut VcReport {
    Box::into_raw(Box::new(VcReport { cells: Vec::new() }))
}

/// # Safety
/// `report` must come from [`vc_report_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn vc_report_free(report: *mut VcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Add one cell. `method` is e.g. `two_phase`, `dataset` e.g. `medqa`.
/// Pass NaN as `auroc` for an undefined cell.
///
/// # Safety
/// `report` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vc_report_add_cell(
    report: *mut VcReport,
    model: *const c_char,
    method: *const c_char,
    dataset: *const c_char,
    auroc: f64,
    n_items: usize,
    n_correct: usize,
) -> VcStatus {
    guard(|| {
        let report = try_ffi!(handle(report, "report"));
        let model = try_ffi!(str_arg(model, "model"));
        let method: Method = match try_ffi!(str_arg(method, "method")).parse() {
            Ok(m) => m,
            Err(e) => return fail(VcStatus::InvalidArgument, format!("{e}")),
        };
        let dataset: DatasetKind = match try_ffi!(str_arg(dataset, "dataset")).parse() {
            Ok(d) => d,
            Err(e) => return fail(VcStatus::InvalidArgument, format!("{e}")),
        };
        if n_correct > n_items {
            return fail(VcStatus::InvalidArgument, "n_correct exceeds n_items");
        }
        report.cells.push(Cell {
            model: model.to_string(),
            method,
            dataset,
            auroc: (!auroc.is_nan()).then_some(auroc),
            n_items,
            n_correct,
        });
        VcStatus::Ok
    })
}

unsafe fn render(report: *mut VcReport, out: *mut *mut c_char, csv: bool) -> VcStatus {
    guard(|| {
        let report = try_ffi!(handle(report, "report"));
        match build_report(report.cells.clone()) {
            Ok(r) => write_string(out, if csv { r.render_csv() } else { r.render_text() }),
            Err(e) => from_error(e),
        }
    })
}

/// Aligned text table; free the result with [`vc_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vc_report_render_text(report: *mut VcReport, out: *mut *mut c_char) -> VcStatus {
    render(report, out, false)
}

/// `model,method,dataset,auroc,n_items,n_correct` rows; free the result
/// with [`vc_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vc_report_render_csv(report: *mut VcReport, out: *mut *mut c_char) -> VcStatus {
    render(report, out, true)
}
