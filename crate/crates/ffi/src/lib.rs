//! C ABI for promptopt.
//!
//! Every fallible function returns a [`PdStatus`]. On failure a message is
//! available from [`pd_last_error_message`] on the same thread. Strings
//! returned through `out` parameters are owned by the caller and must be
//! released with [`pd_string_free`]. Schedules are opaque handles released
//! with [`pd_schedule_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use promptopt::evaluation::{exact_match, rouge_l, Normalization};
use promptopt::gateway::extract_marked;
use promptopt::metaprompt::{TemplateId, TemplateRegistry};
use promptopt::runner::{self, RunConfigFile, RunOptions, RunOutcome};
use promptopt::schedule::{word_edit_distance, EditBudgetSchedule, ScheduleKind};
use promptopt::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Backend = 5,
    Budget = 6,
    CorruptState = 7,
    MissingRun = 8,
    MarkerNotFound = 9,
    Io = 10,
    Panic = 11,
    Internal = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdScheduleKind {
    None = 0,
    Fixed = 1,
    LinearDecay = 2,
    CosineDecay = 3,
}

impl From<PdScheduleKind> for ScheduleKind {
    fn from(k: PdScheduleKind) -> Self {
        match k {
            PdScheduleKind::None => ScheduleKind::None,
            PdScheduleKind::Fixed => ScheduleKind::Fixed,
            PdScheduleKind::LinearDecay => ScheduleKind::LinearDecay,
            PdScheduleKind::CosineDecay => ScheduleKind::CosineDecay,
        }
    }
}

/// Opaque edit-budget schedule.
pub struct PdSchedule {
    inner: EditBudgetSchedule,
}

struct Failure {
    status: PdStatus,
    message: String,
}

impl Failure {
    fn new(status: PdStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::BackendUnavailable { .. } | Error::UnknownModel(_) => PdStatus::Backend,
            Error::BudgetExceeded { .. } => PdStatus::Budget,
            Error::MarkerNotFound => PdStatus::MarkerNotFound,
            Error::CorruptState { .. } => PdStatus::CorruptState,
            Error::MissingRun(_) => PdStatus::MissingRun,
            Error::Io(_) => PdStatus::Io,
            Error::Config(_) | Error::UnknownBaseline(_) | Error::InvalidExtractor(_) => PdStatus::Config,
            Error::Json(_) => PdStatus::Internal,
            _ => PdStatus::InvalidArgument,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            PdStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(_) => {
            set_last_error("internal panic");
            PdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(PdStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(PdStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(PdStatus::NullArgument, format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure::new(PdStatus::Internal, "result contains a NUL byte"))?;
    write_out(out, c.into_raw(), "out")
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn pd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a schedule over `horizon` steps.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_schedule_new(
    kind: PdScheduleKind,
    c_max: u32,
    horizon: u32,
    warmup: bool,
    floor_fraction: f64,
    out: *mut *mut PdSchedule,
) -> PdStatus {
    guard(|| {
        let inner = EditBudgetSchedule::new(kind.into(), c_max, horizon)?
            .with_warmup(warmup)
            .with_floor_fraction(floor_fraction);
        inner.validate()?;
        write_out(out, Box::into_raw(Box::new(PdSchedule { inner })), "out")
    })
}

/// Word budget at step `t`. `out_constrained` is false (and `out_budget`
/// 0) for the unconstrained kind.
///
/// # Safety
/// `schedule` must come from [`pd_schedule_new`]; outputs must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_schedule_constraint_at(
    schedule: *const PdSchedule,
    t: u32,
    out_budget: *mut u32,
    out_constrained: *mut bool,
) -> PdStatus {
    guard(|| {
        let s = schedule
            .as_ref()
            .ok_or_else(|| Failure::new(PdStatus::NullArgument, "schedule is null"))?;
        let c = s.inner.constraint_at(t)?;
        write_out(out_budget, c.unwrap_or(0), "out_budget")?;
        write_out(out_constrained, c.is_some(), "out_constrained")
    })
}

/// Releases a schedule. Null is ignored.
///
/// # Safety
/// `schedule` must come from [`pd_schedule_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pd_schedule_free(schedule: *mut PdSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// Word-level Levenshtein distance.
///
/// # Safety
/// `a` and `b` must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_word_edit_distance(a: *const c_char, b: *const c_char, out: *mut usize) -> PdStatus {
    guard(|| write_out(out, word_edit_distance(str_arg(a, "a")?, str_arg(b, "b")?), "out"))
}

/// ROUGE-L F-measure in `[0, 1]`.
///
/// # Safety
/// `prediction` and `gold` must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_rouge_l(prediction: *const c_char, gold: *const c_char, out: *mut f64) -> PdStatus {
    guard(|| write_out(out, rouge_l(str_arg(prediction, "prediction")?, str_arg(gold, "gold")?), "out"))
}

/// 1.0 if the answers match after default normalization, else 0.0.
///
/// # Safety
/// `prediction` and `gold` must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_exact_match(prediction: *const c_char, gold: *const c_char, out: *mut f64) -> PdStatus {
    guard(|| {
        let v = exact_match(str_arg(prediction, "prediction")?, str_arg(gold, "gold")?, &Normalization::default());
        write_out(out, v, "out")
    })
}

/// The trimmed text between the first START and the following END.
///
/// # Safety
/// `text` must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_extract_marked(text: *const c_char, out: *mut *mut c_char) -> PdStatus {
    guard(|| write_string(out, extract_marked(str_arg(text, "text")?)?))
}

/// Renders a built-in template. `bindings_json` is a JSON object mapping
/// placeholder names to strings.
///
/// # Safety
/// Inputs must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_template_render(
    template_id: *const c_char,
    bindings_json: *const c_char,
    out: *mut *mut c_char,
) -> PdStatus {
    guard(|| {
        let id: TemplateId = str_arg(template_id, "template_id")?.parse()?;
        let bindings: BTreeMap<String, String> = serde_json::from_str(str_arg(bindings_json, "bindings_json")?)
            .map_err(|e| Failure::new(PdStatus::InvalidArgument, format!("bindings_json: {e}")))?;
        let rendered = TemplateRegistry::builtin().render(id, &bindings)?;
        write_string(out, rendered.text)
    })
}

fn outcome_json(outcome: &RunOutcome) -> Result<String, Failure> {
    let kind = match outcome {
        RunOutcome::Stopped(_) => "stopped",
        RunOutcome::Paused(_) => "paused",
        RunOutcome::AlreadyConverged(_) => "already_converged",
    };
    let value = serde_json::json!({ "outcome": kind, "summary": outcome.summary() });
    Ok(value.to_string())
}

fn session_limit(max_steps: i64) -> Option<u64> {
    u64::try_from(max_steps).ok()
}

/// Runs the config at `config_path`. A negative `max_steps` means no
/// limit. On success `out_json` receives `{"outcome", "summary"}`.
///
/// # Safety
/// `config_path` must be NUL-terminated; `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_run_config(
    config_path: *const c_char,
    fresh: bool,
    max_steps: i64,
    out_json: *mut *mut c_char,
) -> PdStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(Failure::new(PdStatus::NullArgument, "out_json is null"));
        }
        let config = RunConfigFile::load(Path::new(str_arg(config_path, "config_path")?))?;
        let outcome = runner::run(config, RunOptions { fresh, max_steps: session_limit(max_steps) })?;
        write_string(out_json, outcome_json(&outcome)?)
    })
}

/// Continues the run in `run_dir`. Arguments as for [`pd_run_config`].
///
/// # Safety
/// `run_dir` must be NUL-terminated; `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_resume(run_dir: *const c_char, max_steps: i64, out_json: *mut *mut c_char) -> PdStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(Failure::new(PdStatus::NullArgument, "out_json is null"));
        }
        let dir = str_arg(run_dir, "run_dir")?;
        let outcome = runner::resume(Path::new(dir), RunOptions { fresh: false, max_steps: session_limit(max_steps) })?;
        write_string(out_json, outcome_json(&outcome)?)
    })
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn pd_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
