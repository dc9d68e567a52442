use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },

    #[error("budget exceeded: ${spent:.6} spent, cap ${cap:.6}")]
    BudgetExceeded { spent: f64, cap: f64 },

    #[error("no backend registered for model `{0}`")]
    UnknownModel(String),

    #[error("request tag must not be empty")]
    EmptyRequestTag,

    #[error("no START ... END marker pair found")]
    MarkerNotFound,

    #[error("dataset has {found} examples, at least {required} required")]
    TooFewExamples { found: usize, required: usize },

    #[error("duplicate example id `{0}`")]
    DuplicateExampleId(String),

    #[error("cannot evaluate a prompt on an empty example list")]
    EmptyExamples,

    #[error("trajectory step {got} does not follow step {expected}")]
    NonMonotonicStep { expected: u64, got: u64 },

    #[error("step {step} outside schedule horizon {horizon}")]
    StepOutOfRange { step: u32, horizon: u32 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("expected {expected} task examples, got {found}")]
    ExampleCountMismatch { expected: usize, found: usize },

    #[error("missing placeholder(s): {}", .0.join(", "))]
    MissingPlaceholder(Vec<String>),

    #[error("unknown template `{0}`")]
    UnknownTemplate(String),

    #[error("no error demonstrations to reflect on")]
    EmptyErrorDemos,

    #[error("unknown baseline `{0}` (expected one of GPO, APE, APO, OPRO, PE2, SGDM)")]
    UnknownBaseline(String),

    #[error("minibatch is empty")]
    EmptyBatch,

    #[error("{candidates} candidates but {scores} scores")]
    LengthMismatch { candidates: usize, scores: usize },

    #[error("invalid extractor pattern: {0}")]
    InvalidExtractor(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("corrupt run state in {}: {reason}", path.display())]
    CorruptState { path: PathBuf, reason: String },

    #[error("missing run: {0}")]
    MissingRun(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
