//! Run orchestration: configuration, persistence, resume and reports.
//!
//! A run directory holds:
//!
//! | file | contents |
//! |------|----------|
//! | `run_config.toml` | the resolved configuration |
//! | `trajectory.jsonl` | one entry per step, appended as steps finish |
//! | `state.json` | everything needed to resume |
//! | `curve.jsonl` | step, validation score, cumulative tokens and dollars |
//! | `report.txt` | per-step table and final summary |
//! | `summary.json` | final summary for `compare` |

mod compare;
mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::Score;
use crate::gateway::{Gateway, LedgerRow};
use crate::metaprompt::TemplateRegistry;
use crate::optimizer::{Optimizer, RunContext, RunObserver, RunState, StopReason};
use crate::trajectory::{EmbeddingSimilarity, LexicalNgram, Similarity, SimilarityProvider, TrajectoryEntry, TrajectoryStore};

pub use compare::{compare_runs, ComparisonTable};
pub use config::{
    BackendConfig, BackendKind, MockSettings, OpenAiSettings, OptimizerOverrides, RunConfigFile,
    ScheduleOverrides, TaskEntry,
};
pub use report::{curve_rows, render_report, render_table, CurvePoint};

pub const CONFIG_FILE: &str = "run_config.toml";
pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const STATE_FILE: &str = "state.json";
pub const CURVE_FILE: &str = "curve.jsonl";
pub const REPORT_FILE: &str = "report.txt";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Discard any run already in the output directory.
    pub fresh: bool,
    /// Pause after this many steps in this invocation.
    pub max_steps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub task: String,
    pub seed: u64,
    pub steps: u64,
    pub stop_reason: Option<StopReason>,
    pub best_prompt: String,
    pub best_step: u64,
    pub best_validation_score: Score,
    pub test_score: Option<Score>,
    pub total_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub total_dollars: f64,
    pub marker_fallbacks: u64,
    pub reflections_skipped: u64,
    pub ledger: Vec<LedgerRow>,
}

impl RunSummary {
    /// Recomputed from the state and its trajectory.
    pub fn from_state(method: &str, task: &str, state: &RunState) -> Self {
        let entries = state.trajectory.entries();
        let ledger = &state.ledger;
        Self {
            method: method.to_string(),
            task: task.to_string(),
            seed: state.seed,
            steps: state.step,
            stop_reason: state.stop_reason,
            best_prompt: state.best.text.clone(),
            best_step: state.best_step,
            best_validation_score: state.best.score,
            test_score: state.test_score,
            total_calls: ledger.total_calls(),
            prompt_tokens: ledger.total_prompt_tokens(),
            completion_tokens: ledger.total_completion_tokens(),
            total_tokens: ledger.total_tokens(),
            total_dollars: ledger.total_dollars(),
            marker_fallbacks: entries.iter().map(|e| u64::from(e.meta.marker_fallbacks)).sum(),
            reflections_skipped: entries.iter().filter(|e| e.meta.reflection_skipped).count() as u64,
            ledger: ledger.report(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    /// The run reached a stop condition in this invocation.
    Stopped(RunSummary),
    /// The step limit was reached; the run can be resumed.
    Paused(RunSummary),
    /// Resume found nothing left to do.
    AlreadyConverged(RunSummary),
}

impl RunOutcome {
    pub fn summary(&self) -> &RunSummary {
        match self {
            RunOutcome::Stopped(s) | RunOutcome::Paused(s) | RunOutcome::AlreadyConverged(s) => s,
        }
    }
}

/// Writes every persistence point into a run directory.
struct DirObserver {
    dir: PathBuf,
    method: String,
    task: String,
}

impl DirObserver {
    fn write_state(&self, state: &RunState) -> Result<()> {
        write_atomic(&self.dir.join(STATE_FILE), &serde_json::to_string_pretty(state)?)?;
        let mut curve = String::new();
        for p in curve_rows(state.trajectory.entries()) {
            curve.push_str(&serde_json::to_string(&p)?);
            curve.push('\n');
        }
        write_atomic(&self.dir.join(CURVE_FILE), &curve)
    }
}

impl RunObserver for DirObserver {
    fn on_step(&mut self, state: &RunState, entry: &TrajectoryEntry) -> Result<()> {
        TrajectoryStore::append_to_log(&self.dir.join(TRAJECTORY_FILE), entry)?;
        self.write_state(state)?;
        tracing::info!(
            step = entry.step_index,
            score = entry.score.value,
            best = state.best.score.value,
            "step finished"
        );
        Ok(())
    }

    fn on_stop(&mut self, state: &RunState) -> Result<()> {
        self.write_state(state)?;
        let summary = RunSummary::from_state(&self.method, &self.task, state);
        write_atomic(&self.dir.join(SUMMARY_FILE), &serde_json::to_string_pretty(&summary)?)?;
        write_atomic(&self.dir.join(REPORT_FILE), &render_report(&summary, state.trajectory.entries()))
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Everything a run needs besides its state.
struct Prepared {
    config: RunConfigFile,
    task: crate::evaluation::TaskSpec,
    split: crate::evaluation::DatasetSplit,
    templates: TemplateRegistry,
    optimizer: crate::optimizer::OptimizerConfig,
}

impl Prepared {
    fn new(config: RunConfigFile) -> Result<Self> {
        let entry = config.task_entry()?;
        let task = entry.spec();
        let split = entry.load_split(config.seed)?;
        let templates = match &config.templates_dir {
            Some(dir) => TemplateRegistry::with_overrides(dir)?,
            None => TemplateRegistry::builtin(),
        };
        let optimizer = config.optimizer_config()?;
        Ok(Self { config, task, split, templates, optimizer })
    }

    fn observer(&self, dir: &Path) -> DirObserver {
        DirObserver { dir: dir.to_path_buf(), method: self.optimizer.method.clone(), task: self.task.name.clone() }
    }

    /// Runs `f` with an optimizer bound to `gateway`.
    fn with_optimizer<R>(&self, gateway: &Gateway, f: impl FnOnce(&Optimizer<'_>) -> Result<R>) -> Result<R> {
        let lexical;
        let embedding;
        let similarity: &dyn Similarity = match &self.config.similarity {
            SimilarityProvider::LexicalNgram { n } => {
                lexical = LexicalNgram { n: *n };
                &lexical
            }
            SimilarityProvider::EmbeddingApi { model } => {
                embedding = EmbeddingSimilarity::new(gateway, model.clone());
                &embedding
            }
        };
        let backend = &self.config.backend;
        let ctx = RunContext {
            config: &self.optimizer,
            task: &self.task,
            split: &self.split,
            gateway,
            templates: &self.templates,
            similarity,
            task_model: &backend.task_model,
            optimizer_model: &backend.optimizer_model,
            task_max_output_tokens: backend.task_max_output_tokens,
        };
        f(&Optimizer::new(ctx)?)
    }
}

fn outcome(state: &RunState, summary: RunSummary) -> RunOutcome {
    if state.stop_reason.is_some() {
        RunOutcome::Stopped(summary)
    } else {
        RunOutcome::Paused(summary)
    }
}

/// Starts a new run in `config.output_dir`.
pub fn run(config: RunConfigFile, options: RunOptions) -> Result<RunOutcome> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    if dir.join(STATE_FILE).exists() || dir.join(TRAJECTORY_FILE).exists() {
        if !options.fresh {
            return Err(Error::Config(format!(
                "{} already holds a run; use `resume` or pass --fresh",
                dir.display()
            )));
        }
        for f in [TRAJECTORY_FILE, STATE_FILE, CURVE_FILE, REPORT_FILE, SUMMARY_FILE] {
            let p = dir.join(f);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
    }
    write_atomic(&dir.join(CONFIG_FILE), &config.to_toml()?)?;
    let prepared = Prepared::new(config)?;
    let gateway = prepared.config.gateway(None)?;
    let mut observer = prepared.observer(&dir);
    let state = prepared.with_optimizer(&gateway, |opt| {
        let mut state = opt.start(&prepared.task.initial_prompt, prepared.config.seed, &mut observer)?;
        opt.run(&mut state, options.max_steps, &mut observer)?;
        Ok(state)
    })?;
    let summary = RunSummary::from_state(&prepared.optimizer.method, &prepared.task.name, &state);
    Ok(outcome(&state, summary))
}

/// Loads the persisted state of the run in `dir`, reconciling the
/// trajectory log with the state file.
pub fn load_run_state(dir: &Path) -> Result<RunState> {
    let state_path = dir.join(STATE_FILE);
    let text = fs::read_to_string(&state_path)
        .map_err(|e| Error::CorruptState { path: state_path.clone(), reason: e.to_string() })?;
    let mut state: RunState = serde_json::from_str(&text)
        .map_err(|e| Error::CorruptState { path: state_path.clone(), reason: e.to_string() })?;
    let log_path = dir.join(TRAJECTORY_FILE);
    let mut trajectory = TrajectoryStore::load(&log_path)?;
    let expected = state.step as usize + 1;
    if trajectory.len() < expected {
        return Err(Error::CorruptState {
            path: log_path,
            reason: format!("{} entries, state expects {expected}", trajectory.len()),
        });
    }
    if trajectory.len() > expected {
        // A step was logged but the state was not saved; drop it and redo
        // the step.
        let mut kept = TrajectoryStore::new();
        for e in &trajectory.entries()[..expected] {
            kept.append(e.clone())?;
        }
        kept.save(&log_path)?;
        trajectory = kept;
    }
    state.trajectory = trajectory;
    Ok(state)
}

/// Continues the run in `dir`.
pub fn resume(dir: &Path, options: RunOptions) -> Result<RunOutcome> {
    let config_path = dir.join(CONFIG_FILE);
    if !config_path.exists() {
        return Err(Error::MissingRun(format!("no {CONFIG_FILE} in {}", dir.display())));
    }
    let mut config = RunConfigFile::load(&config_path)?;
    config.output_dir = dir.to_path_buf();
    let prepared = Prepared::new(config)?;
    let mut state = load_run_state(dir)?;
    if state.is_finished() {
        let summary = RunSummary::from_state(&prepared.optimizer.method, &prepared.task.name, &state);
        return Ok(RunOutcome::AlreadyConverged(summary));
    }
    let gateway = prepared.config.gateway(Some(state.ledger.clone()))?;
    let mut observer = prepared.observer(dir);
    prepared.with_optimizer(&gateway, |opt| opt.run(&mut state, options.max_steps, &mut observer))?;
    let summary = RunSummary::from_state(&prepared.optimizer.method, &prepared.task.name, &state);
    Ok(outcome(&state, summary))
}

/// Reads the summary of a finished run from a run directory or a config
/// file naming one.
pub fn load_summary(path: &Path) -> Result<RunSummary> {
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else if path.is_file() {
        RunConfigFile::load(path)?.output_dir
    } else {
        return Err(Error::MissingRun(format!("{} does not exist", path.display())));
    };
    let summary_path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&summary_path)
        .map_err(|_| Error::MissingRun(format!("no finished run in {}", dir.display())))?;
    let summary: RunSummary = serde_json::from_str(&text)
        .map_err(|e| Error::CorruptState { path: summary_path, reason: e.to_string() })?;
    if summary.stop_reason.is_none() {
        return Err(Error::MissingRun(format!("run in {} has not finished", dir.display())));
    }
    Ok(summary)
}
