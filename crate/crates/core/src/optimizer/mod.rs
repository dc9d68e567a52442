//! Optimizer configurations, method presets and the optimization loop.

mod engine;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::DEFAULT_MAX_OUTPUT_TOKENS;
use crate::schedule::{ScheduleKind, DEFAULT_FLOOR_FRACTION, DEFAULT_WARMUP_FRACTION};

pub use engine::{select_best, NoopObserver, Optimizer, RunContext, RunObserver};
pub use state::{RunResult, RunState, ScoredPrompt, StopReason};

/// What the optimizer is shown about the current prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "P")]
    Prompt,
    #[serde(rename = "P+M")]
    PromptPerformance,
    #[serde(rename = "P+R")]
    PromptReflection,
    #[serde(rename = "P+M+R")]
    PromptPerformanceReflection,
}

impl Direction {
    pub fn uses_reflection(self) -> bool {
        matches!(self, Direction::PromptReflection | Direction::PromptPerformanceReflection)
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Prompt => "P",
            Direction::PromptPerformance => "P+M",
            Direction::PromptReflection => "P+R",
            Direction::PromptPerformanceReflection => "P+M+R",
        }
    }
}

/// How past steps enter the meta-prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Momentum {
    None,
    Summarization,
    Recency,
    Relevance,
    Importance,
}

impl Momentum {
    pub fn is_retrieval(self) -> bool {
        matches!(self, Momentum::Recency | Momentum::Relevance | Momentum::Importance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// Modify the current prompt.
    Editing,
    /// Write a new prompt from demonstrations.
    Generation,
}

/// Whether the edit budget is only stated in the meta-prompt (`soft`) or
/// also checked against the measured word edit distance (`hard`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enforcement {
    #[default]
    Soft,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSettings {
    pub kind: ScheduleKind,
    /// Defaults to the word count of the initial prompt.
    pub c_max: Option<u32>,
    pub floor_fraction: f64,
    pub warmup: bool,
    pub warmup_fraction: f64,
    pub enforcement: Enforcement,
    /// Resamples per candidate in hard mode.
    pub hard_resamples: u32,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::None,
            c_max: None,
            floor_fraction: DEFAULT_FLOOR_FRACTION,
            warmup: false,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            enforcement: Enforcement::Soft,
            hard_resamples: 2,
        }
    }
}

impl ScheduleSettings {
    pub fn of_kind(kind: ScheduleKind) -> Self {
        Self { kind, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Display name used in reports, e.g. "GPO" or "custom".
    pub method: String,
    pub direction: Direction,
    pub momentum: Momentum,
    pub schedule: ScheduleSettings,
    pub refinement: Refinement,
    pub candidates_per_step: usize,
    pub trajectory_k: usize,
    pub task_examples_in_meta: usize,
    pub epochs: u32,
    pub batch_size: usize,
    pub optimizer_temperature: f64,
    /// Defaults to one epoch's worth of steps.
    pub plateau_patience: Option<u32>,
    pub marker_retries: u32,
    pub max_output_tokens: u32,
}

impl OptimizerConfig {
    fn preset(
        method: Baseline,
        direction: Direction,
        momentum: Momentum,
        schedule: ScheduleKind,
        refinement: Refinement,
    ) -> Self {
        Self {
            method: method.to_string(),
            direction,
            momentum,
            schedule: ScheduleSettings::of_kind(schedule),
            refinement,
            candidates_per_step: 8,
            trajectory_k: 7,
            task_examples_in_meta: 3,
            epochs: 3,
            batch_size: 8,
            optimizer_temperature: 1.0,
            plateau_patience: None,
            marker_retries: 2,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("candidates_per_step", self.candidates_per_step),
            ("trajectory_k", self.trajectory_k),
            ("task_examples_in_meta", self.task_examples_in_meta),
            ("epochs", self.epochs as usize),
            ("batch_size", self.batch_size),
            ("max_output_tokens", self.max_output_tokens as usize),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.plateau_patience == Some(0) {
            return Err(Error::Config("plateau_patience must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.optimizer_temperature) {
            return Err(Error::Config("optimizer_temperature must lie in [0, 2]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Gpo,
    Ape,
    Apo,
    Opro,
    Pe2,
    Sgdm,
}

impl Baseline {
    pub const ALL: [Baseline; 6] =
        [Baseline::Gpo, Baseline::Ape, Baseline::Apo, Baseline::Opro, Baseline::Pe2, Baseline::Sgdm];
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Gpo => "GPO",
            Baseline::Ape => "APE",
            Baseline::Apo => "APO",
            Baseline::Opro => "OPRO",
            Baseline::Pe2 => "PE2",
            Baseline::Sgdm => "SGDM",
        })
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownBaseline(s.to_string()))
    }
}

/// The component selection of a named method.
pub fn make_baseline(name: &str) -> Result<OptimizerConfig> {
    use Direction::*;
    let b: Baseline = name.parse()?;
    Ok(match b {
        Baseline::Gpo => OptimizerConfig::preset(b, PromptPerformance, Momentum::Relevance, ScheduleKind::CosineDecay, Refinement::Generation),
        Baseline::Opro => OptimizerConfig::preset(b, PromptPerformance, Momentum::Recency, ScheduleKind::None, Refinement::Generation),
        Baseline::Pe2 => OptimizerConfig::preset(b, PromptPerformanceReflection, Momentum::Recency, ScheduleKind::Fixed, Refinement::Generation),
        Baseline::Apo => OptimizerConfig::preset(b, PromptReflection, Momentum::None, ScheduleKind::None, Refinement::Editing),
        Baseline::Ape => OptimizerConfig::preset(b, Prompt, Momentum::None, ScheduleKind::None, Refinement::Generation),
        Baseline::Sgdm => OptimizerConfig::preset(b, PromptPerformanceReflection, Momentum::Summarization, ScheduleKind::None, Refinement::Editing),
    })
}
