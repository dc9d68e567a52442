use serde::{Deserialize, Serialize};

use crate::evaluation::{EvalRecord, Score};
use crate::gateway::CostLedger;
use crate::trajectory::{MomentumSummary, TrajectoryEntry, TrajectoryStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrompt {
    pub text: String,
    pub score: Score,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Plateau,
    MaxSteps,
    Budget,
}

impl StopReason {
    /// Plateau and max-steps runs are finished; a budget stop can be resumed
    /// with a larger cap.
    pub fn is_final(self) -> bool {
        !matches!(self, StopReason::Budget)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Plateau => "plateau",
            StopReason::MaxSteps => "max_steps",
            StopReason::Budget => "budget",
        }
    }
}

/// Everything needed to continue a run. The trajectory is persisted on its
/// own as an append-only log and is not part of the serialized state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    /// Completed optimization steps; 0 means only the initial prompt has
    /// been evaluated.
    pub step: u64,
    /// The prompt the next step refines (the last selected candidate).
    pub current: ScoredPrompt,
    /// Best validation score so far.
    pub best: ScoredPrompt,
    pub best_step: u64,
    pub steps_since_improvement: u32,
    pub momentum: Option<MomentumSummary>,
    /// Validation records of `current`, used for reflection.
    pub current_records: Vec<EvalRecord>,
    pub ledger: CostLedger,
    pub seed: u64,
    pub stop_reason: Option<StopReason>,
    pub test_score: Option<Score>,
    #[serde(skip)]
    pub trajectory: TrajectoryStore,
}

impl RunState {
    pub fn is_finished(&self) -> bool {
        self.stop_reason.is_some_and(StopReason::is_final)
    }

    pub fn into_result(self) -> RunResult {
        RunResult {
            best_prompt: self.best.text,
            best_validation_score: self.best.score,
            test_score: self.test_score,
            trajectory: self.trajectory.entries().to_vec(),
            ledger: self.ledger,
            stop_reason: self.stop_reason,
            steps: self.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub best_prompt: String,
    pub best_validation_score: Score,
    pub test_score: Option<Score>,
    pub trajectory: Vec<TrajectoryEntry>,
    pub ledger: CostLedger,
    pub stop_reason: Option<StopReason>,
    pub steps: u64,
}
