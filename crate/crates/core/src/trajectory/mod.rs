//! The optimization trajectory: every step's selected prompt and its
//! validation score, plus the strategies that pick which past steps are
//! shown to the optimizer.

mod momentum;
mod similarity;

use std::cmp::Ordering;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::Score;

pub use momentum::{summarize_momentum, MomentumModel, MomentumSummary, NO_PREVIOUS_PROBLEMS};
pub use similarity::{EmbeddingSimilarity, LexicalNgram, Similarity, SimilarityProvider};

/// Bookkeeping recorded alongside each step. Everything in the run report
/// is recomputed from these fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepMeta {
    pub epoch: Option<u64>,
    pub batch_score: Option<f64>,
    pub edit_budget: Option<u32>,
    pub edit_distance: Option<usize>,
    pub selected_candidate: Option<usize>,
    pub marker_fallbacks: u32,
    pub reflection_skipped: bool,
    pub cumulative_calls: u64,
    pub cumulative_tokens: u64,
    pub cumulative_dollars: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub step_index: u64,
    pub prompt: String,
    pub score: Score,
    #[serde(default)]
    pub problems_summary: Option<String>,
    #[serde(default)]
    pub meta: StepMeta,
}

impl TrajectoryEntry {
    pub fn new(step_index: u64, prompt: impl Into<String>, score: Score) -> Self {
        Self { step_index, prompt: prompt.into(), score, problems_summary: None, meta: StepMeta::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryStore {
    entries: Vec<TrajectoryEntry>,
}

impl TrajectoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectoryEntry> {
        self.entries.last()
    }

    pub fn append(&mut self, entry: TrajectoryEntry) -> Result<()> {
        let expected = self.entries.last().map_or(0, |e| e.step_index + 1);
        if entry.step_index != expected {
            return Err(Error::NonMonotonicStep { expected, got: entry.step_index });
        }
        self.entries.push(entry);
        Ok(())
    }

    /// The last `k` entries, oldest first.
    pub fn retrieve_recency(&self, k: usize) -> Vec<TrajectoryEntry> {
        let start = self.entries.len().saturating_sub(k);
        self.entries[start..].to_vec()
    }

    /// The `k` entries most similar to `current`, least similar first. Equal
    /// similarity prefers (and lists first) the earlier step.
    pub fn retrieve_relevance(
        &self,
        k: usize,
        current: &str,
        sim: &dyn Similarity,
    ) -> Result<Vec<TrajectoryEntry>> {
        let keyed = self
            .entries
            .iter()
            .map(|e| Ok((sim.similarity(&e.prompt, current)?, e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(top_k_ascending(keyed, k))
    }

    /// The `k` best-scoring entries, lowest score first. Ties prefer the
    /// earlier step.
    pub fn retrieve_importance(&self, k: usize) -> Vec<TrajectoryEntry> {
        top_k_ascending(self.entries.iter().map(|e| (e.score.value, e)).collect(), k)
    }

    /// Appends one JSON line to `path`.
    pub fn append_to_log(path: &Path, entry: &TrajectoryEntry) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = serde_json::to_string(entry)?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = String::new();
        for e in &self.entries {
            buf.push_str(&serde_json::to_string(e)?);
            buf.push('\n');
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Reads a log written by [`save`](Self::save) or
    /// [`append_to_log`](Self::append_to_log). Any unparseable line,
    /// including a truncated final line, is reported as corrupt.
    pub fn load(path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptState { path: path.to_path_buf(), reason };
        let file = File::open(path).map_err(|e| corrupt(e.to_string()))?;
        let mut store = Self::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| corrupt(e.to_string()))?;
            let entry: TrajectoryEntry = serde_json::from_str(&line)
                .map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
            store.append(entry).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
        }
        Ok(store)
    }
}

fn top_k_ascending(mut keyed: Vec<(f64, &TrajectoryEntry)>, k: usize) -> Vec<TrajectoryEntry> {
    let earlier = |a: &TrajectoryEntry, b: &TrajectoryEntry| a.step_index.cmp(&b.step_index);
    keyed.sort_by(|(ka, a), (kb, b)| kb.total_cmp(ka).then_with(|| earlier(a, b)));
    keyed.truncate(k);
    keyed.sort_by(|(ka, a), (kb, b)| match ka.total_cmp(kb) {
        Ordering::Equal => earlier(a, b),
        o => o,
    });
    keyed.into_iter().map(|(_, e)| e.clone()).collect()
}
