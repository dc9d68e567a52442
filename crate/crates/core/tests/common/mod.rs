//! Shared fixtures for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use promptopt::evaluation::{DatasetSplit, MetricKind, TaskExample, TaskSpec};
use promptopt::gateway::{meta_current_prompt, Gateway, Pricing, ScriptedMockBackend, TAG_CANDIDATE, TAG_TASK};
use promptopt::metaprompt::TemplateRegistry;
use promptopt::optimizer::{OptimizerConfig, RunContext, RunObserver, RunState};
use promptopt::runner::RunConfigFile;
use promptopt::trajectory::{LexicalNgram, TrajectoryEntry};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// The mock fixture config, writing into `out`.
pub fn fixture_config(out: &Path) -> RunConfigFile {
    let mut cfg = RunConfigFile::load(&fixture("mock_run.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// Questions "What is i + 10j?"; the sum of example `i` ends in `i % 10`.
pub fn examples(prefix: &str, range: std::ops::Range<usize>) -> Vec<TaskExample> {
    range
        .map(|i| {
            let (a, b) = (i, 10 * (i % 7));
            TaskExample::new(format!("{prefix}{i}"), format!("What is {a} + {b}?"), (a + b).to_string())
        })
        .collect()
}

pub fn split(train: usize, valid: usize, test: usize) -> DatasetSplit {
    DatasetSplit {
        train: examples("tr", 0..train),
        valid: examples("va", 0..valid),
        test: examples("te", 0..test),
        split_seed: 0,
    }
}

pub fn sum_of(question: &str) -> u64 {
    question
        .trim_start_matches("What is ")
        .trim_end_matches('?')
        .split(" + ")
        .map(|x| x.parse::<u64>().unwrap())
        .sum()
}

/// The `[m=M]` level of a scripted prompt.
pub fn level(text: &str) -> Option<u64> {
    let s = text.find("[m=")? + 3;
    text[s..].split(']').next()?.parse().ok()
}

fn step_of(text: &str) -> u64 {
    text.split_whitespace()
        .find_map(|w| w.strip_prefix("step").and_then(|n| n.parse().ok()))
        .unwrap_or(0)
}

/// Whether the scripted task model answers `question` correctly under a
/// prompt of level `m`.
pub fn scripted_correct(question: &str, m: u64) -> bool {
    sum_of(question) % 10 < m
}

pub fn scripted_prompt(t: u64, k: u32, m: u64) -> String {
    format!("step{t} cand{k} [m={m}]")
}

/// Task model: correct iff the sum's last digit is below the prompt's
/// level. Optimizer: the `k`-th candidate at step `t` has level `table(t, k)`.
pub fn scripted(table: fn(u64, u32) -> u64) -> ScriptedMockBackend {
    ScriptedMockBackend::new("START fallback END").with_responder(move |req| {
        if req.request_tag == TAG_TASK {
            let q = req.user_text.lines().next()?;
            let m = level(&req.user_text).unwrap_or(0);
            let sum = sum_of(q);
            Some(if scripted_correct(q, m) { sum } else { sum + 1 }.to_string())
        } else if req.request_tag == TAG_CANDIDATE {
            let t = step_of(&meta_current_prompt(&req.user_text)?) + 1;
            let k = req.sample_index;
            Some(format!("START {} END", scripted_prompt(t, k, table(t, k))))
        } else {
            Some(format!("START problem at {} END", req.request_tag))
        }
    })
}

pub struct Harness {
    pub gateway: Gateway,
    pub mock: Arc<ScriptedMockBackend>,
    pub split: DatasetSplit,
    pub task: TaskSpec,
    pub templates: TemplateRegistry,
    pub sim: LexicalNgram,
}

impl Harness {
    pub fn new(mock: ScriptedMockBackend, split: DatasetSplit, pricing: &BTreeMap<&str, Pricing>) -> Self {
        let mock = Arc::new(mock);
        let mut b = Gateway::builder().backend("task", mock.clone()).backend("opt", mock.clone());
        for (m, p) in pricing {
            b = b.pricing(m, *p);
        }
        Self {
            gateway: b.build().unwrap(),
            mock,
            split,
            task: TaskSpec::new("arith", MetricKind::Accuracy),
            templates: TemplateRegistry::builtin(),
            sim: LexicalNgram::default(),
        }
    }

    pub fn ctx<'a>(&'a self, config: &'a OptimizerConfig) -> RunContext<'a> {
        RunContext {
            config,
            task: &self.task,
            split: &self.split,
            gateway: &self.gateway,
            templates: &self.templates,
            similarity: &self.sim,
            task_model: "task",
            optimizer_model: "opt",
            task_max_output_tokens: 16,
        }
    }
}

/// Records the trajectory log and per-step call counts by tag.
pub struct Recorder {
    pub mock: Arc<ScriptedMockBackend>,
    pub log: Vec<u8>,
    pub seen: usize,
    pub per_step: Vec<BTreeMap<String, usize>>,
    pub stops: usize,
}

impl Recorder {
    pub fn new(mock: Arc<ScriptedMockBackend>) -> Self {
        Self { mock, log: Vec::new(), seen: 0, per_step: Vec::new(), stops: 0 }
    }
}

impl RunObserver for Recorder {
    fn on_step(&mut self, _: &RunState, entry: &TrajectoryEntry) -> promptopt::Result<()> {
        self.log.extend(serde_json::to_vec(entry).unwrap());
        self.log.push(b'\n');
        let calls = self.mock.calls();
        let mut counts = BTreeMap::new();
        for c in &calls[self.seen..] {
            *counts.entry(c.request_tag.clone()).or_insert(0) += 1;
        }
        self.seen = calls.len();
        self.per_step.push(counts);
        Ok(())
    }

    fn on_stop(&mut self, _: &RunState) -> promptopt::Result<()> {
        self.stops += 1;
        Ok(())
    }
}
