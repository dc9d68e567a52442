//! Run configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    load_jsonl, split_dataset, split_sized, AnswerExtractor, DatasetSplit, MetricKind,
    Normalization, PromptPosition, SplitSizes, TaskSpec, DEFAULT_ERROR_DEMO_CAP,
    DEFAULT_INITIAL_PROMPT,
};
use crate::gateway::{
    Backend, CostLedger, Gateway, HttpBackend, HttpBackendConfig, Pricing, RetryPolicy, ScriptRule,
    ScriptedMockBackend, SyntheticResponder, DEFAULT_MAX_IN_FLIGHT, DEFAULT_MAX_OUTPUT_TOKENS,
};
use crate::optimizer::{
    make_baseline, Direction, Enforcement, Momentum, OptimizerConfig, Refinement,
};
use crate::schedule::ScheduleKind;
use crate::trajectory::SimilarityProvider;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// Derives the split, minibatch and exemplar seeds.
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// One of GPO, APE, APO, OPRO, PE2, SGDM.
    pub method: String,
    /// Name shown in reports. Defaults to `method`.
    #[serde(default)]
    pub label: Option<String>,
    /// Name of the entry in `tasks` to optimize.
    pub task: String,
    pub tasks: Vec<TaskEntry>,
    /// Directory of `<template id>.txt` files replacing built-in templates.
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub optimizer: OptimizerOverrides,
    #[serde(default)]
    pub schedule: ScheduleOverrides,
    #[serde(default)]
    pub similarity: SimilarityProvider,
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    /// JSONL file of `{"id", "question", "answer"}` records.
    pub data: PathBuf,
    pub metric: MetricKind,
    #[serde(default)]
    pub prompt_position: PromptPosition,
    #[serde(default)]
    pub initial_prompt: Option<String>,
    #[serde(default)]
    pub extractor: Option<AnswerExtractor>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub rouge_threshold: Option<f64>,
    #[serde(default)]
    pub error_demo_cap: Option<usize>,
    #[serde(default)]
    pub allow_empty_prompt: bool,
    /// Fixed split sizes. Defaults to a 20/20/60 percent split.
    #[serde(default)]
    pub split: Option<SplitSizes>,
}

impl TaskEntry {
    pub fn spec(&self) -> TaskSpec {
        let mut spec = TaskSpec::new(&self.name, self.metric);
        spec.prompt_position = self.prompt_position;
        spec.initial_prompt = self.initial_prompt.clone().unwrap_or_else(|| DEFAULT_INITIAL_PROMPT.into());
        if let Some(e) = &self.extractor {
            spec.extractor = e.clone();
        }
        spec.normalization = self.normalization;
        spec.rouge_threshold = self.rouge_threshold.unwrap_or(1.0);
        spec.error_demo_cap = self.error_demo_cap.unwrap_or(DEFAULT_ERROR_DEMO_CAP);
        spec.allow_empty_prompt = self.allow_empty_prompt;
        spec
    }

    pub fn load_split(&self, seed: u64) -> Result<DatasetSplit> {
        let examples = load_jsonl(&self.data)?;
        match self.split {
            Some(sizes) => split_sized(&examples, seed, sizes),
            None => split_dataset(&examples, seed),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerOverrides {
    pub direction: Option<Direction>,
    pub momentum: Option<Momentum>,
    pub refinement: Option<Refinement>,
    pub candidates_per_step: Option<usize>,
    pub trajectory_k: Option<usize>,
    pub task_examples_in_meta: Option<usize>,
    pub epochs: Option<u32>,
    pub batch_size: Option<usize>,
    pub optimizer_temperature: Option<f64>,
    pub plateau_patience: Option<u32>,
    pub marker_retries: Option<u32>,
    pub max_output_tokens: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    pub kind: Option<ScheduleKind>,
    pub c_max: Option<u32>,
    pub floor_fraction: Option<f64>,
    pub warmup: Option<bool>,
    pub warmup_fraction: Option<f64>,
    pub enforcement: Option<Enforcement>,
    pub hard_resamples: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    pub task_model: String,
    pub optimizer_model: String,
    /// Model used for embedding similarity, if that provider is selected.
    #[serde(default)]
    pub embedding_model: Option<String>,
    #[serde(default = "default_max_tokens")]
    pub task_max_output_tokens: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Spending cap in dollars.
    #[serde(default)]
    pub budget_usd: Option<f64>,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Per-model prices in dollars per 1000 tokens.
    #[serde(default)]
    pub pricing: BTreeMap<String, Pricing>,
    #[serde(default)]
    pub mock: MockSettings,
    #[serde(default)]
    pub openai: Option<OpenAiSettings>,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_OUTPUT_TOKENS
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockSettings {
    /// Answer arithmetic questions and propose prompt edits
    /// deterministically. Rules take precedence.
    pub synthetic: bool,
    pub default_response: String,
    pub rules: Vec<ScriptRule>,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self { synthetic: true, default_response: "I am not sure.".into(), rules: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenAiSettings {
    pub chat_url: String,
    #[serde(default)]
    pub embeddings_url: Option<String>,
    /// Environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

impl RunConfigFile {
    /// Parses and validates `path`. Relative paths inside the file are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for t in &mut self.tasks {
            fix(&mut t.data);
        }
        if let Some(d) = &mut self.templates_dir {
            fix(d);
        }
    }

    fn validate(&self) -> Result<()> {
        self.optimizer_config()?.validate()?;
        self.task_entry()?;
        let mut names: Vec<&str> = self.tasks.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("task {} defined twice", w[0])));
        }
        if self.backend.max_in_flight == 0 {
            return Err(Error::Config("backend.max_in_flight must be positive".into()));
        }
        if self.backend.kind == BackendKind::Openai && self.backend.openai.is_none() {
            return Err(Error::Config("backend.kind = \"openai\" needs a [backend.openai] table".into()));
        }
        if let SimilarityProvider::EmbeddingApi { model } = &self.similarity {
            if model.is_empty() {
                return Err(Error::Config("similarity.model must be nonempty".into()));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.optimizer_config().map(|c| c.method).unwrap_or_default())
    }

    pub fn task_entry(&self) -> Result<&TaskEntry> {
        self.tasks
            .iter()
            .find(|t| t.name == self.task)
            .ok_or_else(|| Error::Config(format!("task {} is not defined in [[tasks]]", self.task)))
    }

    /// The method preset with every override applied.
    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        let mut c = make_baseline(&self.method)?;
        let o = &self.optimizer;
        macro_rules! apply {
            ($src:expr, $($field:ident),*) => {
                $(if let Some(v) = $src.$field { c.$field = v; })*
            };
        }
        apply!(
            o,
            direction,
            momentum,
            refinement,
            candidates_per_step,
            trajectory_k,
            task_examples_in_meta,
            epochs,
            batch_size,
            optimizer_temperature,
            marker_retries,
            max_output_tokens
        );
        if o.plateau_patience.is_some() {
            c.plateau_patience = o.plateau_patience;
        }
        let s = &self.schedule;
        let sc = &mut c.schedule;
        if s.c_max.is_some() {
            sc.c_max = s.c_max;
        }
        macro_rules! apply_schedule {
            ($($field:ident),*) => {
                $(if let Some(v) = s.$field { sc.$field = v; })*
            };
        }
        apply_schedule!(kind, floor_fraction, warmup, warmup_fraction, enforcement, hard_resamples);
        if let Some(label) = &self.label {
            c.method = label.clone();
        }
        Ok(c)
    }

    /// Builds the gateway, seeding its ledger with `ledger` when resuming.
    pub fn gateway(&self, ledger: Option<CostLedger>) -> Result<Gateway> {
        let b = &self.backend;
        let backend: Arc<dyn Backend> = match b.kind {
            BackendKind::Mock => {
                let mock = if b.mock.synthetic {
                    SyntheticResponder::default().into_backend()
                } else {
                    ScriptedMockBackend::new(b.mock.default_response.clone())
                };
                Arc::new(mock.rules(b.mock.rules.clone()))
            }
            BackendKind::Openai => {
                let o = b.openai.as_ref().ok_or_else(|| Error::Config("missing [backend.openai]".into()))?;
                let api_key = std::env::var(&o.api_key_env).ok();
                if api_key.is_none() {
                    tracing::warn!(var = %o.api_key_env, "API key variable is not set");
                }
                Arc::new(HttpBackend::new(HttpBackendConfig {
                    chat_url: o.chat_url.clone(),
                    embeddings_url: o.embeddings_url.clone(),
                    api_key,
                    remote_model: None,
                    timeout: Duration::from_secs(o.timeout_secs),
                }))
            }
        };
        let mut builder = Gateway::builder()
            .retry(b.retry)
            .max_in_flight(b.max_in_flight)
            .budget_cap(b.budget_usd);
        let mut models = vec![b.task_model.as_str(), b.optimizer_model.as_str()];
        models.extend(b.embedding_model.as_deref());
        if let SimilarityProvider::EmbeddingApi { model } = &self.similarity {
            models.push(model);
        }
        for m in models {
            builder = builder.backend(m, backend.clone());
        }
        if let Some(mut l) = ledger {
            l.set_pricing(b.pricing.clone());
            builder = builder.ledger(l);
        }
        for (m, p) in &b.pricing {
            builder = builder.pricing(m, *p);
        }
        builder.build()
    }
}
