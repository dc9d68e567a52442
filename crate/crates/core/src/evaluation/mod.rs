//! Prompt scoring: the task datasets, the answer metrics and the per-example
//! task-model queries that turn a prompt into a [`Score`].

mod dataset;
mod metrics;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway};

pub use dataset::{
    ensure_unique_ids, load_jsonl, split_dataset, split_sized, DatasetSplit, SplitSizes, TaskExample,
    MIN_SPLIT_EXAMPLES,
};
pub use metrics::{exact_match, rouge_l, AnswerExtractor, CompiledExtractor, Normalization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ExactMatch,
    /// Exact match on the extracted final answer.
    Accuracy,
    RougeL,
}

impl MetricKind {
    pub fn default_extractor(self) -> AnswerExtractor {
        match self {
            MetricKind::ExactMatch | MetricKind::RougeL => AnswerExtractor::Full,
            MetricKind::Accuracy => AnswerExtractor::LastNumber,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPosition {
    BeforeQuestion,
    #[default]
    AfterQuestion,
}

impl PromptPosition {
    /// Wording used for `{prompt position description}` in meta-prompts.
    pub fn description(self) -> &'static str {
        match self {
            PromptPosition::BeforeQuestion => "at the beginning of the question",
            PromptPosition::AfterQuestion => "at the end of the question",
        }
    }

    /// Places `prompt` around `question`. An empty prompt leaves the
    /// question alone.
    pub fn compose(self, prompt: &str, question: &str) -> String {
        if prompt.is_empty() {
            return question.to_string();
        }
        match self {
            PromptPosition::BeforeQuestion => format!("{prompt}\n{question}"),
            PromptPosition::AfterQuestion => format!("{question}\n{prompt}"),
        }
    }
}

pub const DEFAULT_INITIAL_PROMPT: &str = "Let's think step by step.";
pub const DEFAULT_ERROR_DEMO_CAP: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub metric_kind: MetricKind,
    pub prompt_position: PromptPosition,
    pub initial_prompt: String,
    pub normalization: Normalization,
    pub extractor: AnswerExtractor,
    /// ROUGE-L records below this count as wrong for reflection.
    pub rouge_threshold: f64,
    pub error_demo_cap: usize,
    /// Whether an empty initial prompt is acceptable.
    pub allow_empty_prompt: bool,
}

impl TaskSpec {
    pub fn new(name: impl Into<String>, metric_kind: MetricKind) -> Self {
        Self {
            name: name.into(),
            metric_kind,
            prompt_position: PromptPosition::AfterQuestion,
            initial_prompt: DEFAULT_INITIAL_PROMPT.to_string(),
            normalization: Normalization::default(),
            extractor: metric_kind.default_extractor(),
            rouge_threshold: 1.0,
            error_demo_cap: DEFAULT_ERROR_DEMO_CAP,
            allow_empty_prompt: false,
        }
    }

    fn metric(&self, prediction: &str, gold: &str) -> f64 {
        match self.metric_kind {
            MetricKind::ExactMatch | MetricKind::Accuracy => {
                exact_match(prediction, gold, &self.normalization)
            }
            MetricKind::RougeL => rouge_l(prediction, gold),
        }
    }

    fn is_wrong(&self, metric: f64) -> bool {
        match self.metric_kind {
            MetricKind::ExactMatch | MetricKind::Accuracy => metric < 1.0,
            MetricKind::RougeL => metric < self.rouge_threshold,
        }
    }
}

/// Percentage in `[0, 100]` over `n_examples` examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub n_examples: usize,
}

impl Score {
    /// `100 × mean(metrics)`. Metrics are summed in sorted order so the
    /// result does not depend on example order.
    pub fn from_metrics(metrics: &[f64]) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::EmptyExamples);
        }
        let mut sorted = metrics.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        Ok(Self { value: (100.0 * mean).clamp(0.0, 100.0), n_examples: metrics.len() })
    }

    /// Nearest integer, as shown in meta-prompts.
    pub fn display(&self) -> i64 {
        self.value.round() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub example_id: String,
    pub question: String,
    pub gold: String,
    /// Raw task-model output.
    pub output: String,
    /// Extracted answer the metric was computed on.
    pub prediction: String,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: Score,
    pub records: Vec<EvalRecord>,
}

/// The task model and its request limits.
#[derive(Debug, Clone, Copy)]
pub struct TaskModel<'a> {
    pub gateway: &'a Gateway,
    pub model_id: &'a str,
    pub max_output_tokens: u32,
}

pub fn evaluate_prompt(
    prompt: &str,
    examples: &[TaskExample],
    task: &TaskSpec,
    model: TaskModel<'_>,
) -> Result<Evaluation> {
    let mut all = evaluate_many(&[prompt.to_string()], examples, task, model)?;
    Ok(all.remove(0))
}

/// Scores every prompt on the same examples. All task-model calls are
/// issued in one concurrent batch; results keep prompt order.
pub fn evaluate_many(
    prompts: &[String],
    examples: &[TaskExample],
    task: &TaskSpec,
    model: TaskModel<'_>,
) -> Result<Vec<Evaluation>> {
    if examples.is_empty() {
        return Err(Error::EmptyExamples);
    }
    let extractor = task.extractor.compile()?;
    let requests: Vec<ChatRequest> = prompts
        .iter()
        .flat_map(|p| {
            examples.iter().map(move |ex| {
                ChatRequest::task(
                    model.model_id,
                    task.prompt_position.compose(p, &ex.question),
                    model.max_output_tokens,
                )
            })
        })
        .collect();
    let mut responses = model.gateway.complete_all(requests).into_iter();

    let mut out = Vec::with_capacity(prompts.len());
    for _ in prompts {
        let mut records = Vec::with_capacity(examples.len());
        for ex in examples {
            let response = responses.next().expect("one response per request")?;
            let prediction = extractor.extract(&response.text);
            let metric = task.metric(&prediction, &ex.gold_answer);
            records.push(EvalRecord {
                example_id: ex.example_id.clone(),
                question: ex.question.clone(),
                gold: ex.gold_answer.clone(),
                output: response.text,
                prediction,
                metric,
            });
        }
        let metrics: Vec<f64> = records.iter().map(|r| r.metric).collect();
        out.push(Evaluation { score: Score::from_metrics(&metrics)?, records });
    }
    Ok(out)
}

/// A wrong answer shown to the optimizer during reflection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDemo {
    pub question: String,
    pub prediction: String,
    pub gold: String,
}

/// Wrong records in dataset order, at most `task.error_demo_cap` of them.
pub fn collect_errors(records: &[EvalRecord], task: &TaskSpec) -> Vec<ErrorDemo> {
    records
        .iter()
        .filter(|r| task.is_wrong(r.metric))
        .take(task.error_demo_cap)
        .map(|r| ErrorDemo {
            question: r.question.clone(),
            prediction: r.output.trim().to_string(),
            gold: r.gold.clone(),
        })
        .collect()
}
