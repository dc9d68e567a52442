//! Uniform access to chat models.
//!
//! A [`Gateway`] routes each [`ChatRequest`] to the backend registered for its
//! model, retries transient failures with exponential backoff, enforces the
//! dollar budget and records usage into a shared [`CostLedger`]. Concurrent
//! fan-out goes through [`Gateway::map_concurrent`], which bounds in-flight
//! work and always returns results in input order.

mod http;
mod ledger;
mod markers;
mod mock;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use http::{HttpBackend, HttpBackendConfig};
pub use ledger::{estimate_tokens, CostLedger, LedgerRow, Pricing, UsageTotals};
pub use markers::extract_marked;
pub use mock::{meta_current_prompt, ScriptRule, ScriptedMockBackend, SyntheticResponder};

pub const TAG_CANDIDATE: &str = "candidate-gen";
pub const TAG_TASK: &str = "task-eval";
pub const TAG_REFLECTION: &str = "reflection";
pub const TAG_MOMENTUM: &str = "momentum";
pub const TAG_EMBEDDING: &str = "embedding";

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_text: Option<String>,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_tag: String,
    /// Which of several parallel samples of the same prompt this is.
    #[serde(default)]
    pub sample_index: u32,
    /// Regeneration attempt after an unparseable response.
    #[serde(default)]
    pub attempt: u32,
}

impl ChatRequest {
    /// A task-model query. Always temperature 0.
    pub fn task(model_id: &str, user_text: String, max_output_tokens: u32) -> Self {
        Self {
            model_id: model_id.to_string(),
            system_text: None,
            user_text,
            temperature: 0.0,
            max_output_tokens,
            request_tag: TAG_TASK.to_string(),
            sample_index: 0,
            attempt: 0,
        }
    }

    pub fn optimizer(
        model_id: &str,
        user_text: String,
        tag: &str,
        temperature: f64,
        max_output_tokens: u32,
    ) -> Self {
        Self {
            model_id: model_id.to_string(),
            system_text: None,
            user_text,
            temperature,
            max_output_tokens,
            request_tag: tag.to_string(),
            sample_index: 0,
            attempt: 0,
        }
    }

    pub fn with_sample_index(mut self, sample_index: u32) -> Self {
        self.sample_index = sample_index;
        self
    }

    fn estimated_prompt_tokens(&self) -> u64 {
        self.system_text.as_deref().map_or(0, estimate_tokens) + estimate_tokens(&self.user_text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub provider_latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResponse {
    pub vectors: Vec<Vec<f32>>,
    pub prompt_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying: timeouts, rate limits, 5xx.
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for BackendError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendError::Transient(m) => write!(f, "transient: {m}"),
            BackendError::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;

    fn embed(&self, _model_id: &str, _texts: &[String]) -> Result<EmbeddingResponse, BackendError> {
        Err(BackendError::Fatal("backend does not provide embeddings".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay_ms: 1000 }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay_ms: 0 }
    }

    fn delay(&self, failed_attempts: u32) -> Duration {
        let factor = 1u64 << failed_attempts.saturating_sub(1).min(16);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor))
    }
}

pub struct Gateway {
    backends: HashMap<String, Arc<dyn Backend>>,
    ledger: Mutex<CostLedger>,
    budget_cap: Option<f64>,
    retry: RetryPolicy,
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("models", &self.backends.keys().collect::<Vec<_>>())
            .field("budget_cap", &self.budget_cap)
            .field("retry", &self.retry)
            .finish()
    }
}

pub struct GatewayBuilder {
    backends: HashMap<String, Arc<dyn Backend>>,
    ledger: CostLedger,
    budget_cap: Option<f64>,
    retry: RetryPolicy,
    max_in_flight: usize,
}

impl GatewayBuilder {
    pub fn backend(mut self, model_id: &str, backend: Arc<dyn Backend>) -> Self {
        self.backends.insert(model_id.to_string(), backend);
        self
    }

    pub fn pricing(mut self, model_id: &str, pricing: Pricing) -> Self {
        let mut table = self.ledger.pricing().clone();
        table.insert(model_id.to_string(), pricing);
        self.ledger.set_pricing(table);
        self
    }

    /// Starts from a previously persisted ledger (resume).
    pub fn ledger(mut self, ledger: CostLedger) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn budget_cap(mut self, cap: Option<f64>) -> Self {
        self.budget_cap = cap;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn build(self) -> Result<Gateway> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.max_in_flight)
            .thread_name(|i| format!("gateway-{i}"))
            .build()
            .map_err(|e| Error::Config(format!("cannot start gateway workers: {e}")))?;
        Ok(Gateway {
            backends: self.backends,
            ledger: Mutex::new(self.ledger),
            budget_cap: self.budget_cap,
            retry: self.retry,
            pool,
        })
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder {
            backends: HashMap::new(),
            ledger: CostLedger::default(),
            budget_cap: None,
            retry: RetryPolicy::default(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        if request.request_tag.is_empty() {
            return Err(Error::EmptyRequestTag);
        }
        let backend = self.backend_for(&request.model_id)?;
        self.check_budget(&request.model_id, request.estimated_prompt_tokens())?;

        let response = self.with_retries(|| backend.complete(request))?;
        self.lock_ledger().record(
            &request.model_id,
            &request.request_tag,
            response.prompt_tokens,
            response.completion_tokens,
        );
        Ok(response)
    }

    pub fn embed(&self, model_id: &str, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let backend = self.backend_for(model_id)?;
        let estimate: u64 = texts.iter().map(|t| estimate_tokens(t)).sum();
        self.check_budget(model_id, estimate)?;
        let response = self.with_retries(|| backend.embed(model_id, texts))?;
        self.lock_ledger().record(model_id, TAG_EMBEDDING, response.prompt_tokens, 0);
        Ok(response.vectors)
    }

    /// Runs `f` over `items` on the gateway's worker pool. At most
    /// `max_in_flight` items run at once; output order matches input order.
    pub fn map_concurrent<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync,
    {
        self.pool.install(|| items.into_par_iter().map(&f).collect())
    }

    pub fn complete_all(&self, requests: Vec<ChatRequest>) -> Vec<Result<ChatResponse>> {
        self.map_concurrent(requests, |r| self.complete(&r))
    }

    /// Completes `request` and parses the `START ... END` payload. Unparseable
    /// or empty responses are regenerated up to `marker_retries` more times;
    /// after that the whole trimmed response is used. The flag reports that
    /// fallback. Attempt numbers continue from `request.attempt`.
    pub fn complete_marked(&self, request: &ChatRequest, marker_retries: u32) -> Result<(String, bool)> {
        let mut request = request.clone();
        let base = request.attempt;
        let mut last_text = String::new();
        for attempt in 0..=marker_retries {
            request.attempt = base + attempt;
            let response = self.complete(&request)?;
            match extract_marked(&response.text) {
                Ok(s) if !s.is_empty() => return Ok((s, false)),
                _ => last_text = response.text,
            }
        }
        tracing::warn!(
            tag = %request.request_tag,
            sample = request.sample_index,
            "no START/END markers after {} attempt(s), using whole response",
            marker_retries + 1
        );
        Ok((last_text.trim().to_string(), true))
    }

    pub fn ledger_snapshot(&self) -> CostLedger {
        self.lock_ledger().clone()
    }

    pub fn budget_cap(&self) -> Option<f64> {
        self.budget_cap
    }

    fn backend_for(&self, model_id: &str) -> Result<&Arc<dyn Backend>> {
        self.backends
            .get(model_id)
            .ok_or_else(|| Error::UnknownModel(model_id.to_string()))
    }

    fn check_budget(&self, model_id: &str, estimated_prompt_tokens: u64) -> Result<()> {
        let Some(cap) = self.budget_cap else { return Ok(()) };
        let ledger = self.lock_ledger();
        let spent = ledger.total_dollars();
        let next = ledger.price_of(model_id).cost(estimated_prompt_tokens, 0);
        if spent + next > cap {
            return Err(Error::BudgetExceeded { spent, cap });
        }
        Ok(())
    }

    fn with_retries<R>(&self, mut call: impl FnMut() -> Result<R, BackendError>) -> Result<R> {
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            let started = Instant::now();
            match call() {
                Ok(r) => return Ok(r),
                Err(BackendError::Fatal(m)) => {
                    return Err(Error::BackendUnavailable { attempts: attempt, message: m })
                }
                Err(BackendError::Transient(m)) => {
                    tracing::debug!(attempt, elapsed_ms = started.elapsed().as_millis() as u64, "transient backend failure: {m}");
                    last = m;
                    if attempt < attempts {
                        thread::sleep(self.retry.delay(attempt));
                    }
                }
            }
        }
        Err(Error::BackendUnavailable { attempts, message: last })
    }

    fn lock_ledger(&self) -> MutexGuard<'_, CostLedger> {
        // A poisoned ledger only means another worker panicked mid-update of
        // plain counters; the data is still usable.
        self.ledger.lock().unwrap_or_else(|e| e.into_inner())
    }
}
