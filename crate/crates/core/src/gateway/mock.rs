//! Deterministic offline backend.
//!
//! Responses depend only on the request contents (tag, text, sample index,
//! attempt), never on arrival order, so concurrent runs replay identically.

use std::sync::{Arc, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ledger::estimate_tokens;
use super::{Backend, BackendError, ChatRequest, ChatResponse, EmbeddingResponse};
use super::{TAG_CANDIDATE, TAG_MOMENTUM, TAG_REFLECTION, TAG_TASK};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default)]
    pub tag: Option<String>,
    #[serde(default)]
    pub contains: Option<String>,
    pub response: String,
}

impl ScriptRule {
    fn matches(&self, request: &ChatRequest) -> bool {
        self.tag.as_deref().is_none_or(|t| t == request.request_tag)
            && self.contains.as_deref().is_none_or(|s| request.user_text.contains(s))
    }
}

type Responder = Arc<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Scripted mock. Resolution order: the first matching rule, then the
/// responder function, then the default response.
pub struct ScriptedMockBackend {
    rules: Vec<ScriptRule>,
    responder: Option<Responder>,
    default_response: String,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedMockBackend {
    pub fn new(default_response: impl Into<String>) -> Self {
        Self {
            rules: Vec::new(),
            responder: None,
            default_response: default_response.into(),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn rule(mut self, tag: Option<&str>, contains: Option<&str>, response: impl Into<String>) -> Self {
        self.rules.push(ScriptRule {
            tag: tag.map(str::to_string),
            contains: contains.map(str::to_string),
            response: response.into(),
        });
        self
    }

    pub fn rules(mut self, rules: impl IntoIterator<Item = ScriptRule>) -> Self {
        self.rules.extend(rules);
        self
    }

    pub fn with_responder<F>(mut self, f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    {
        self.responder = Some(Arc::new(f));
        self
    }

    /// Every request received so far, in arrival order.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn calls_with_tag(&self, tag: &str) -> usize {
        self.calls().iter().filter(|r| r.request_tag == tag).count()
    }

    fn respond(&self, request: &ChatRequest) -> String {
        if let Some(rule) = self.rules.iter().find(|r| r.matches(request)) {
            return rule.response.clone();
        }
        if let Some(text) = self.responder.as_ref().and_then(|f| f(request)) {
            return text;
        }
        self.default_response.clone()
    }
}

impl Backend for ScriptedMockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.clone());
        let text = self.respond(request);
        let prompt_tokens = request.system_text.as_deref().map_or(0, estimate_tokens)
            + estimate_tokens(&request.user_text);
        Ok(ChatResponse {
            completion_tokens: estimate_tokens(&text),
            prompt_tokens,
            text,
            provider_latency_ms: 0,
        })
    }

    fn embed(&self, _model_id: &str, texts: &[String]) -> Result<EmbeddingResponse, BackendError> {
        Ok(EmbeddingResponse {
            vectors: texts.iter().map(|t| hashed_trigram_embedding(t, 64)).collect(),
            prompt_tokens: texts.iter().map(|t| estimate_tokens(t)).sum(),
        })
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn hashed_trigram_embedding(text: &str, dim: usize) -> Vec<f32> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut v = vec![0f32; dim];
    for w in chars.windows(3) {
        let s: String = w.iter().collect();
        let h = fnv1a(s.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    v
}

/// Stand-in optimizer and task model for offline runs on arithmetic
/// datasets whose questions contain `A + B`.
///
/// The task model answers correctly with a probability that grows with the
/// number of "helpful" words in the prompt; the optimizer proposes the
/// current prompt plus one word chosen by hashing the prompt and sample
/// index. This gives runs that actually improve, plateau and stay
/// deterministic.
#[derive(Debug, Clone)]
pub struct SyntheticResponder {
    sum: Regex,
}

const HELPFUL: &[&str] = &["carefully", "verify", "digits", "add", "precisely", "check", "column"];
const NEUTRAL: &[&str] = &["please", "now", "quickly", "friend"];

impl Default for SyntheticResponder {
    fn default() -> Self {
        Self { sum: Regex::new(r"(\d+)\s*\+\s*(\d+)").expect("static pattern") }
    }
}

impl SyntheticResponder {
    pub fn respond(&self, request: &ChatRequest) -> Option<String> {
        match request.request_tag.as_str() {
            TAG_TASK => Some(self.answer(&request.user_text)),
            TAG_CANDIDATE => Some(self.propose(request)),
            TAG_REFLECTION => {
                Some("The prompt does not ask the model to add the numbers carefully. START The prompt never asks for careful digit-by-digit addition. END".into())
            }
            TAG_MOMENTUM => Some("START Across steps the prompts omit careful addition and checking. END".into()),
            _ => None,
        }
    }

    pub fn into_backend(self) -> ScriptedMockBackend {
        ScriptedMockBackend::new("I am not sure.").with_responder(move |r| self.respond(r))
    }

    fn answer(&self, input: &str) -> String {
        let Some(caps) = self.sum.captures(input) else {
            return "I am not sure.".into();
        };
        let a: u64 = caps[1].parse().unwrap_or(0);
        let b: u64 = caps[2].parse().unwrap_or(0);
        let lower = input.to_lowercase();
        let helpful = HELPFUL.iter().filter(|w| lower.contains(*w)).count() as u64;
        let skill = (35 + 12 * helpful).min(95);
        if fnv1a(input.as_bytes()) % 100 < skill {
            format!("Adding them gives {}. The answer is {}.", a + b, a + b)
        } else {
            format!("The answer is {}.", a + b + 1)
        }
    }

    fn propose(&self, request: &ChatRequest) -> String {
        let current = meta_current_prompt(&request.user_text).unwrap_or_default();
        let key = format!("{current}#{}#{}", request.sample_index, request.attempt);
        let h = fnv1a(key.as_bytes()) as usize;
        let pool: Vec<&str> = HELPFUL.iter().chain(NEUTRAL).copied().collect();
        let word = pool[h % pool.len()];
        let proposal = if current.to_lowercase().contains(word) {
            current.clone()
        } else if current.is_empty() {
            word.to_string()
        } else {
            format!("{current} {word}")
        };
        format!("Here is a refined instruction.\nSTART {proposal} END")
    }
}

/// The line after "The current prompt is:" in a rendered meta-prompt.
pub fn meta_current_prompt(meta: &str) -> Option<String> {
    let rest = &meta[meta.find("The current prompt is:\n")? + "The current prompt is:\n".len()..];
    Some(rest.lines().next().unwrap_or("").trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_matching_rule_wins() {
        let mock = ScriptedMockBackend::new("default")
            .rule(Some(TAG_TASK), Some("cat"), "meow")
            .rule(Some(TAG_TASK), None, "generic");
        let r = |t: &str| mock.complete(&ChatRequest::task("m", t.into(), 8)).unwrap().text;
        assert_eq!(r("a cat"), "meow");
        assert_eq!(r("a dog"), "generic");
        let other = ChatRequest::optimizer("m", "x".into(), TAG_CANDIDATE, 1.0, 8);
        assert_eq!(mock.complete(&other).unwrap().text, "default");
        assert_eq!(mock.calls_with_tag(TAG_TASK), 2);
    }

    #[test]
    fn token_estimate_is_quarter_chars() {
        let mock = ScriptedMockBackend::new("12345");
        let r = mock.complete(&ChatRequest::task("m", "x".repeat(9), 8)).unwrap();
        assert_eq!((r.prompt_tokens, r.completion_tokens), (3, 2));
    }

    #[test]
    fn synthetic_responses_are_content_determined() {
        let s = SyntheticResponder::default();
        let meta = "The current prompt is:\nLet's think step by step.\n\nmore".to_string();
        let req = ChatRequest::optimizer("m", meta, TAG_CANDIDATE, 1.0, 8).with_sample_index(3);
        let a = s.respond(&req).unwrap();
        assert_eq!(a, s.respond(&req).unwrap());
        assert!(a.contains("START Let's think step by step."));
        let q = ChatRequest::task("m", "What is 12 + 30?\nLet's think.".into(), 8);
        let ans = s.respond(&q).unwrap();
        assert!(ans.contains("42") || ans.contains("43"));
    }

    #[test]
    fn mock_embeddings_are_deterministic() {
        let mock = ScriptedMockBackend::new("");
        let texts = vec!["hello world".to_string()];
        let a = mock.embed("e", &texts).unwrap();
        let b = mock.embed("e", &texts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vectors[0].len(), 64);
    }
}
