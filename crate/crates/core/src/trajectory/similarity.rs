use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gateway::Gateway;

pub trait Similarity: Send + Sync {
    /// A value in `[0, 1]`; symmetric, and 1 for identical nonempty text.
    fn similarity(&self, a: &str, b: &str) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimilarityProvider {
    LexicalNgram {
        #[serde(default = "default_ngram")]
        n: usize,
    },
    EmbeddingApi { model: String },
}

fn default_ngram() -> usize {
    3
}

impl Default for SimilarityProvider {
    fn default() -> Self {
        SimilarityProvider::LexicalNgram { n: 3 }
    }
}

/// Cosine similarity of character n-gram count vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexicalNgram {
    pub n: usize,
}

impl Default for LexicalNgram {
    fn default() -> Self {
        Self { n: 3 }
    }
}

impl LexicalNgram {
    fn grams(&self, s: &str) -> HashMap<Vec<char>, u64> {
        let chars: Vec<char> = s.chars().collect();
        let mut counts = HashMap::new();
        if chars.is_empty() {
            return counts;
        }
        // Strings shorter than n count as one gram.
        let n = self.n.max(1).min(chars.len());
        for w in chars.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
        counts
    }

    pub fn score(&self, a: &str, b: &str) -> f64 {
        let ga = self.grams(a);
        let gb = self.grams(b);
        if ga.is_empty() || gb.is_empty() {
            return 0.0;
        }
        let dot: u64 = ga.iter().filter_map(|(g, x)| gb.get(g).map(|y| x * y)).sum();
        let na: u64 = ga.values().map(|x| x * x).sum();
        let nb: u64 = gb.values().map(|x| x * x).sum();
        let cos = dot as f64 / ((na as f64) * (nb as f64)).sqrt();
        cos.clamp(0.0, 1.0)
    }
}

impl Similarity for LexicalNgram {
    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.score(a, b))
    }
}

/// Embedding cosine mapped to `[0, 1]` as `(1 + cos) / 2`. Embeddings are
/// cached per text.
pub struct EmbeddingSimilarity<'a> {
    gateway: &'a Gateway,
    model_id: String,
    cache: Mutex<HashMap<String, Vec<f32>>>,
}

impl<'a> EmbeddingSimilarity<'a> {
    pub fn new(gateway: &'a Gateway, model_id: impl Into<String>) -> Self {
        Self { gateway, model_id: model_id.into(), cache: Mutex::new(HashMap::new()) }
    }

    fn embedding(&self, text: &str) -> Result<Vec<f32>> {
        if let Some(v) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(text) {
            return Ok(v.clone());
        }
        let v = self
            .gateway
            .embed(&self.model_id, &[text.to_string()])?
            .pop()
            .unwrap_or_default();
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(text.to_string(), v.clone());
        Ok(v)
    }
}

impl Similarity for EmbeddingSimilarity<'_> {
    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        if a == b {
            return Ok(1.0);
        }
        let (x, y) = (self.embedding(a)?, self.embedding(b)?);
        let dot: f64 = x.iter().zip(&y).map(|(p, q)| f64::from(*p) * f64::from(*q)).sum();
        let nx: f64 = x.iter().map(|p| f64::from(*p).powi(2)).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|q| f64::from(*q).powi(2)).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            return Ok(0.5);
        }
        Ok(((1.0 + dot / (nx * ny)) / 2.0).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::ScriptedMockBackend;
    use proptest::prelude::*;

    #[test]
    fn identity_and_disjoint() {
        let lex = LexicalNgram::default();
        assert_eq!(lex.score("Let's think step by step.", "Let's think step by step."), 1.0);
        assert_eq!(lex.score("abc", "xyz"), 0.0);
        assert_eq!(lex.score("", ""), 0.0);
        assert_eq!(lex.score("ab", "ab"), 1.0);
    }

    #[test]
    fn hand_computed_overlap() {
        // "abcd" -> {abc, bcd}; "abce" -> {abc, bce}; cos = 1 / (√2·√2) = 0.5
        assert!((LexicalNgram::default().score("abcd", "abce") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn embedding_similarity_via_mock() {
        let gw = Gateway::builder()
            .backend("emb", Arc::new(ScriptedMockBackend::new("")))
            .build()
            .unwrap();
        let sim = EmbeddingSimilarity::new(&gw, "emb");
        assert_eq!(sim.similarity("same", "same").unwrap(), 1.0);
        let s = sim.similarity("think step by step", "solve the problem").unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert_eq!(s, sim.similarity("solve the problem", "think step by step").unwrap());
    }

    proptest! {
        #[test]
        fn lexical_is_symmetric_and_bounded(a in "[a-d ]{0,12}", b in "[a-d ]{0,12}") {
            let lex = LexicalNgram::default();
            let s = lex.score(&a, &b);
            prop_assert_eq!(s, lex.score(&b, &a));
            prop_assert!((0.0..=1.0).contains(&s));
            if !a.is_empty() {
                prop_assert_eq!(lex.score(&a, &a), 1.0);
            }
        }
    }
}
