//! Answer metrics and answer extraction.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Normalization {
    pub trim: bool,
    pub collapse_whitespace: bool,
    pub case_fold: bool,
    pub strip_trailing_period: bool,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { trim: true, collapse_whitespace: true, case_fold: true, strip_trailing_period: true }
    }
}

impl Normalization {
    pub fn apply(&self, s: &str) -> String {
        let mut out = if self.collapse_whitespace {
            s.split_whitespace().collect::<Vec<_>>().join(" ")
        } else if self.trim {
            s.trim().to_string()
        } else {
            s.to_string()
        };
        if self.case_fold {
            out = out.to_lowercase();
        }
        if self.strip_trailing_period && out.ends_with('.') {
            out.pop();
            if self.trim {
                out.truncate(out.trim_end().len());
            }
        }
        out
    }
}

pub fn exact_match(prediction: &str, gold: &str, norm: &Normalization) -> f64 {
    if norm.apply(prediction) == norm.apply(gold) {
        1.0
    } else {
        0.0
    }
}

/// Sentence-level ROUGE-L F1 over case-folded whitespace tokens.
pub fn rouge_l(prediction: &str, gold: &str) -> f64 {
    let p: Vec<String> = prediction.split_whitespace().map(str::to_lowercase).collect();
    let g: Vec<String> = gold.split_whitespace().map(str::to_lowercase).collect();
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&p, &g);
    if lcs == 0 {
        return 0.0;
    }
    let precision = lcs as f64 / p.len() as f64;
    let recall = lcs as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// How the final answer is pulled out of free-form task-model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AnswerExtractor {
    /// The whole output.
    Full,
    /// The last number, with thousands separators removed.
    LastNumber,
    /// The last bracketed option letter, e.g. `(B)`.
    LastOption,
    /// The last non-empty line.
    LastLine,
    /// Whatever follows the last "answer is".
    AnswerPhrase,
    /// First capture group of the last match (or the whole match).
    Regex(String),
}

#[derive(Debug, Clone)]
pub struct CompiledExtractor {
    kind: AnswerExtractor,
    pattern: Option<Regex>,
}

impl AnswerExtractor {
    pub fn compile(&self) -> Result<CompiledExtractor> {
        let pattern = match self {
            AnswerExtractor::Full | AnswerExtractor::LastLine | AnswerExtractor::AnswerPhrase => None,
            AnswerExtractor::LastNumber => Some(r"-?\d[\d,]*(?:\.\d+)?"),
            AnswerExtractor::LastOption => Some(r"\(([A-Za-z])\)"),
            AnswerExtractor::Regex(p) => Some(p.as_str()),
        };
        let pattern = pattern
            .map(|p| Regex::new(p).map_err(|e| Error::InvalidExtractor(e.to_string())))
            .transpose()?;
        Ok(CompiledExtractor { kind: self.clone(), pattern })
    }
}

impl CompiledExtractor {
    pub fn extract(&self, output: &str) -> String {
        match &self.kind {
            AnswerExtractor::Full => output.trim().to_string(),
            AnswerExtractor::LastLine => output
                .lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("")
                .trim()
                .to_string(),
            AnswerExtractor::AnswerPhrase => {
                let lower = output.to_lowercase();
                match lower.rfind("answer is") {
                    Some(i) => output[i + "answer is".len()..]
                        .trim()
                        .trim_start_matches(':')
                        .trim()
                        .to_string(),
                    None => output.trim().to_string(),
                }
            }
            AnswerExtractor::LastNumber => self
                .last_match(output)
                .map(|m| m.replace(',', ""))
                .unwrap_or_default(),
            AnswerExtractor::LastOption => self
                .last_match(output)
                .map(|m| format!("({})", m.to_uppercase()))
                .unwrap_or_default(),
            AnswerExtractor::Regex(_) => self.last_match(output).unwrap_or_default(),
        }
    }

    fn last_match(&self, output: &str) -> Option<String> {
        let re = self.pattern.as_ref()?;
        let caps = re.captures_iter(output).last()?;
        caps.get(1).or_else(|| caps.get(0)).map(|m| m.as_str().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_normalizes() {
        let n = Normalization::default();
        assert_eq!(exact_match("  Yes. ", "yes", &n), 1.0);
        assert_eq!(exact_match("(A)", "(B)", &n), 0.0);
        assert_eq!(exact_match("6", "6", &n), 1.0);
        assert_eq!(exact_match("a   b\n c", "A B C", &n), 1.0);
    }

    #[test]
    fn exact_match_without_normalization() {
        let n = Normalization { trim: false, collapse_whitespace: false, case_fold: false, strip_trailing_period: false };
        assert_eq!(exact_match("Yes", "yes", &n), 0.0);
    }

    #[test]
    fn rouge_l_examples() {
        assert!((rouge_l("the cat sat", "the cat") - 0.8).abs() < 1e-12);
        assert_eq!(rouge_l("The Cat", "the cat"), 1.0);
        assert_eq!(rouge_l("aa bb", "cc dd"), 0.0);
        assert_eq!(rouge_l("", "cc dd"), 0.0);
        assert_eq!(rouge_l("x", ""), 0.0);
    }

    #[test]
    fn extractors() {
        let num = AnswerExtractor::LastNumber.compile().unwrap();
        assert_eq!(num.extract("3 apples and 1,234 pears. The answer is 1,237."), "1237");
        assert_eq!(num.extract("no digits"), "");
        let opt = AnswerExtractor::LastOption.compile().unwrap();
        assert_eq!(opt.extract("(A) is wrong, so the answer is (c)."), "(C)");
        let line = AnswerExtractor::LastLine.compile().unwrap();
        assert_eq!(line.extract("thinking\nfinal  \n\n"), "final");
        let phrase = AnswerExtractor::AnswerPhrase.compile().unwrap();
        assert_eq!(phrase.extract("so The answer is: valid."), "valid.");
        let re = AnswerExtractor::Regex(r"#### (\d+)".into()).compile().unwrap();
        assert_eq!(re.extract("work\n#### 72"), "72");
        assert!(AnswerExtractor::Regex("(".into()).compile().is_err());
    }
}
