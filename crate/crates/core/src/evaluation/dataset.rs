//! Task datasets and train/valid/test splits.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskExample {
    #[serde(rename = "id")]
    pub example_id: String,
    pub question: String,
    #[serde(rename = "answer")]
    pub gold_answer: String,
}

impl TaskExample {
    pub fn new(id: impl Into<String>, question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self { example_id: id.into(), question: question.into(), gold_answer: answer.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<TaskExample>,
    pub valid: Vec<TaskExample>,
    pub test: Vec<TaskExample>,
    pub split_seed: u64,
}

/// Explicit split sizes, for datasets sampled to fixed counts instead of
/// the 2:2:6 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

pub const MIN_SPLIT_EXAMPLES: usize = 10;

/// Reads one `{"id", "question", "answer"}` object per line. Blank lines are
/// skipped.
pub fn load_jsonl(path: &Path) -> Result<Vec<TaskExample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: TaskExample = serde_json::from_str(&line).map_err(|e| {
            Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(ex);
    }
    ensure_unique_ids(&out)?;
    Ok(out)
}

pub fn ensure_unique_ids(examples: &[TaskExample]) -> Result<()> {
    let mut seen = HashSet::new();
    for ex in examples {
        if !seen.insert(ex.example_id.as_str()) {
            return Err(Error::DuplicateExampleId(ex.example_id.clone()));
        }
    }
    Ok(())
}

/// Seeded 2:2:6 split: `⌊0.2n⌋` train, `⌊0.2n⌋` valid, the rest test.
pub fn split_dataset(examples: &[TaskExample], seed: u64) -> Result<DatasetSplit> {
    if examples.len() < MIN_SPLIT_EXAMPLES {
        return Err(Error::TooFewExamples { found: examples.len(), required: MIN_SPLIT_EXAMPLES });
    }
    let n = examples.len();
    let fifth = n / 5;
    split_sized(examples, seed, SplitSizes { train: fifth, valid: fifth, test: n - 2 * fifth })
}

pub fn split_sized(examples: &[TaskExample], seed: u64, sizes: SplitSizes) -> Result<DatasetSplit> {
    let needed = sizes.train + sizes.valid + sizes.test;
    if examples.len() < needed || sizes.train == 0 || sizes.valid == 0 {
        return Err(Error::TooFewExamples { found: examples.len(), required: needed.max(2) });
    }
    ensure_unique_ids(examples)?;
    let mut shuffled = examples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rest = shuffled.into_iter();
    let train = rest.by_ref().take(sizes.train).collect();
    let valid = rest.by_ref().take(sizes.valid).collect();
    let test = rest.take(sizes.test).collect();
    Ok(DatasetSplit { train, valid, test, split_seed: seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples(n: usize) -> Vec<TaskExample> {
        (0..n).map(|i| TaskExample::new(format!("e{i}"), format!("q{i}"), format!("a{i}"))).collect()
    }

    fn ids(v: &[TaskExample]) -> Vec<&str> {
        v.iter().map(|e| e.example_id.as_str()).collect()
    }

    #[test]
    fn ten_examples_split_two_two_six() {
        for seed in [0, 1, 99] {
            let s = split_dataset(&examples(10), seed).unwrap();
            assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (2, 2, 6));
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let data = examples(100);
        let a = split_dataset(&data, 7).unwrap();
        assert_eq!(a, split_dataset(&data, 7).unwrap());
        let mut all: Vec<&str> = ids(&a.train);
        all.extend(ids(&a.valid));
        all.extend(ids(&a.test));
        let unique: HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 100);
    }

    #[test]
    fn different_seeds_differ() {
        let data = examples(100);
        let a = split_dataset(&data, 1).unwrap();
        let b = split_dataset(&data, 2).unwrap();
        assert_ne!(ids(&a.train), ids(&b.train));
    }

    #[test]
    fn too_few_and_duplicates() {
        assert!(matches!(split_dataset(&examples(9), 0), Err(Error::TooFewExamples { found: 9, .. })));
        let mut d = examples(12);
        d[3].example_id = "e0".into();
        assert!(matches!(split_dataset(&d, 0), Err(Error::DuplicateExampleId(_))));
    }

    #[test]
    fn fixed_sizes() {
        let s = split_sized(&examples(500), 3, SplitSizes { train: 100, valid: 100, test: 300 }).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (100, 100, 300));
    }

    #[test]
    fn loads_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(&p, "{\"id\":\"1\",\"question\":\"Q\",\"answer\":\"A\"}\n\n{\"id\":\"2\",\"question\":\"R\",\"answer\":\"B\"}\n").unwrap();
        let d = load_jsonl(&p).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].gold_answer, "B");
        std::fs::write(&p, "{\"id\":\"1\"}\n").unwrap();
        assert!(matches!(load_jsonl(&p), Err(Error::Config(_))));
    }
}
