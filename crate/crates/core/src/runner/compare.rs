use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::report::render_table;
use super::{load_summary, RunSummary};
use crate::error::{Error, Result};

/// Method × task test scores with per-method token and dollar totals.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub tasks: Vec<String>,
    /// Sorted by method name.
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    /// Test score per task column; `None` where the method has no run.
    pub scores: Vec<Option<f64>>,
    pub tokens: u64,
    pub dollars: f64,
}

pub fn compare_runs(paths: &[&Path]) -> Result<ComparisonTable> {
    if paths.len() < 2 {
        return Err(Error::MissingRun(format!("compare needs at least 2 runs, got {}", paths.len())));
    }
    let summaries = paths.iter().map(|p| load_summary(p)).collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable::from_summaries(&summaries))
}

impl ComparisonTable {
    pub fn from_summaries(summaries: &[RunSummary]) -> Self {
        let tasks: Vec<String> = summaries.iter().map(|s| s.task.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let mut by_method: BTreeMap<&str, Vec<&RunSummary>> = BTreeMap::new();
        for s in summaries {
            by_method.entry(&s.method).or_default().push(s);
        }
        let rows = by_method
            .into_iter()
            .map(|(method, runs)| ComparisonRow {
                method: method.to_string(),
                scores: tasks
                    .iter()
                    .map(|t| runs.iter().rev().find(|r| &r.task == t).and_then(|r| r.test_score).map(|s| s.value))
                    .collect(),
                tokens: runs.iter().map(|r| r.total_tokens).sum(),
                dollars: runs.iter().map(|r| r.total_dollars).sum(),
            })
            .collect();
        Self { tasks, rows }
    }

    fn headers(&self) -> Vec<&str> {
        let mut h = vec!["method"];
        h.extend(self.tasks.iter().map(String::as_str));
        h.extend(["tokens", "dollars"]);
        h
    }

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![r.method.clone()];
                row.extend(r.scores.iter().map(|s| s.map_or_else(String::new, |v| format!("{v:.2}"))));
                row.push(r.tokens.to_string());
                row.push(format!("{:.6}", r.dollars));
                row
            })
            .collect()
    }

    pub fn render_text(&self) -> String {
        render_table(&self.headers(), &self.cells())
    }

    pub fn render_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(self.headers()).map_err(to_err)?;
        for row in self.cells() {
            w.write_record(&row).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
