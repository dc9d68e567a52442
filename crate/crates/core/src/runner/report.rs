use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::RunSummary;
use crate::trajectory::TrajectoryEntry;

/// One row of the optimization curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub validation_score: f64,
    pub cumulative_tokens: u64,
    pub cumulative_dollars: f64,
}

pub fn curve_rows(entries: &[TrajectoryEntry]) -> Vec<CurvePoint> {
    entries
        .iter()
        .map(|e| CurvePoint {
            step: e.step_index,
            validation_score: e.score.value,
            cumulative_tokens: e.meta.cumulative_tokens,
            cumulative_dollars: e.meta.cumulative_dollars,
        })
        .collect()
}

/// Left-aligned columns separated by two spaces.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = line(headers.to_vec());
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

pub fn render_report(summary: &RunSummary, entries: &[TrajectoryEntry]) -> String {
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                e.step_index.to_string(),
                opt(e.meta.edit_budget),
                e.meta.batch_score.map_or_else(|| "-".into(), |s| format!("{s:.2}")),
                format!("{:.2}", e.score.value),
                format!("{:.6}", e.meta.cumulative_dollars),
                e.prompt.replace('\n', " "),
            ]
        })
        .collect();
    let mut out = String::new();
    let stop = summary.stop_reason.map_or("paused", |r| r.as_str());
    let _ = writeln!(out, "method: {}", summary.method);
    let _ = writeln!(out, "task: {}", summary.task);
    let _ = writeln!(out, "seed: {}", summary.seed);
    let _ = writeln!(out, "steps: {}", summary.steps);
    let _ = writeln!(out, "stop reason: {stop}");
    out.push('\n');
    out.push_str(&render_table(&["step", "budget", "batch", "valid", "dollars", "prompt"], &rows));
    out.push('\n');
    let _ = writeln!(out, "best prompt (step {}): {}", summary.best_step, summary.best_prompt);
    let _ = writeln!(out, "validation score: {:.2}", summary.best_validation_score.value);
    let _ = writeln!(
        out,
        "test score: {}",
        summary.test_score.map_or_else(|| "-".into(), |s| format!("{:.2}", s.value))
    );
    let _ = writeln!(
        out,
        "tokens: {} (prompt {}, completion {})",
        summary.total_tokens, summary.prompt_tokens, summary.completion_tokens
    );
    let _ = writeln!(out, "dollars: {:.6}", summary.total_dollars);
    let _ = writeln!(out, "marker fallbacks: {}", summary.marker_fallbacks);
    let _ = writeln!(out, "reflections skipped: {}", summary.reflections_skipped);
    out.push('\n');
    let ledger: Vec<Vec<String>> = summary
        .ledger
        .iter()
        .map(|r| {
            vec![
                r.model_id.clone(),
                r.request_tag.clone(),
                r.calls.to_string(),
                r.prompt_tokens.to_string(),
                r.completion_tokens.to_string(),
                format!("{:.6}", r.dollars),
            ]
        })
        .collect();
    out.push_str(&render_table(&["model", "tag", "calls", "prompt", "completion", "dollars"], &ledger));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment() {
        let t = render_table(&["a", "bb"], &[vec!["xyz".into(), "1".into()], vec!["q".into(), "22".into()]]);
        assert_eq!(t, "a    bb\nxyz  1\nq    22\n");
    }
}
