//! Per-(model, tag) token and dollar accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Dollar rates for one model, per 1K tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pricing {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

impl Pricing {
    pub fn new(prompt_per_1k: f64, completion_per_1k: f64) -> Self {
        Self { prompt_per_1k, completion_per_1k }
    }

    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        prompt_tokens as f64 * self.prompt_per_1k / 1000.0
            + completion_tokens as f64 * self.completion_per_1k / 1000.0
    }
}

/// Token counters for one (model, tag) cell. Dollars are derived from the
/// integer totals, so the ledger does not depend on call completion order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub model_id: String,
    pub request_tag: String,
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub dollars: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    #[serde(default)]
    pricing: BTreeMap<String, Pricing>,
    /// model_id -> request_tag -> totals
    #[serde(default)]
    usage: BTreeMap<String, BTreeMap<String, UsageTotals>>,
}

impl CostLedger {
    pub fn new(pricing: BTreeMap<String, Pricing>) -> Self {
        Self { pricing, usage: BTreeMap::new() }
    }

    pub fn pricing(&self) -> &BTreeMap<String, Pricing> {
        &self.pricing
    }

    pub fn set_pricing(&mut self, pricing: BTreeMap<String, Pricing>) {
        self.pricing = pricing;
    }

    pub fn price_of(&self, model_id: &str) -> Pricing {
        self.pricing.get(model_id).copied().unwrap_or_default()
    }

    pub fn record(&mut self, model_id: &str, tag: &str, prompt_tokens: u64, completion_tokens: u64) {
        let cell = self
            .usage
            .entry(model_id.to_string())
            .or_default()
            .entry(tag.to_string())
            .or_default();
        cell.calls += 1;
        cell.prompt_tokens += prompt_tokens;
        cell.completion_tokens += completion_tokens;
    }

    pub fn totals(&self, model_id: &str, tag: &str) -> Option<UsageTotals> {
        self.usage.get(model_id)?.get(tag).copied()
    }

    /// Rows sorted by model id, then tag.
    pub fn report(&self) -> Vec<LedgerRow> {
        let mut rows = Vec::new();
        for (model_id, tags) in &self.usage {
            let price = self.price_of(model_id);
            for (tag, t) in tags {
                rows.push(LedgerRow {
                    model_id: model_id.clone(),
                    request_tag: tag.clone(),
                    calls: t.calls,
                    prompt_tokens: t.prompt_tokens,
                    completion_tokens: t.completion_tokens,
                    dollars: price.cost(t.prompt_tokens, t.completion_tokens),
                });
            }
        }
        rows
    }

    pub fn total_dollars(&self) -> f64 {
        self.report().iter().map(|r| r.dollars).sum()
    }

    pub fn total_calls(&self) -> u64 {
        self.cells().map(|t| t.calls).sum()
    }

    pub fn total_prompt_tokens(&self) -> u64 {
        self.cells().map(|t| t.prompt_tokens).sum()
    }

    pub fn total_completion_tokens(&self) -> u64 {
        self.cells().map(|t| t.completion_tokens).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_prompt_tokens() + self.total_completion_tokens()
    }

    /// Calls recorded under `tag`, summed over models.
    pub fn calls_for_tag(&self, tag: &str) -> u64 {
        self.usage.values().filter_map(|tags| tags.get(tag)).map(|t| t.calls).sum()
    }

    fn cells(&self) -> impl Iterator<Item = &UsageTotals> {
        self.usage.values().flat_map(|tags| tags.values())
    }
}

/// Offline token estimate: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn priced() -> CostLedger {
        let mut p = BTreeMap::new();
        p.insert("opt".to_string(), Pricing::new(0.5, 1.5));
        CostLedger::new(p)
    }

    #[test]
    fn dollars_follow_pricing_table() {
        let mut l = priced();
        l.record("opt", "candidate-gen", 1000, 2000);
        assert!((l.total_dollars() - 3.50).abs() < 1e-12);
    }

    #[test]
    fn empty_ledger_has_no_rows() {
        assert!(CostLedger::default().report().is_empty());
    }

    #[test]
    fn same_tag_accumulates_into_one_row() {
        let mut l = priced();
        l.record("opt", "reflection", 10, 100);
        l.record("opt", "reflection", 10, 200);
        let rows = l.report();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].completion_tokens, 300);
        assert_eq!(rows[0].calls, 2);
    }

    #[test]
    fn rows_sorted_by_model_then_tag() {
        let mut l = priced();
        l.record("task", "task-eval", 1, 1);
        l.record("opt", "task-eval", 1, 1);
        l.record("opt", "candidate-gen", 1, 1);
        let keys: Vec<_> = l
            .report()
            .into_iter()
            .map(|r| (r.model_id, r.request_tag))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("opt".into(), "candidate-gen".into()),
                ("opt".into(), "task-eval".into()),
                ("task".into(), "task-eval".into()),
            ]
        );
    }

    #[test]
    fn unpriced_model_costs_nothing() {
        let mut l = priced();
        l.record("local", "task-eval", 5000, 5000);
        assert_eq!(l.total_dollars(), 0.0);
        assert_eq!(l.total_tokens(), 10_000);
    }

    #[test]
    fn token_estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }
}
