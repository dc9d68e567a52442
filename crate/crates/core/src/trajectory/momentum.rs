use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gateway::{ChatRequest, Gateway, TAG_MOMENTUM};
use crate::metaprompt::{TemplateId, TemplateRegistry};

/// Stands in for the previous summary on the first summarization.
pub const NO_PREVIOUS_PROBLEMS: &str = "(none)";

/// Running summary of the problems seen so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentumSummary {
    pub text: String,
    /// First and last step (inclusive) folded into the summary.
    pub covering_steps: (u64, u64),
}

/// Optimizer model settings for a summarization call.
#[derive(Debug, Clone, Copy)]
pub struct MomentumModel<'a> {
    pub gateway: &'a Gateway,
    pub model_id: &'a str,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub marker_retries: u32,
}

/// Folds `current_problems` (found at `step`) into `prev`. Returns the new
/// summary and whether marker parsing fell back to the raw response.
pub fn summarize_momentum(
    prev: Option<&MomentumSummary>,
    current_problems: &str,
    step: u64,
    registry: &TemplateRegistry,
    model: MomentumModel<'_>,
) -> Result<(MomentumSummary, bool)> {
    let previous = prev.map_or(NO_PREVIOUS_PROBLEMS, |p| p.text.as_str());
    let meta = registry.render_momentum(TemplateId::SgdmMomentum, previous, current_problems)?;
    let request = ChatRequest::optimizer(
        model.model_id,
        meta.text,
        TAG_MOMENTUM,
        model.temperature,
        model.max_output_tokens,
    );
    let (text, fallback) = model.gateway.complete_marked(&request, model.marker_retries)?;
    let start = prev.map_or(step, |p| p.covering_steps.0);
    Ok((MomentumSummary { text, covering_steps: (start, step) }, fallback))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::ScriptedMockBackend;

    fn setup() -> (Gateway, Arc<ScriptedMockBackend>) {
        let mock = Arc::new(ScriptedMockBackend::new("START combined issues END"));
        let gw = Gateway::builder().backend("opt", mock.clone()).build().unwrap();
        (gw, mock)
    }

    fn model(gw: &Gateway) -> MomentumModel<'_> {
        MomentumModel { gateway: gw, model_id: "opt", temperature: 1.0, max_output_tokens: 256, marker_retries: 1 }
    }

    #[test]
    fn first_summary_uses_placeholder() {
        let (gw, mock) = setup();
        let reg = TemplateRegistry::builtin();
        let (s, fallback) = summarize_momentum(None, "too terse", 0, &reg, model(&gw)).unwrap();
        assert_eq!(s.text, "combined issues");
        assert!(!fallback);
        let sent = &mock.calls()[0];
        assert_eq!(sent.request_tag, TAG_MOMENTUM);
        assert!(sent.user_text.contains("previous prompts.\n(none)\n"));
        assert!(sent.user_text.contains("current prompt.\ntoo terse\n"));
    }

    #[test]
    fn covering_range_extends() {
        let (gw, _) = setup();
        let reg = TemplateRegistry::builtin();
        let mut summary = None;
        for step in 0..=3 {
            let (s, _) = summarize_momentum(summary.as_ref(), "p", step, &reg, model(&gw)).unwrap();
            summary = Some(s);
        }
        assert_eq!(summary.unwrap().covering_steps, (0, 3));
    }
}
