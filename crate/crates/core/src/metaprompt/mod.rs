//! Meta-prompt templates and their rendering.
//!
//! Template bodies live in `templates/<id>.txt` and use `{name}`
//! placeholders. Rendering is a single pass, so braces inside bound values
//! are never re-expanded. A line holding `{modified word number}` is dropped
//! when no budget is bound.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{ErrorDemo, PromptPosition, Score, TaskExample};
use crate::trajectory::TrajectoryEntry;

pub const CURRENT_PROMPT: &str = "current prompt";
pub const CURRENT_SCORE: &str = "current prompt score";
pub const PREVIOUS_PROMPTS: &str = "previous prompts";
pub const TASK_EXAMPLES: &str = "task examples";
pub const PROBLEMS: &str = "problems";
pub const BUDGET: &str = "modified word number";
pub const POSITION: &str = "prompt position description";
pub const ERROR_DEMOS: &str = "error demonstrations";
pub const PREVIOUS_PROBLEMS: &str = "previous problems";
pub const CURRENT_PROBLEM: &str = "current problem";

/// Placeholders whose whole line is dropped when unbound.
const OPTIONAL_LINE: &[&str] = &[BUDGET];

/// Stands in for the task prompt inside meta-prompt exemplars.
pub const PROMPT_TOKEN: &str = "<Prompt>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    GpoUpdate,
    ApeUpdate,
    ApoGradient,
    ApoUpdate,
    OproUpdate,
    Pe2Gradient,
    Pe2Update,
    SgdmGradient,
    SgdmMomentum,
    SgdmUpdate,
    PpBlock,
    PprBlock,
    RetrievalBlock,
    SummarizationBlock,
    EditingUpdate,
    GenerationUpdate,
}

impl TemplateId {
    pub const ALL: [TemplateId; 16] = [
        TemplateId::GpoUpdate,
        TemplateId::ApeUpdate,
        TemplateId::ApoGradient,
        TemplateId::ApoUpdate,
        TemplateId::OproUpdate,
        TemplateId::Pe2Gradient,
        TemplateId::Pe2Update,
        TemplateId::SgdmGradient,
        TemplateId::SgdmMomentum,
        TemplateId::SgdmUpdate,
        TemplateId::PpBlock,
        TemplateId::PprBlock,
        TemplateId::RetrievalBlock,
        TemplateId::SummarizationBlock,
        TemplateId::EditingUpdate,
        TemplateId::GenerationUpdate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::GpoUpdate => "gpo_update",
            TemplateId::ApeUpdate => "ape_update",
            TemplateId::ApoGradient => "apo_gradient",
            TemplateId::ApoUpdate => "apo_update",
            TemplateId::OproUpdate => "opro_update",
            TemplateId::Pe2Gradient => "pe2_gradient",
            TemplateId::Pe2Update => "pe2_update",
            TemplateId::SgdmGradient => "sgdm_gradient",
            TemplateId::SgdmMomentum => "sgdm_momentum",
            TemplateId::SgdmUpdate => "sgdm_update",
            TemplateId::PpBlock => "pp_block",
            TemplateId::PprBlock => "ppr_block",
            TemplateId::RetrievalBlock => "retrieval_block",
            TemplateId::SummarizationBlock => "summarization_block",
            TemplateId::EditingUpdate => "editing_update",
            TemplateId::GenerationUpdate => "generation_update",
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateId::GpoUpdate => include_str!("../../templates/gpo_update.txt"),
            TemplateId::ApeUpdate => include_str!("../../templates/ape_update.txt"),
            TemplateId::ApoGradient => include_str!("../../templates/apo_gradient.txt"),
            TemplateId::ApoUpdate => include_str!("../../templates/apo_update.txt"),
            TemplateId::OproUpdate => include_str!("../../templates/opro_update.txt"),
            TemplateId::Pe2Gradient => include_str!("../../templates/pe2_gradient.txt"),
            TemplateId::Pe2Update => include_str!("../../templates/pe2_update.txt"),
            TemplateId::SgdmGradient => include_str!("../../templates/sgdm_gradient.txt"),
            TemplateId::SgdmMomentum => include_str!("../../templates/sgdm_momentum.txt"),
            TemplateId::SgdmUpdate => include_str!("../../templates/sgdm_update.txt"),
            TemplateId::PpBlock => include_str!("../../templates/pp_block.txt"),
            TemplateId::PprBlock => include_str!("../../templates/ppr_block.txt"),
            TemplateId::RetrievalBlock => include_str!("../../templates/retrieval_block.txt"),
            TemplateId::SummarizationBlock => include_str!("../../templates/summarization_block.txt"),
            TemplateId::EditingUpdate => include_str!("../../templates/editing_update.txt"),
            TemplateId::GenerationUpdate => include_str!("../../templates/generation_update.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

impl MetaPromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Self {
        let mut body = body.into();
        if body.ends_with('\n') {
            body.pop();
        }
        Self { id, body }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        parse(&self.body)
            .into_iter()
            .filter_map(|s| match s {
                Segment::Slot(n) if seen.insert(n.clone()) => Some(n),
                _ => None,
            })
            .collect()
    }

    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<RenderedMetaPrompt> {
        let kept: Vec<&str> = self
            .body
            .split('\n')
            .filter(|line| {
                !OPTIONAL_LINE
                    .iter()
                    .any(|p| !bindings.contains_key(*p) && line.contains(&format!("{{{p}}}")))
            })
            .collect();
        let segments = parse(&kept.join("\n"));

        let mut missing = Vec::new();
        for s in &segments {
            if let Segment::Slot(n) = s {
                if !bindings.contains_key(n) && !missing.contains(n) {
                    missing.push(n.clone());
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingPlaceholder(missing));
        }

        let mut text = String::new();
        let mut bound = BTreeMap::new();
        for s in segments {
            match s {
                Segment::Text(t) => text.push_str(&t),
                Segment::Slot(n) => {
                    let v = &bindings[&n];
                    text.push_str(v);
                    bound.insert(n, v.clone());
                }
            }
        }
        Ok(RenderedMetaPrompt { template_id: self.id, text, bound_placeholders: bound })
    }
}

fn is_placeholder_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == ' ')
}

fn parse(body: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                text.push_str(&rest[..open]);
                if !text.is_empty() {
                    out.push(Segment::Text(std::mem::take(&mut text)));
                }
                out.push(Segment::Slot(after[..close].to_string()));
                rest = &after[close + 1..];
            }
            _ => {
                text.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        out.push(Segment::Text(text));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedMetaPrompt {
    pub template_id: TemplateId,
    pub text: String,
    pub bound_placeholders: BTreeMap<String, String>,
}

impl RenderedMetaPrompt {
    /// Inserts `line` before the final line (the "Wrap ... with START and
    /// END." instruction).
    pub fn with_line_before_last(mut self, line: &str) -> Self {
        match self.text.rfind('\n') {
            Some(i) => self.text.insert_str(i + 1, &format!("{line}\n")),
            None => self.text = format!("{line}\n{}", self.text),
        }
        self
    }

    /// Inserts `block` as its own paragraph after the first paragraph.
    pub fn with_block_after_first_paragraph(mut self, block: &str) -> Self {
        match self.text.find("\n\n") {
            Some(i) => self.text.insert_str(i + 2, &format!("{block}\n\n")),
            None => self.text.push_str(&format!("\n\n{block}")),
        }
        self
    }
}

/// Immutable set of templates, one per id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    templates: BTreeMap<TemplateId, MetaPromptTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| (id, MetaPromptTemplate::new(id, id.builtin_body())))
            .collect();
        Self { templates }
    }

    /// Built-in templates, replaced by any `<id>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut reg = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{id}.txt"));
            if path.is_file() {
                let body = std::fs::read_to_string(&path)?;
                reg.templates.insert(id, MetaPromptTemplate::new(id, body));
            }
        }
        Ok(reg)
    }

    pub fn get(&self, id: TemplateId) -> &MetaPromptTemplate {
        &self.templates[&id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MetaPromptTemplate> {
        self.templates.values()
    }

    pub fn render(&self, id: TemplateId, bindings: &BTreeMap<String, String>) -> Result<RenderedMetaPrompt> {
        self.get(id).render(bindings)
    }

    pub fn render_update(&self, id: TemplateId, inputs: &UpdateInputs) -> Result<RenderedMetaPrompt> {
        let mut b = BTreeMap::new();
        b.insert(CURRENT_PROMPT.to_string(), inputs.current_prompt.clone());
        b.insert(CURRENT_SCORE.to_string(), inputs.current_score.display().to_string());
        b.insert(TASK_EXAMPLES.to_string(), inputs.examples_block.clone());
        b.insert(POSITION.to_string(), inputs.position_desc.clone());
        if let Some(t) = &inputs.trajectory_block {
            b.insert(PREVIOUS_PROMPTS.to_string(), t.clone());
        }
        if let Some(p) = &inputs.problems {
            b.insert(PROBLEMS.to_string(), p.clone());
        }
        if let Some(n) = inputs.budget {
            b.insert(BUDGET.to_string(), n.to_string());
        }
        self.render(id, &b)
    }

    pub fn render_gradient(&self, id: TemplateId, current_prompt: &str, demos: &[ErrorDemo]) -> Result<RenderedMetaPrompt> {
        if demos.is_empty() {
            return Err(Error::EmptyErrorDemos);
        }
        let mut b = BTreeMap::new();
        b.insert(CURRENT_PROMPT.to_string(), current_prompt.to_string());
        b.insert(ERROR_DEMOS.to_string(), format_error_demos(demos));
        self.render(id, &b)
    }

    pub fn render_momentum(&self, id: TemplateId, previous: &str, current_problem: &str) -> Result<RenderedMetaPrompt> {
        let mut b = BTreeMap::new();
        b.insert(PREVIOUS_PROBLEMS.to_string(), previous.to_string());
        b.insert(CURRENT_PROBLEM.to_string(), current_problem.to_string());
        self.render(id, &b)
    }
}

/// Inputs shared by every update template. Absent optional parts leave
/// their placeholder unbound.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateInputs {
    pub current_prompt: String,
    pub current_score: Score,
    pub trajectory_block: Option<String>,
    pub examples_block: String,
    pub problems: Option<String>,
    pub budget: Option<u32>,
    pub position_desc: String,
}

/// The edit-budget sentence, for update templates that lack one.
pub fn budget_sentence(budget: u32) -> String {
    format!("You are allowed to change up to {budget} words in the current prompt.")
}

/// `Prompt: ...` / `Score: ...` pairs separated by blank lines, in the
/// given order.
pub fn format_trajectory_block(entries: &[TrajectoryEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("Prompt: {}\nScore: {}", e.prompt, e.score.display()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Exemplars with [`PROMPT_TOKEN`] where the task prompt goes:
///
/// ```text
/// input:
/// <question>
/// <Prompt>
/// output:
/// <gold answer>
/// ```
pub fn format_task_examples(examples: &[TaskExample], position: PromptPosition, expected: usize) -> Result<String> {
    if examples.len() != expected {
        return Err(Error::ExampleCountMismatch { expected, found: examples.len() });
    }
    Ok(examples
        .iter()
        .map(|ex| {
            format!(
                "input:\n{}\noutput:\n{}",
                position.compose(PROMPT_TOKEN, &ex.question),
                ex.gold_answer
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n"))
}

pub fn format_error_demos(demos: &[ErrorDemo]) -> String {
    demos
        .iter()
        .map(|d| {
            format!(
                "Question: {}\nWrong prediction: {}\nGround truth answer: {}",
                d.question, d.prediction, d.gold
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}
