//! Prompt optimization with an LLM as the optimizer.
//!
//! The crate is organised around the pieces of one optimization loop:
//!
//! - [`gateway`]: chat-model access (HTTP and scripted mock), marker parsing,
//!   retries and cost accounting.
//! - [`evaluation`]: datasets, splits, answer metrics and prompt scoring.
//! - [`trajectory`]: the store of past (prompt, score) steps and the
//!   recency / relevance / importance retrieval strategies.
//! - [`schedule`]: edit-distance budget curves and word-level edit distance.
//! - [`metaprompt`]: the meta-prompt template registry and renderer.
//! - [`optimizer`]: method presets and the step / run loop.
//! - [`runner`]: run configuration files, persistence, resume and reports.

pub mod error;
pub mod evaluation;
pub mod gateway;
pub mod metaprompt;
pub mod optimizer;
pub mod runner;
pub mod schedule;
pub mod trajectory;

pub use error::{Error, Result};
