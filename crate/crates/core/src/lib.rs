//! Evaluation harness for LLM code generation targeting constraint DSLs.
//!
//! The pipeline renders prompt templates over a dataset of modeled domains,
//! samples code from chat-completion providers, extracts and validates the
//! generated snippets, optionally repairs failures in a single pass, judges
//! correctness with an LLM judge, and folds everything into pass@k, accuracy,
//! calibration and chi-square reports.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`dataset`]: domains, coding tasks, manual labels, dataset statistics
//! - [`prompting`]: the nine prompt templates and three task-delivery modes
//! - [`gateway`]: chat-completion transport with retry, context guarding and
//!   deterministic record/replay
//! - [`codeproc`]: snippet extraction, batch splitting, shape checks
//! - [`validation`]: built-in subset validators plus an external-command adapter
//! - [`repair`]: single-pass well-formedness and correctness repair
//! - [`judging`]: LLM-as-a-judge verdicts and calibration against manual labels
//! - [`metrics`]: pass@k, accuracy, repair gain, chi-square independence test
//! - [`orchestrator`]: end-to-end grid execution over a resumable run store
//! - [`report`]: CSV/Markdown report emission from a run store

pub mod codeproc;
pub mod dataset;
pub mod gateway;
pub mod judging;
pub mod metrics;
pub mod orchestrator;
pub mod prompting;
pub mod repair;
pub mod report;
pub mod validation;

mod language;
#[cfg(test)]
mod testutil;

pub use language::TargetLanguage;
