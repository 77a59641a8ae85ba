//! culturekit — a batch pipeline for mining cultural norms from survey data
//! with a chat-completion model, scoring a model's cultural alignment against
//! country-level majority answers, and synthesizing norm-enhanced
//! chain-of-thought fine-tuning datasets (SFT and preference pairs).
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`corpus`] — questionnaire corpora (WVS-style) and the six-dimension
//!   cultural benchmark corpus: loading, validation, ground truth, splits.
//! - [`gateway`] — backend-agnostic chat client with bounded parallelism,
//!   retries, response caching, record/replay, and a scripted test backend.
//! - [`prompting`] — byte-deterministic rendering of every prompt in the
//!   pipeline from versioned templates.
//! - [`extract`] — think-block splitting and option-answer extraction from
//!   raw completions.
//! - [`miner`] — the three norm-mining strategies, numbered-list parsing,
//!   low-to-high aggregation, and the norm store.
//! - [`evaluator`] — alignment scoring, dimension-benchmark scoring,
//!   trial aggregation, and paired significance tests.
//! - [`distiller`] — rejection-sampled reasoning synthesis, SFT export,
//!   preference-pair collection, and training manifests.
//! - [`pipeline`] — run configuration, run directories, and manifests
//!   binding the stages into reproducible runs.

pub mod corpus;
pub mod distiller;
pub mod error;
pub mod evaluator;
pub mod extract;
pub mod gateway;
pub mod miner;
pub mod pipeline;
pub mod prompting;
pub mod synth;

pub use error::{Error, ErrorCategory};
