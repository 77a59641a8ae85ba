//! Crate-wide error type and failure categories.
//!
//! Each module defines its own error enum; this module folds them into one
//! [`Error`] and assigns each variant a coarse [`ErrorCategory`] so callers
//! (notably the CLI) can map failures to distinct exit codes.

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::distiller::DistillError;
use crate::evaluator::EvalError;
use crate::gateway::GatewayError;
use crate::miner::MinerError;
use crate::pipeline::ConfigError;
use crate::prompting::PromptError;

/// Coarse failure class, one per CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad or missing configuration (flags, env, preconditions checked before work).
    Config,
    /// Input data violated a schema or invariant.
    Validation,
    /// Transport-level failure talking to a backend.
    Transport,
    /// Model output could not be parsed into the expected shape.
    Parse,
    /// Anything else (I/O, internal).
    Other,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Corpus(_) => ErrorCategory::Validation,
            Error::Gateway(e) => e.category(),
            Error::Prompt(_) => ErrorCategory::Config,
            Error::Miner(e) => e.category(),
            Error::Eval(e) => e.category(),
            Error::Distill(e) => e.category(),
            Error::Config(_) => ErrorCategory::Config,
            Error::Io(_) => ErrorCategory::Other,
        }
    }
}
