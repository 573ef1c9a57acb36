use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MmsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MmsError {
    #[error("invalid unit composition: at least one block must be enabled")]
    InvalidComposition,

    #[error("invalid dialogue round {round_id}: {reason}")]
    InvalidRound { round_id: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Transport-level failure after exhausting the retry budget.
    #[error("extraction failed after {attempts} attempt(s): {message}")]
    Extraction { attempts: u32, message: String },

    /// The model replied, but nothing usable could be parsed from the reply.
    #[error("could not parse extractor output: {reason}")]
    ExtractionParse { reason: String, raw: String },

    #[error("embedding failed after {attempts} attempt(s): {message}")]
    Embedding { attempts: u32, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("record {record_id} already exists with different content")]
    Conflict { record_id: String },

    #[error("unknown record id {0}")]
    MissingRecord(String),

    #[error("answer generation failed after {attempts} attempt(s): {message}")]
    Generation { attempts: u32, message: String },

    #[error("model returned an empty answer")]
    EmptyAnswer,

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("unsupported store version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },

    #[error("no samples to average")]
    NoSamples,

    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MmsError {
    pub(crate) fn load(path: impl Into<PathBuf>, reason: impl std::fmt::Display) -> Self {
        MmsError::Load {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
