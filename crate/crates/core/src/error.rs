use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no frames in source")]
    NoFrames,

    #[error("frame {id} ({path}): {reason}")]
    FrameIngest {
        id: u64,
        path: PathBuf,
        reason: String,
    },

    #[error("tensor format error at byte {offset}: {reason}")]
    TensorFormat { offset: u64, reason: String },

    #[error("ground truth: {0}")]
    GroundTruth(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("template database is empty")]
    EmptyDatabase,

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("quality window swallows the column: {templates} templates, half-width {half_width}")]
    WindowTooWide { templates: usize, half_width: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("channel {channel}: {reason}")]
    Channel { channel: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
