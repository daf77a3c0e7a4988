use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::ClassLabel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("class {class} has {available} samples, {required} required")]
    InsufficientSamples {
        class: ClassLabel,
        available: usize,
        required: usize,
    },

    #[error("cannot stratify into {k} folds: class {class} has only {available} samples")]
    Stratification {
        class: ClassLabel,
        available: usize,
        k: usize,
    },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("within-class scatter is singular; use a positive regularization ({0})")]
    Singular(String),

    #[error("between-class scatter undefined: at least two classes are required")]
    UndefinedBetweenScatter,

    #[error("pseudo-null space is empty (variance fraction {fraction} leaves no complement)")]
    EmptyNullSpace { fraction: f64 },

    #[error("cannot pair fold scores: {0}")]
    Pairing(String),

    #[error("at least 2 folds are required, got {0}")]
    InsufficientFolds(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
