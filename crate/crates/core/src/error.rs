//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("simulation instability at node ({row}, {col}): non-finite state")]
    Instability { row: usize, col: usize },

    #[error("stretch protocol failed: {0}")]
    Protocol(String),

    #[error("training failed at epoch {epoch}, batch {batch}, material {material_id}: {reason}")]
    Training {
        epoch: usize,
        batch: usize,
        material_id: u32,
        reason: String,
    },

    #[error("non-finite gradient in parameter {0}; update skipped")]
    NonFiniteGradient(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
