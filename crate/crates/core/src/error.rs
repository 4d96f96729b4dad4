use std::io;

use thiserror::Error;

/// Error kinds raised across the engine.
///
/// The variants follow the failure classes of the public operations so that
/// front ends can map them onto exit codes without string matching.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index error: {0}")]
    Index(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("codebook error: {0}")]
    Codebook(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("plan error: {0}")]
    Plan(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("training error at epoch {epoch}: loss became {loss} ({detail})")]
    Training { epoch: usize, loss: f64, detail: String },
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
