use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("degenerate statistics in {op}: {detail}")]
    DegenerateStatistics { op: &'static str, detail: String },

    #[error("missing pair for {stem:?} in {dir}")]
    Pairing { stem: String, dir: PathBuf },

    #[error("unknown palette color {color:?} at pixel ({x}, {y}) of {path}")]
    UnknownColor {
        path: PathBuf,
        x: u32,
        y: u32,
        color: [u8; 3],
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at epoch {epoch}, step {step} (lr {lr:.6e})")]
    Diverged { epoch: usize, step: usize, lr: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension {
        op,
        detail: detail.into(),
    }
}
