use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HoodError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HoodError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("target range {range:.3} m outside unambiguous span (0, {max:.3}) m")]
    RangeOutOfSpan { range: f64, max: f64 },

    #[error("frame index {index} outside scene of {frames} frames")]
    FrameOutOfRange { index: usize, frames: usize },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("category `{0}` has no samples")]
    EmptyCategory(&'static str),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("{}: bad magic bytes", path.display())]
    BadMagic { path: PathBuf },

    #[error("{}: unsupported version {found} (expected {expected})", path.display())]
    VersionMismatch { path: PathBuf, found: u16, expected: u16 },

    #[error("{}: truncated ({detail})", path.display())]
    Truncated { path: PathBuf, detail: String },

    #[error("{}: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})", path.display())]
    Checksum { path: PathBuf, stored: u32, computed: u32 },

    #[error("{}: schema error: {detail}", path.display())]
    Schema { path: PathBuf, detail: String },

    #[error("checkpoint has no optimizer state; it can be used for inference but not to resume training")]
    MissingOptimizerState,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
