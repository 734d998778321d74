//! Error types shared across the crate.

use std::path::PathBuf;

/// Everything that can go wrong inside the library.
///
/// Checkpoint decoding failures are split into distinct variants so callers
/// (and tests) can tell a truncated file from a corrupted one.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An input carried NaN or infinite entries.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An intermediate that must be mathematically real carried imaginary
    /// residue above tolerance. This signals a kernel bug, not bad user data.
    #[error("numerical corruption: {0}")]
    NumericalCorruption(String),

    /// A configuration failed validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// A tape was replayed after the chain's parameters changed.
    #[error("stale tape: {0}")]
    StaleTape(String),

    /// The optimizer saw non-finite gradients or loss.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Checkpoint magic bytes did not match.
    #[error("bad checkpoint magic (not a factor-chain checkpoint)")]
    BadMagic,

    /// Checkpoint format version is newer than this build understands.
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),

    /// Checkpoint payload length disagrees with the header's configuration.
    #[error("checkpoint payload length mismatch: expected {expected} parameters, found {found}")]
    PayloadLength { expected: u64, found: u64 },

    /// A stored parameter decoded to NaN or infinity.
    #[error("non-finite parameter in checkpoint at index {0}")]
    NonFiniteParameter(usize),

    /// Filesystem failure, annotated with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
