//! Error type shared by all modules.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building a model or computing with it.
///
/// The split mirrors how callers need to react: `Invalid` means the input
/// description is malformed or inconsistent and must be fixed by the user;
/// `Domain` means the model is structurally fine but the requested quantity
/// does not exist for it (e.g. an evaluation point past a transform pole, or
/// a net-loss model that has no decay rate); `Numerical` means an internal
/// solver failed its own tolerance and the result cannot be trusted.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent model description.
    #[error("invalid model: {0}")]
    Invalid(String),

    /// Structurally valid model, but the requested quantity is undefined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An internal numerical routine failed to meet its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Config file could not be read.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Config file is not valid JSON for the model schema.
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}
