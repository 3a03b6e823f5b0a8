use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// No sequence consistent with the observed tokens has positive mass.
    #[error("unsupported context: no positive-mass completion (masked positions {masked:?}, observed {observed:?})")]
    UnsupportedContext {
        masked: Vec<usize>,
        /// `(position, token)` pairs of the unmasked positions.
        observed: Vec<(usize, usize)>,
    },

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("training diverged at step {step}")]
    Divergence { step: usize },

    #[error("degenerate decode step {step} (position {position}): every guided weight is below the floor")]
    DegenerateStep { step: usize, position: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
