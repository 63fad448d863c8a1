use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("could not place {requested} surfaces with {min_separation} m separation after {attempts} attempts")]
    Placement {
        requested: usize,
        min_separation: f64,
        attempts: usize,
    },

    #[error("singular geometry: no horizontal separation between {from:?} and {to:?}")]
    SingularGeometry { from: [f64; 3], to: [f64; 3] },

    #[error("distance {0} m is below the 1 m path-loss reference")]
    BelowReferenceDistance(f64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value during {context}: {detail}")]
    NonFinite { context: String, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
