use thiserror::Error;

/// Errors raised while designing, applying or serializing a filter bank.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a scale or bandwidth function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested filter bank configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input shapes do not match the filter bank.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numerical routine could not produce a result.
    #[error("computation error: {0}")]
    Computation(String),

    /// The filter bank is not a frame at the given length and decimation.
    #[error("not a frame at L={len}, d={decimation}: lower bound {lower:e}, upper bound {upper:e}")]
    NotAFrame {
        len: usize,
        decimation: usize,
        lower: f64,
        upper: f64,
    },

    /// Training diverged.
    #[error("divergence: {0}")]
    Divergence(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    /// True for failures that come from the numerics rather than from the
    /// user's configuration or files.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Computation(_) | Error::NotAFrame { .. } | Error::Divergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
