use thiserror::Error;

/// Errors surfaced by the deconvolution toolkit.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Patch merging found a voxel no patch covers.
    #[error("coverage gap: voxel ({0}, {1}, {2}) is not covered by any patch")]
    CoverageGap(usize, usize, usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
