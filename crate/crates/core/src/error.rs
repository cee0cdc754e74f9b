use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("manifest {0} has no data rows")]
    EmptyManifest(PathBuf),

    #[error("manifest row {row}: image file {path} does not exist")]
    MissingFile { row: usize, path: PathBuf },

    #[error("manifest row {row}: cannot decode {path}: {message}")]
    Decode {
        row: usize,
        path: PathBuf,
        message: String,
    },

    #[error("manifest row {row}: image shape {found:?} differs from first image shape {expected:?}")]
    ShapeMismatch {
        row: usize,
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },

    #[error("manifest row {row}: regression target {value:?} is not a list of numbers")]
    NonNumericTarget { row: usize, value: String },

    #[error("manifest row {row}: target has {found} values, expected {expected}")]
    TargetArity {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("split fractions {0:?} must be nonnegative and sum to 1")]
    InvalidFractions((f64, f64, f64)),

    #[error("expected {expected} channels, got {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("representation {representation} is not defined for {channels}-channel data (YCbCr and PREC need color images)")]
    UnsupportedPairing {
        representation: String,
        channels: usize,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("block size must be at least 1")]
    InvalidBlock,

    #[error("block size {found} does not match the stored block size {expected}")]
    BlockMismatch { expected: usize, found: usize },

    #[error("image {height}x{width} is smaller than tile size {tile}")]
    ImageSmallerThanTile {
        height: usize,
        width: usize,
        tile: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular system: X^T X + lambda I is not positive definite")]
    Singular,

    #[error("{what}: need at least {needed}, got {found}")]
    TooFew {
        what: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
