use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("not symmetric: |C[{row},{col}] - C[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("zero variance")]
    ZeroVariance,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero-variance channel {0}")]
    ZeroVarianceChannel(usize),

    #[error("invalid std at index {index}: {value}")]
    InvalidStd { index: usize, value: f64 },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("input width error: model expects {expected} channels, got {got}")]
    InputWidth { expected: usize, got: usize },

    #[error("no cache: backprop requires a train-mode forward pass")]
    NoCache,

    #[error("no data: {0}")]
    NoData(String),

    #[error("singular covariance (zero-variance or duplicate channel): eigenvalue ratio {ratio:e}")]
    SingularCovariance { ratio: f64 },

    #[error("estimated EOG row {0} is constant; correlation undefined")]
    ConstantEstimate(usize),

    #[error("bad band edges: lo={lo} hi={hi} fs={fs}")]
    BadBand { lo: f64, hi: f64, fs: f64 },

    #[error("rank-deficient regressors")]
    RankDeficient,

    #[error("segment length {max_len} exceeds recording length {len}")]
    SegmentTooLong { max_len: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::ZeroVariance => "zero_variance",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::ZeroVarianceChannel(_) => "zero_variance_channel",
            Error::InvalidStd { .. } => "invalid_std",
            Error::Dimension(_) => "dimension",
            Error::InputWidth { .. } => "input_width",
            Error::NoCache => "no_cache",
            Error::NoData(_) => "no_data",
            Error::SingularCovariance { .. } => "singular_covariance",
            Error::ConstantEstimate(_) => "constant_estimate",
            Error::BadBand { .. } => "bad_band",
            Error::RankDeficient => "rank_deficient",
            Error::SegmentTooLong { .. } => "segment_too_long",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Parse { .. } => "parse",
            Error::ModelFormat(_) => "model_format",
            Error::Io(_) => "io",
        }
    }
}
