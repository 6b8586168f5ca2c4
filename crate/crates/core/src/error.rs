use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("symmetrized k-NN graph is not connected ({components} components)")]
    DisconnectedGraph { components: usize },

    #[error("duplicate coordinates at vertices {0} and {1}")]
    DegeneratePoints(usize, usize),

    #[error("kernel scale must be positive, got {0}")]
    NonpositiveEpsilon(f64),

    #[error("unsupported ambient dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("symmetric eigensolver did not converge after {0} iterations")]
    EigensolverNoConvergence(usize),

    #[error("vertex {0} has zero degree")]
    ZeroDegree(usize),

    #[error("local frame at node {node} is rank deficient (sigma_min / sigma_max = {ratio:e})")]
    RankDeficientFrame { node: usize, ratio: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator of size {0} is too large to materialize densely")]
    TooLargeToMaterialize(usize),

    #[error("signal decay curve is flat")]
    FlatDecay,

    #[error("every signal has a flat decay curve")]
    AllSignalsFlat,

    #[error("moment exponent must be positive, got {0}")]
    NonpositiveQ(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} verification checks failed")]
    VerificationFailed(usize),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DisconnectedGraph { .. } => "DisconnectedGraph",
            Error::DegeneratePoints(..) => "DegeneratePoints",
            Error::NonpositiveEpsilon(_) => "NonpositiveEpsilon",
            Error::UnsupportedDimension(_) => "UnsupportedDimension",
            Error::EigensolverNoConvergence(_) => "EigensolverNoConvergence",
            Error::ZeroDegree(_) => "ZeroDegree",
            Error::RankDeficientFrame { .. } => "RankDeficientFrame",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::TooLargeToMaterialize(_) => "TooLargeToMaterialize",
            Error::FlatDecay => "FlatDecay",
            Error::AllSignalsFlat => "AllSignalsFlat",
            Error::NonpositiveQ(_) => "NonpositiveQ",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::VerificationFailed(_) => "VerificationFailed",
            Error::Format(_) => "Format",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
