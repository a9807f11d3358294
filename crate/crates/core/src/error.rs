use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("design matrix is rank deficient (numerical rank {rank} < {required})")]
    RankDeficient { rank: usize, required: usize },

    #[error("sample too small: n = {n}, need at least {required}")]
    SampleTooSmall { n: usize, required: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("covariate region is empty")]
    EmptyRegion,

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("constant side {side} cannot build a {kind} set")]
    KindMismatch { side: String, kind: String },

    #[error("level sets do not describe the same problem: {0}")]
    MismatchedProblems(String),

    #[error("geometry extraction unsupported: {0}")]
    GeometryUnsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Stable diagnostic code printed by the CLI and returned over FFI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "E_DIMENSION",
            Error::RankDeficient { .. } => "E_RANK_DEFICIENT",
            Error::SampleTooSmall { .. } => "E_SAMPLE_TOO_SMALL",
            Error::NonFinite(_) => "E_NON_FINITE",
            Error::InvalidRegion(_) => "E_INVALID_REGION",
            Error::EmptyRegion => "E_EMPTY_REGION",
            Error::NotPositiveDefinite => "E_NOT_POSITIVE_DEFINITE",
            Error::KindMismatch { .. } => "E_KIND_MISMATCH",
            Error::MismatchedProblems(_) => "E_MISMATCHED_PROBLEMS",
            Error::GeometryUnsupported(_) => "E_GEOMETRY_UNSUPPORTED",
            Error::InvalidArgument(_) => "E_INVALID_ARGUMENT",
            Error::Io(_) => "E_IO",
            Error::Csv(_) => "E_CSV",
            Error::Json(_) => "E_JSON",
            Error::Config(_) => "E_CONFIG",
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NotPositiveDefinite
                | Error::GeometryUnsupported(_)
        )
    }
}
