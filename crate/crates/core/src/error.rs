use thiserror::Error;

pub type Result<T> = std::result::Result<T, RdpgError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdpgError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("probability {value} at ({row}, {col}) lies outside [0, 1]")]
    ProbabilityOutOfRange { row: usize, col: usize, value: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("max row sum is zero, gamma is undefined")]
    DivisionByZeroDelta,

    #[error("eigensolver failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("vertex {0} has degree zero")]
    IsolatedVertex(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    #[error("second moment matrix is singular")]
    SingularDelta,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("row {0} has zero norm")]
    ZeroRow(usize),

    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),

    #[error("need at least 2 points per sample, got {0}")]
    TooFewPoints(usize),

    #[error("p-value {0} outside (0, 1]")]
    OutOfRangeP(f64),

    #[error("k-means could not repair an empty cluster")]
    EmptyClusterUnrecoverable,

    #[error("degenerate mixture component: {0}")]
    DegenerateComponent(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl RdpgError {
    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            RdpgError::InvalidModel(_) => "InvalidModel",
            RdpgError::DimensionMismatch(_) => "DimensionMismatch",
            RdpgError::ProbabilityOutOfRange { .. } => "ProbabilityOutOfRange",
            RdpgError::InvalidGraph(_) => "InvalidGraph",
            RdpgError::DivisionByZeroDelta => "DivisionByZeroDelta",
            RdpgError::ConvergenceFailure(_) => "ConvergenceFailure",
            RdpgError::IsolatedVertex(_) => "IsolatedVertex",
            RdpgError::EmptyInput => "EmptyInput",
            RdpgError::DegenerateDenominator(_) => "DegenerateDenominator",
            RdpgError::SingularDelta => "SingularDelta",
            RdpgError::NotPositiveDefinite(_) => "NotPositiveDefinite",
            RdpgError::ZeroRow(_) => "ZeroRow",
            RdpgError::NonPositiveGamma(_) => "NonPositiveGamma",
            RdpgError::TooFewPoints(_) => "TooFewPoints",
            RdpgError::OutOfRangeP(_) => "OutOfRangeP",
            RdpgError::EmptyClusterUnrecoverable => "EmptyClusterUnrecoverable",
            RdpgError::DegenerateComponent(_) => "DegenerateComponent",
            RdpgError::InvalidArgument(_) => "InvalidArgument",
            RdpgError::Parse(_) => "Parse",
            RdpgError::Io(_) => "Io",
        }
    }

    /// True for failures of the numerical routines rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            RdpgError::ConvergenceFailure(_)
                | RdpgError::SingularDelta
                | RdpgError::NotPositiveDefinite(_)
                | RdpgError::DegenerateDenominator(_)
                | RdpgError::DivisionByZeroDelta
                | RdpgError::EmptyClusterUnrecoverable
                | RdpgError::DegenerateComponent(_)
        )
    }
}

impl From<std::io::Error> for RdpgError {
    fn from(e: std::io::Error) -> Self {
        RdpgError::Io(e.to_string())
    }
}
