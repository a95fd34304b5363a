use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vector has a component of relative size {excess:.3e} over the kernel of the covariance")]
    OffRange { excess: f64 },
    #[error("multi-index charges direction {index}, which lies in the kernel of the covariance")]
    OffSupport { index: usize },
    #[error("range of the first operator is not contained in the range of the second")]
    Incomparable,
    #[error("degree {degree} exceeds the supported maximum {max}")]
    DegreeTooLarge { degree: usize, max: usize },
    #[error("matrix of size {size} exceeds the supported maximum {max}")]
    SizeTooLarge { size: usize, max: usize },
    #[error("operator norm {norm} exceeds 1")]
    NotContraction { norm: f64 },
    #[error("operator norm {norm} is not strictly below 1")]
    NotStrictContraction { norm: f64 },
    #[error("matrix is not symmetric (asymmetry {asym:.3e})")]
    NotSelfAdjoint { asym: f64 },
    #[error("no continuous extension at this truncation: entry {entry:.3e} exceeds 1e12")]
    Unbounded { entry: f64 },
    #[error("integration scheme too coarse: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    SchemeTooCoarse { residual: f64, tol: f64 },
    #[error("time quadrature did not converge on [{s}, {t}]")]
    QuadratureFailure { s: f64, t: f64 },
    #[error("decay rate {rate} is not negative")]
    NoDecay { rate: f64 },
    #[error("hypothesis failed at (s, t) = ({s}, {t}): {reason}")]
    HypothesisFailed { s: f64, t: f64, reason: String },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Variant name, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OffRange { .. } => "OffRange",
            Error::OffSupport { .. } => "OffSupport",
            Error::Incomparable => "Incomparable",
            Error::DegreeTooLarge { .. } => "DegreeTooLarge",
            Error::SizeTooLarge { .. } => "SizeTooLarge",
            Error::NotContraction { .. } => "NotContraction",
            Error::NotStrictContraction { .. } => "NotStrictContraction",
            Error::NotSelfAdjoint { .. } => "NotSelfAdjoint",
            Error::Unbounded { .. } => "Unbounded",
            Error::SchemeTooCoarse { .. } => "SchemeTooCoarse",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::NoDecay { .. } => "NoDecay",
            Error::HypothesisFailed { .. } => "HypothesisFailed",
            Error::PreconditionViolated(_) => "PreconditionViolated",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}
