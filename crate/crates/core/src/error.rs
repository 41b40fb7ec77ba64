use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite input value at index {index}")]
    NonFiniteInput { index: usize },
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown basis atom '{0}'")]
    UnknownAtom(String),
    #[error("basis family must contain at least one atom")]
    EmptyBasis,
    #[error("coefficient evaluation failed at particle {particle}, step {step}: {what}")]
    CoefficientEvaluation {
        particle: usize,
        step: usize,
        what: String,
    },
    #[error("state became non-finite at particle {particle}, step {step}")]
    NumericalBlowup { particle: usize, step: usize },
    #[error("subsampling factor {factor} does not divide n = {steps}")]
    BadFactor { factor: usize, steps: usize },
    #[error("Lambda is numerically singular (reciprocal condition {rcond:e})")]
    SingularLambda { rcond: f64 },
    #[error("quarticity estimate is zero (constant paths)")]
    DegenerateData,
    #[error("at least two particles are required, got {0}")]
    InsufficientParticles(usize),
    #[error("estimated asymptotic variance is zero")]
    DegenerateVariance,
    #[error("brute-force coupling limited to size 8, got {0}")]
    TooLarge(usize),
    #[error("log-log slope undefined: {0}")]
    NaNSlope(String),
    #[error("at least 10 values are required, got {0}")]
    TooFewSamples(usize),
    #[error("{failed} of {total} replications failed")]
    ExperimentDegenerate { failed: usize, total: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config: {0}")]
    Config(String),
    #[error("malformed data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Variant name, used as the stable tag in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptySample => "EmptySample",
            Error::NonFiniteInput { .. } => "NonFiniteInput",
            Error::SizeMismatch { .. } => "SizeMismatch",
            Error::UnknownModel(_) => "UnknownModel",
            Error::InvalidParams(_) => "InvalidParams",
            Error::UnknownAtom(_) => "UnknownAtom",
            Error::EmptyBasis => "EmptyBasis",
            Error::CoefficientEvaluation { .. } => "CoefficientEvaluation",
            Error::NumericalBlowup { .. } => "NumericalBlowup",
            Error::BadFactor { .. } => "BadFactor",
            Error::SingularLambda { .. } => "SingularLambda",
            Error::DegenerateData => "DegenerateData",
            Error::InsufficientParticles(_) => "InsufficientParticles",
            Error::DegenerateVariance => "DegenerateVariance",
            Error::TooLarge(_) => "TooLarge",
            Error::NaNSlope(_) => "NaNSlope",
            Error::TooFewSamples(_) => "TooFewSamples",
            Error::ExperimentDegenerate { .. } => "ExperimentDegenerate",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Config(_) => "Config",
            Error::Data(_) => "Data",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// True for failures caused by the numbers rather than by the inputs'
    /// shape: degenerate data, singular systems, blow-ups.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CoefficientEvaluation { .. }
                | Error::NumericalBlowup { .. }
                | Error::SingularLambda { .. }
                | Error::DegenerateData
                | Error::DegenerateVariance
                | Error::NaNSlope(_)
                | Error::ExperimentDegenerate { .. }
        )
    }

    /// CLI exit code: 2 for data/config problems, 3 for numerical degeneracy.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}
