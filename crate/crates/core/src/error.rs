use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Variants carry enough context to tell a numerical failure (blowup,
/// degenerate constants) apart from a misuse of the API (wrong dimension,
/// bad configuration).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("state has dimension {got}, spectrum expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state contains a non-finite coefficient at index {0}")]
    NonFiniteState(usize),

    #[error("semigroup overflow")]
    SemigroupOverflow,

    #[error("outside validity ball: |u|_D = {norm} >= R = {radius}")]
    OutsideValidityBall { norm: f64, radius: f64 },

    #[error("requires spectral gap above lambda (lambda = {lambda}, beta = {beta})")]
    NoGapAboveLambda { lambda: f64, beta: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("zero-length time span")]
    EmptyTimeSpan,

    #[error("forcing grid ends at {grid_end} before t_end = {t_end}")]
    ForcingTooShort { grid_end: f64, t_end: f64 },

    #[error("quotient undefined at zero")]
    QuotientAtZero,

    #[error("need at least 3 samples with nonzero state, found {0}")]
    TooFewSamples(usize),

    #[error("trajectory has no stored states")]
    StatesNotStored,

    #[error("trajectory did not decay; classification out of scope (ratio {ratio:.3e})")]
    NotDecayed { ratio: f64 },

    #[error("profile vanishes; rate misidentified")]
    ProfileVanishes,

    #[error("sign condition <u, f(u)> <= 0 is not asserted for this problem")]
    SignConditionMissing,

    #[error("operator has trivial kernel; slow solutions cannot exist")]
    TrivialKernel,

    #[error("constants degenerate for these bounds")]
    DegenerateConstants,

    #[error("smallness unattainable with sampled L")]
    SmallnessUnattainable,

    #[error("left validity ball at t = {t}")]
    LeftValidityBall { t: f64 },

    #[error("no contraction; check smallness slack")]
    NoContraction,

    #[error("fixed-point iteration did not converge in {0} iterations")]
    NotConverged(usize),

    #[error("lambda = {0} is not an eigenvalue of the spectrum")]
    NotAnEigenvalue(f64),

    #[error("v0 must be supported on the lambda eigenspace")]
    ProfileNotEigenvector,

    #[error("w0 must be supported on H+")]
    UpperComponentNotInHPlus,

    #[error("data violates |v0|_D + |w0|_D <= r0 ({sum} > {r0})")]
    DataTooLarge { sum: f64, r0: f64 },

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
