use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("tolerance {0:e} outside [1e-14, 1e-4]")]
    ToleranceOutOfRange(f64),

    #[error("step size underflow at x = {x}")]
    StepUnderflow { x: f64 },

    #[error("mu = {mu} is outside the numeric range (growth exponent {exponent:.1} > 300)")]
    OutOfRange { mu: String, exponent: f64 },

    #[error("eigenvalue iteration did not converge at mu = {0}")]
    EigenFailure(String),

    #[error("ambiguous asymptotic labeling at mu = {0}")]
    AmbiguousLabels(f64),

    #[error("mu = {0} is not in the asymptotic labeling regime")]
    NotAsymptotic(f64),

    #[error("branch matching unresolved near mu = {0}")]
    UnresolvedMatching(f64),

    #[error("edge refinement failed in [{lo}, {hi}]")]
    EdgeRefinement { lo: f64, hi: f64 },

    #[error("Newton iteration failed: {0}")]
    NewtonFailure(String),

    #[error("degenerate Floquet vector at mu = {0} (all cofactors vanish)")]
    DegenerateVector(String),

    #[error("singular weight at mu = {mu}: {what} = {value:e}")]
    SingularWeight { mu: f64, what: &'static str, value: f64 },

    #[error("value exceeds floating range: {0}")]
    Overflow(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("argument principle count {counted} disagrees with {found} roots found in [{lo}, {hi}]")]
    MissedRoots { counted: i64, found: usize, lo: f64, hi: f64 },

    #[error("csv schema mismatch: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
