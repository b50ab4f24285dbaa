use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(&'static str),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(&'static str),

    #[error("need at least 2 spectrum rows, got {0}")]
    TooFewRows(usize),

    #[error("frequencies must be strictly increasing (row {row})")]
    NonMonotoneFrequencies { row: usize },

    #[error("non-finite value in row {row}")]
    NonFiniteValue { row: usize },

    #[error("invalid pulse: {0}")]
    InvalidPulse(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),

    /// The spectrum carries too little energy for its centroid to be meaningful.
    #[error("energy ratio {ratio:e} is below the floor (loss {loss_db} dB)")]
    EnergyBelowFloor { ratio: f64, loss_db: f64 },

    #[error("closed-form denominator 1 + γ·cosθ = {value:e} is below the floor")]
    DenominatorBelowFloor { value: f64 },

    #[error("loss budget {budget_db} dB is below the minimum achievable loss {minimum_db} dB")]
    InfeasibleBudget { budget_db: f64, minimum_db: f64 },

    #[error("all {samples} Monte-Carlo samples were singular")]
    AllSamplesSingular { samples: usize },

    #[error("delay bracket [{lo}, {hi}] fs is degenerate")]
    DegenerateBracket { lo: f64, hi: f64 },

    #[error("invalid fit problem: {0}")]
    InvalidFitProblem(&'static str),

    #[error("outside the linear small-shift regime (relative correction {correction})")]
    NonlinearRegime { correction: f64 },
}
