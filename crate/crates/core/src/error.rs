use thiserror::Error;

use crate::rational::Rational;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} coordinates, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("answer {value} to question {question} is outside 0..={max}")]
    OutOfRange { question: usize, value: i64, max: u32 },

    #[error("invalid answer space: {0}")]
    InvalidSpace(String),

    #[error("coordinate {question} of {coords:?} is not a corner value")]
    NotACorner { question: usize, coords: Vec<u32> },

    #[error("malformed document: {0}")]
    Schema(String),

    #[error("round {round}: {message}")]
    Invariant { round: usize, message: String },

    #[error("efficiency level {0} is outside [0, 1]")]
    EfficiencyOutOfRange(Rational),

    #[error("tolerance must be positive")]
    NonPositiveTolerance,

    #[error("data violate GARP ({count} ordered-pair violations); no Afriat solution exists")]
    GarpViolated { count: usize },

    #[error("non-positive expenditure gap between rounds {lower} and {higher}")]
    NonPositiveGap { lower: usize, higher: usize },

    #[error("Afriat inequality fails for pair ({k}, {l})")]
    AfriatInequality { k: usize, l: usize },

    #[error("round {round}: no grid answer on the budget frontier")]
    EmptyFrontier { round: usize },

    #[error("trial count must be at least 1")]
    NoTrials,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("operation supports exactly two questions, found {0}")]
    UnsupportedDimension(usize),

    #[error("too few usable observations: {found} (need at least {required})")]
    TooFewObservations { found: usize, required: usize },

    #[error("every answer is a corner of the grid; preferences are not estimable")]
    DegenerateCorners,

    #[error("invalid session config: {0}")]
    InvalidConfig(String),

    #[error("round {round} is over budget by {shortfall} tokens")]
    OverBudget { round: usize, shortfall: Rational },

    #[error("expected an answer to round {expected}, got round {found}")]
    WrongRound { expected: usize, found: usize },

    #[error("session is complete")]
    SessionComplete,

    #[error("session is not complete")]
    SessionIncomplete,
}
