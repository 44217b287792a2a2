use std::fmt;

use thiserror::Error;

use crate::game::ValueVector;
use crate::trace::ConvergenceTrace;

/// A single broken model invariant found while validating a game description.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonstochasticRow { state: usize, max_action: usize, min_action: usize, sum: f64 },
    NegativeProbability { state: usize, max_action: usize, min_action: usize, successor: usize, probability: f64 },
    RewardOutOfRange { state: usize, max_action: usize, min_action: usize, reward: f64 },
    DiscountOutOfRange { discount: f64 },
    DanglingSuccessor { state: usize, max_action: usize, min_action: usize, successor: usize },
    ActionOutOfRange { state: usize, max_action: usize, min_action: usize },
    StateOutOfRange { state: usize },
    MissingReward { state: usize, max_action: usize, min_action: usize },
    MissingTransition { state: usize, max_action: usize, min_action: usize },
    DuplicateReward { state: usize, max_action: usize, min_action: usize },
    DuplicateTransition { state: usize, max_action: usize, min_action: usize, successor: usize },
    EmptyActionSet { state: usize },
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    NoStates,
    NonFinite { what: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NonstochasticRow { state, max_action, min_action, sum } => write!(
                f,
                "NonstochasticRow: transition row ({state},{max_action},{min_action}) sums to {sum:.17}"
            ),
            NegativeProbability { state, max_action, min_action, successor, probability } => write!(
                f,
                "NegativeProbability: P({successor}|{state},{max_action},{min_action}) = {probability}"
            ),
            RewardOutOfRange { state, max_action, min_action, reward } => write!(
                f,
                "RewardOutOfRange: g({state},{max_action},{min_action}) = {reward} is outside [0,1]"
            ),
            DiscountOutOfRange { discount } => {
                write!(f, "DiscountOutOfRange: discount {discount} is outside (0,1)")
            }
            DanglingSuccessor { state, max_action, min_action, successor } => write!(
                f,
                "DanglingSuccessor: ({state},{max_action},{min_action}) points at state {successor}"
            ),
            ActionOutOfRange { state, max_action, min_action } => write!(
                f,
                "ActionOutOfRange: ({state},{max_action},{min_action}) is not a legal action pair"
            ),
            StateOutOfRange { state } => write!(f, "StateOutOfRange: state {state}"),
            MissingReward { state, max_action, min_action } => {
                write!(f, "MissingReward: no reward for ({state},{max_action},{min_action})")
            }
            MissingTransition { state, max_action, min_action } => write!(
                f,
                "MissingTransition: no transition row for ({state},{max_action},{min_action})"
            ),
            DuplicateReward { state, max_action, min_action } => {
                write!(f, "DuplicateReward: ({state},{max_action},{min_action}) listed twice")
            }
            DuplicateTransition { state, max_action, min_action, successor } => write!(
                f,
                "DuplicateTransition: ({state},{max_action},{min_action}) -> {successor} listed twice"
            ),
            EmptyActionSet { state } => write!(f, "EmptyActionSet: state {state} has no actions"),
            ShapeMismatch { what, expected, found } => {
                write!(f, "ShapeMismatch: {what} has length {found}, expected {expected}")
            }
            NoStates => write!(f, "NoStates: a game needs at least one state"),
            NonFinite { what } => write!(f, "NonFinite: {what} contains a non-finite number"),
        }
    }
}

/// Every violation found in one validation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.0.len())?;
        for v in &self.0 {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

/// State of a planner when it ran out of iterations.
#[derive(Debug, Clone)]
pub struct Unconverged {
    pub last: ValueVector,
    pub trace: ConvergenceTrace,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(Violations),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },

    #[error("invalid policy at state {state}: {reason}")]
    InvalidPolicy { state: usize, reason: String },

    #[error("policy evaluation system is singular")]
    SingularSystem,

    #[error("simplex did not terminate within {cap} pivots")]
    NumericalFailure { cap: usize },

    #[error("no convergence within {iters} iterations (last residual {residual:e})")]
    MaxItersExceeded { iters: usize, residual: f64, state: Box<Unconverged> },

    #[error("lookahead condition violated: left-hand side {lhs} >= 1")]
    AssumptionViolated { lhs: f64 },

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("features restricted to the anchor set are rank deficient (rank {rank} < {needed})")]
    RankDeficient { rank: usize, needed: usize },

    #[error("invalid linear model: {0}")]
    InvalidLinearModel(String),

    #[error("invalid feature scheme: {0}")]
    InvalidFeatures(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
