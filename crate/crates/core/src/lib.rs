//! Policy iteration with lookahead for two-player zero-sum discounted Markov games.
//!
//! The crate covers exact planning ([`planners`]), approximate planning with
//! state features ([`linear_fa`]), linear games solved through a small set of
//! anchor tuples ([`linear_game`]), simulation-based policy iteration
//! ([`stochastic_pi`]) and model-based learning from a generative sampler
//! ([`model_rl`]).

pub mod bellman;
pub mod divergence;
pub mod error;
pub mod game;
pub mod generate;
pub mod linear_fa;
pub mod linear_game;
pub mod matrix_game;
pub mod model_rl;
pub mod planners;
pub mod stochastic_pi;
pub mod trace;

pub use bellman::Rollout;
pub use error::{Error, Result};
pub use game::{GameFile, GameModel, StochasticPolicyPair, ValueVector};
pub use matrix_game::{solve_matrix_game, MatrixGame, MatrixGameSolution};
pub use planners::PlannerConfig;
pub use trace::ConvergenceTrace;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
