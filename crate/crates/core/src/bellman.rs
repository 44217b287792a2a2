//! Operators on value vectors: `T_{μ,ν}`, `T_μ`, `T`, rollouts, H-step
//! lookahead and the composite `T_{m,H} = T^m_{μ,ν} T^{H−1}` used by
//! generalized policy iteration.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{exact_policy_value, expectation, GameModel, StochasticPolicyPair, ValueVector};
use crate::matrix_game::{best_response_value, solve_matrix_game, MatrixGame, MatrixGameSolution};

// Below this many states the per-state matrix games are solved inline.
const PARALLEL_MIN_STATES: usize = 64;

/// Rollout depth `m`: a finite number of policy backups or the exact fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rollout {
    Steps(usize),
    Infinite,
}

impl Rollout {
    /// `α^m`, with `α^∞ = 0`.
    pub fn discount_power(self, alpha: f64) -> f64 {
        match self {
            Rollout::Steps(m) => alpha.powi(m as i32),
            Rollout::Infinite => 0.0,
        }
    }
}

impl fmt::Display for Rollout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rollout::Steps(m) => write!(f, "{m}"),
            Rollout::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Rollout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" => Ok(Rollout::Infinite),
            other => other
                .parse::<usize>()
                .map(Rollout::Steps)
                .map_err(|_| format!("rollout depth must be a nonnegative integer or `inf`, got `{s}`")),
        }
    }
}

/// `T_{μ,ν}V = g_{μ,ν} + α P_{μ,ν} V`.
pub fn apply_policy_operator(game: &GameModel, pol: &StochasticPolicyPair, v: &ValueVector) -> Result<ValueVector> {
    game.check_values(v)?;
    pol.validate(game)?;
    Ok(policy_backup(game, pol, v))
}

pub(crate) fn policy_backup(game: &GameModel, pol: &StochasticPolicyPair, v: &ValueVector) -> ValueVector {
    DVector::from_fn(game.num_states(), |s, _| state_policy_backup(game, s, &pol.mu[s], &pol.nu[s], v))
}

/// `μ(s)ᵀ A_{V,s} ν(s)` without materializing the matrix.
pub(crate) fn state_policy_backup(game: &GameModel, s: usize, mu: &[f64], nu: &[f64], v: &ValueVector) -> f64 {
    let alpha = game.discount();
    let mut acc = 0.0;
    for (u, &pu) in mu.iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        for (w, &pw) in nu.iter().enumerate() {
            if pw == 0.0 {
                continue;
            }
            acc += pu * pw * (game.reward(s, u, w) + alpha * expectation(game.successors(s, u, w), v));
        }
    }
    acc
}

/// Solve the matrix game `A_{V,s}` at one state.
pub fn solve_state(game: &GameModel, s: usize, v: &ValueVector) -> Result<MatrixGameSolution> {
    let local = MatrixGame::new(game.backup_matrix(s, v))?;
    solve_matrix_game(&local)
}

/// Shapley operator `TV` together with the greedy (argmax-argmin) policy.
pub fn apply_bellman(game: &GameModel, v: &ValueVector) -> Result<(ValueVector, StochasticPolicyPair)> {
    game.check_values(v)?;
    let n = game.num_states();
    let solutions: Vec<MatrixGameSolution> = if n >= PARALLEL_MIN_STATES {
        (0..n).into_par_iter().map(|s| solve_state(game, s, v)).collect::<Result<_>>()?
    } else {
        (0..n).map(|s| solve_state(game, s, v)).collect::<Result<_>>()?
    };
    let tv = DVector::from_iterator(n, solutions.iter().map(|sol| sol.value));
    let mut mu = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(n);
    for sol in solutions {
        mu.push(sol.row_strategy);
        nu.push(sol.col_strategy);
    }
    Ok((tv, StochasticPolicyPair { mu, nu }))
}

/// `T_μ V = min_ν T_{μ,ν} V` for a fixed maximizer policy, with the
/// minimizer's pure best responses.
pub fn apply_min_operator(game: &GameModel, mu: &[Vec<f64>], v: &ValueVector) -> Result<(ValueVector, Vec<usize>)> {
    game.check_values(v)?;
    if mu.len() != game.num_states() {
        return Err(Error::DimensionMismatch { what: "maximizer policy", expected: game.num_states(), found: mu.len() });
    }
    let n = game.num_states();
    let mut out = DVector::zeros(n);
    let mut replies = Vec::with_capacity(n);
    for s in 0..n {
        crate::game::check_distribution(s, &mu[s], game.actions_max(s), "maximizer")?;
        let local = MatrixGame::new(game.backup_matrix(s, v))?;
        let (value, col) = best_response_value(&local, &mu[s])?;
        out[s] = value;
        replies.push(col);
    }
    Ok((out, replies))
}

/// `T^m_{μ,ν} V`; the infinite rollout is the exact policy value.
pub fn rollout(game: &GameModel, pol: &StochasticPolicyPair, v: &ValueVector, m: Rollout) -> Result<ValueVector> {
    game.check_values(v)?;
    pol.validate(game)?;
    Ok(match m {
        Rollout::Steps(steps) => {
            let mut cur = v.clone();
            for _ in 0..steps {
                cur = policy_backup(game, pol, &cur);
            }
            cur
        }
        Rollout::Infinite => exact_policy_value(game, pol)?,
    })
}

/// Outcome of an H-step lookahead from `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadResult {
    /// `T^{H−1} V`.
    pub backed_value: ValueVector,
    /// Greedy policy of `T^{H−1} V`, i.e. the H-step lookahead policy.
    pub policy: StochasticPolicyPair,
    /// `T^H V`.
    pub top_value: ValueVector,
    /// `‖TV − V‖∞`, available from the first backup.
    pub bellman_residual: f64,
}

pub fn lookahead(game: &GameModel, v: &ValueVector, horizon: usize) -> Result<LookaheadResult> {
    if horizon == 0 {
        return Err(Error::ParameterOutOfRange("lookahead depth H must be at least 1".into()));
    }
    game.check_values(v)?;
    let mut backed = v.clone();
    let mut residual = 0.0;
    for step in 1..=horizon {
        let (tv, policy) = apply_bellman(game, &backed)?;
        if step == 1 {
            residual = crate::game::sup_distance(&tv, v);
        }
        if step == horizon {
            return Ok(LookaheadResult { backed_value: backed, policy, top_value: tv, bellman_residual: residual });
        }
        backed = tv;
    }
    unreachable!("loop returns at step == horizon")
}

/// One application of `T_{m,H}` with the intermediate lookahead kept.
#[derive(Debug, Clone, PartialEq)]
pub struct TmhStep {
    pub value: ValueVector,
    pub lookahead: LookaheadResult,
}

pub fn tmh_step(game: &GameModel, v: &ValueVector, m: Rollout, horizon: usize) -> Result<TmhStep> {
    let look = lookahead(game, v, horizon)?;
    let value = match m {
        Rollout::Steps(steps) => {
            let mut cur = look.backed_value.clone();
            for _ in 0..steps {
                cur = policy_backup(game, &look.policy, &cur);
            }
            cur
        }
        Rollout::Infinite => exact_policy_value(game, &look.policy)?,
    };
    Ok(TmhStep { value, lookahead: look })
}

/// `T_{m,H} V = T^m_{μ,ν} T^{H−1} V` with `(μ,ν)` the lookahead policy of `V`.
pub fn composite_tmh(game: &GameModel, v: &ValueVector, m: Rollout, horizon: usize) -> Result<ValueVector> {
    Ok(tmh_step(game, v, m, horizon)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::sup_distance;

    fn self_loop() -> GameModel {
        GameModel::from_tables(0.9, vec![1], vec![1], vec![0.5], vec![vec![(0, 1.0)]]).unwrap()
    }

    // State 0 has a 2×2 game whose backup against V = (0, 0, 4, 2) at α = 0.5
    // is [[3, 1], [0, 2]]; the other states are absorbing.
    fn staged() -> (GameModel, ValueVector) {
        let game = GameModel::from_tables(
            0.5,
            vec![2, 1, 1, 1],
            vec![2, 1, 1, 1],
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            vec![
                vec![(2, 1.0)],
                vec![(3, 1.0)],
                vec![(1, 1.0)],
                vec![(3, 1.0)],
                vec![(1, 1.0)],
                vec![(2, 1.0)],
                vec![(3, 1.0)],
            ],
        )
        .unwrap();
        (game, DVector::from_vec(vec![0.0, 0.0, 4.0, 2.0]))
    }

    #[test]
    fn rollout_parses() {
        assert_eq!("inf".parse::<Rollout>().unwrap(), Rollout::Infinite);
        assert_eq!("3".parse::<Rollout>().unwrap(), Rollout::Steps(3));
        assert!("-1".parse::<Rollout>().is_err());
        assert_eq!(Rollout::Infinite.to_string(), "inf");
    }

    #[test]
    fn policy_operator_examples() {
        let game = self_loop();
        let pol = StochasticPolicyPair::uniform(&game);
        let out = apply_policy_operator(&game, &pol, &DVector::zeros(1)).unwrap();
        assert_eq!(out[0], 0.5);
        let j = exact_policy_value(&game, &pol).unwrap();
        let again = apply_policy_operator(&game, &pol, &j).unwrap();
        assert!(sup_distance(&again, &j) < 1e-10);
    }

    #[test]
    fn bellman_on_staged_matrix() {
        let (game, v) = staged();
        let (tv, greedy) = apply_bellman(&game, &v).unwrap();
        assert!((tv[0] - 1.5).abs() < 1e-12);
        assert!((greedy.nu[0][1] - 0.75).abs() < 1e-12);
        let (tmu, replies) = apply_min_operator(&game, &[vec![1.0, 0.0], vec![1.0], vec![1.0], vec![1.0]], &v).unwrap();
        assert_eq!(tmu[0], 1.0);
        assert_eq!(replies[0], 1);
    }

    #[test]
    fn rollout_examples() {
        let game = self_loop();
        let pol = StochasticPolicyPair::uniform(&game);
        let v = DVector::zeros(1);
        assert_eq!(rollout(&game, &pol, &v, Rollout::Steps(0)).unwrap(), v);
        assert!((rollout(&game, &pol, &v, Rollout::Steps(2)).unwrap()[0] - 0.95).abs() < 1e-15);
        assert!((rollout(&game, &pol, &v, Rollout::Infinite).unwrap()[0] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn lookahead_depth_one_is_greedy() {
        let (game, v) = staged();
        let look = lookahead(&game, &v, 1).unwrap();
        assert_eq!(look.backed_value, v);
        let (tv, greedy) = apply_bellman(&game, &v).unwrap();
        assert_eq!(look.policy, greedy);
        assert_eq!(look.top_value, tv);
        assert!(lookahead(&game, &v, 0).is_err());
    }

    #[test]
    fn composite_reductions() {
        let (game, v) = staged();
        assert_eq!(composite_tmh(&game, &v, Rollout::Steps(0), 1).unwrap(), v);
        let two = apply_bellman(&game, &apply_bellman(&game, &v).unwrap().0).unwrap().0;
        assert_eq!(composite_tmh(&game, &v, Rollout::Steps(0), 3).unwrap(), two);
    }
}
