//! Planning algorithms for zero-sum Markov games.
//!
//! * [`value_iteration`]: Shapley's iteration `V_{k+1} = T V_k`.
//! * [`generalized_pi`]: lookahead policy improvement followed by an m-step
//!   rollout, `V_{k+1} = T^m_{μ_{k+1},ν_{k+1}} T^{H−1} V_k`.
//! * [`naive_pi`]: the same with `H = 1` (Pollatschek–Avi-Itzhak), which may cycle.
//! * [`hoffman_karp`]: greedy maximizer policy, then the minimizer's MDP solved
//!   by iterating `T_μ`.
//!
//! Every planner stops once `‖TV_k − V_k‖∞ ≤ stop_tol`.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bellman::{apply_bellman, apply_min_operator, lookahead, policy_backup, Rollout};
use crate::error::{Error, Result, Unconverged};
use crate::game::{exact_policy_value, sup_distance, GameModel, StochasticPolicyPair, ValueVector};
use crate::trace::{ConvergenceTrace, Termination};

/// Tolerance for the inner minimizer MDP solve in Hoffman–Karp.
pub const HOFFMAN_KARP_INNER_TOL: f64 = 1e-12;
const HOFFMAN_KARP_INNER_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Rollout depth `m`.
    pub rollout: Rollout,
    /// Lookahead depth `H ≥ 1`.
    pub lookahead: usize,
    pub max_iters: usize,
    /// Stop once `‖TV_k − V_k‖∞ ≤ stop_tol`.
    pub stop_tol: f64,
    /// `V_0`; zeros when absent.
    pub initial: Option<ValueVector>,
    /// Reference `J*` for sup-error tracing.
    pub reference: Option<ValueVector>,
    /// Refuse to run generalized PI when the lookahead condition fails.
    pub strict: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            rollout: Rollout::Steps(1),
            lookahead: 1,
            max_iters: 10_000,
            stop_tol: 1e-9,
            initial: None,
            reference: None,
            strict: false,
        }
    }
}

impl PlannerConfig {
    pub fn new(rollout: Rollout, lookahead: usize) -> Self {
        PlannerConfig { rollout, lookahead, ..Default::default() }
    }

    pub fn with_tol(mut self, stop_tol: f64) -> Self {
        self.stop_tol = stop_tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_initial(mut self, initial: ValueVector) -> Self {
        self.initial = Some(initial);
        self
    }

    pub fn with_reference(mut self, reference: ValueVector) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    fn start(&self, game: &GameModel) -> Result<ValueVector> {
        if !(self.stop_tol > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("stop_tol must be positive, got {}", self.stop_tol)));
        }
        if self.lookahead == 0 {
            return Err(Error::ParameterOutOfRange("lookahead depth H must be at least 1".into()));
        }
        if let Some(r) = &self.reference {
            game.check_values(r)?;
        }
        match &self.initial {
            Some(v) => {
                game.check_values(v)?;
                Ok(v.clone())
            }
            None => Ok(DVector::zeros(game.num_states())),
        }
    }

    fn sup_error(&self, v: &ValueVector) -> Option<f64> {
        self.reference.as_ref().map(|r| sup_distance(v, r))
    }
}

/// Final iterate, its policy, and the run's trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub value: ValueVector,
    pub policy: StochasticPolicyPair,
    pub trace: ConvergenceTrace,
}

fn exhausted(config: &PlannerConfig, last: ValueVector, mut trace: ConvergenceTrace) -> Error {
    trace.termination = Termination::MaxIters;
    let residual = trace.last_residual().unwrap_or(f64::NAN);
    Error::MaxItersExceeded { iters: config.max_iters, residual, state: Box::new(Unconverged { last, trace }) }
}

/// Shapley value iteration.
pub fn value_iteration(game: &GameModel, config: &PlannerConfig) -> Result<PlanOutcome> {
    let mut v = config.start(game)?;
    let mut trace = ConvergenceTrace::new();
    let n = game.num_states() as u64;
    for _ in 0..config.max_iters {
        let (tv, greedy) = apply_bellman(game, &v)?;
        trace.work.operator_applications += 1;
        trace.work.matrix_games_solved += n;
        let residual = sup_distance(&tv, &v);
        trace.push(config.sup_error(&v), residual);
        if residual <= config.stop_tol {
            trace.termination = Termination::Converged;
            return Ok(PlanOutcome { value: v, policy: greedy, trace });
        }
        v = tv;
    }
    Err(exhausted(config, v, trace))
}

/// High-precision `J*` by value iteration at residual `1e-12`.
pub fn solve_reference(game: &GameModel) -> Result<ValueVector> {
    let config = PlannerConfig::default().with_tol(1e-12).with_max_iters(1_000_000);
    Ok(value_iteration(game, &config)?.value)
}

/// Generalized policy iteration with H-step lookahead and m-step rollouts.
pub fn generalized_pi(game: &GameModel, config: &PlannerConfig) -> Result<PlanOutcome> {
    let mut v = config.start(game)?;
    if config.strict {
        let report = check_lookahead_condition(game.discount(), config.rollout, config.lookahead)?;
        if !report.condition_satisfied {
            return Err(Error::AssumptionViolated { lhs: report.condition_lhs });
        }
    }
    let n = game.num_states() as u64;
    let mut trace = ConvergenceTrace::new();
    for _ in 0..config.max_iters {
        let look = lookahead(game, &v, config.lookahead)?;
        trace.work.operator_applications += config.lookahead as u64;
        trace.work.matrix_games_solved += n * config.lookahead as u64;
        trace.push(config.sup_error(&v), look.bellman_residual);
        if look.bellman_residual <= config.stop_tol {
            trace.termination = Termination::Converged;
            return Ok(PlanOutcome { value: v, policy: look.policy, trace });
        }
        v = match config.rollout {
            Rollout::Steps(m) => {
                let mut cur = look.backed_value;
                for _ in 0..m {
                    cur = policy_backup(game, &look.policy, &cur);
                }
                trace.work.operator_applications += m as u64;
                cur
            }
            Rollout::Infinite => {
                trace.work.linear_solves += 1;
                exact_policy_value(game, &look.policy)?
            }
        };
    }
    Err(exhausted(config, v, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NaiveStatus {
    Converged,
    /// A greedy policy pair recurred without the residual improving.
    Cycling { first_seen: usize, period: usize },
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveOutcome {
    pub status: NaiveStatus,
    pub value: ValueVector,
    pub policy: StochasticPolicyPair,
    pub trace: ConvergenceTrace,
}

// Greedy policies are compared after rounding to 1e-9.
fn policy_key(pol: &StochasticPolicyPair) -> Vec<i64> {
    pol.mu
        .iter()
        .chain(pol.nu.iter())
        .flat_map(|x| x.iter().map(|p| (p * 1e9).round() as i64).chain(std::iter::once(-1)))
        .collect()
}

/// Naive policy iteration: greedy policy, then an m-step rollout (`H` is ignored).
///
/// Divergence is reported through [`NaiveStatus`] rather than as an error.
pub fn naive_pi(game: &GameModel, config: &PlannerConfig) -> Result<NaiveOutcome> {
    let mut v = config.start(game)?;
    let n = game.num_states() as u64;
    let mut trace = ConvergenceTrace::new();
    let mut seen: HashMap<Vec<i64>, (usize, f64)> = HashMap::new();
    let mut policy = StochasticPolicyPair::uniform(game);
    for k in 0..config.max_iters {
        let (tv, greedy) = apply_bellman(game, &v)?;
        trace.work.operator_applications += 1;
        trace.work.matrix_games_solved += n;
        let residual = sup_distance(&tv, &v);
        trace.push(config.sup_error(&v), residual);
        policy = greedy;
        if residual <= config.stop_tol {
            trace.termination = Termination::Converged;
            return Ok(NaiveOutcome { status: NaiveStatus::Converged, value: v, policy, trace });
        }
        let key = policy_key(&policy);
        if let Some(&(first_seen, previous)) = seen.get(&key) {
            let period = k - first_seen;
            if period >= 2 && residual >= previous {
                trace.termination = Termination::Cycling;
                return Ok(NaiveOutcome { status: NaiveStatus::Cycling { first_seen, period }, value: v, policy, trace });
            }
        }
        seen.insert(key, (k, residual));
        v = match config.rollout {
            Rollout::Steps(m) => {
                let mut cur = v;
                for _ in 0..m {
                    cur = policy_backup(game, &policy, &cur);
                }
                trace.work.operator_applications += m as u64;
                cur
            }
            Rollout::Infinite => {
                trace.work.linear_solves += 1;
                exact_policy_value(game, &policy)?
            }
        };
    }
    trace.termination = Termination::MaxIters;
    Ok(NaiveOutcome { status: NaiveStatus::MaxIters, value: v, policy, trace })
}

/// Hoffman–Karp: freeze the greedy maximizer policy and solve the minimizer's MDP.
pub fn hoffman_karp(game: &GameModel, config: &PlannerConfig) -> Result<PlanOutcome> {
    let mut v = config.start(game)?;
    let n = game.num_states() as u64;
    let mut trace = ConvergenceTrace::new();
    for _ in 0..config.max_iters {
        let (tv, greedy) = apply_bellman(game, &v)?;
        trace.work.operator_applications += 1;
        trace.work.matrix_games_solved += n;
        let residual = sup_distance(&tv, &v);
        trace.push(config.sup_error(&v), residual);
        if residual <= config.stop_tol {
            trace.termination = Termination::Converged;
            return Ok(PlanOutcome { value: v, policy: greedy, trace });
        }
        let mu = greedy.mu;
        let mut w = v;
        let mut inner = 0;
        loop {
            let (tw, _) = apply_min_operator(game, &mu, &w)?;
            trace.work.operator_applications += 1;
            let gap = sup_distance(&tw, &w);
            w = tw;
            if gap <= HOFFMAN_KARP_INNER_TOL {
                break;
            }
            inner += 1;
            if inner >= HOFFMAN_KARP_INNER_CAP {
                return Err(exhausted(config, w, trace));
            }
        }
        v = w;
    }
    Err(exhausted(config, v, trace))
}

/// Lookahead condition and convergence rate for given `(α, m, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `α^{H−1} + (1+α^m)(α^{H−1}/(1−α))(1+α)`.
    pub kappa: f64,
    pub condition_satisfied: bool,
    /// `α^{H−1} + 2(1+α^m)α^{H−1}/(1−α)`.
    pub condition_lhs: f64,
}

pub fn check_lookahead_condition(alpha: f64, m: Rollout, horizon: usize) -> Result<RateReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("discount {alpha} outside (0,1)")));
    }
    if horizon == 0 {
        return Err(Error::ParameterOutOfRange("lookahead depth H must be at least 1".into()));
    }
    let a = alpha.powi(horizon as i32 - 1);
    let am = m.discount_power(alpha);
    let lhs = a + 2.0 * (1.0 + am) * a / (1.0 - alpha);
    let kappa = a + (1.0 + am) * (a / (1.0 - alpha)) * (1.0 + alpha);
    Ok(RateReport { kappa, condition_satisfied: lhs < 1.0, condition_lhs: lhs })
}

/// Smallest `H` satisfying the lookahead condition.
pub fn min_lookahead(alpha: f64, m: Rollout) -> Result<usize> {
    let mut horizon = 1;
    loop {
        if check_lookahead_condition(alpha, m, horizon)?.condition_satisfied {
            return Ok(horizon);
        }
        horizon += 1;
    }
}
