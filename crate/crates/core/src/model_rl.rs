//! Model-based learning from a generative sampler: estimate transitions from
//! `N` draws per tuple, plan on the estimate, evaluate the plan on the true game.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::Rollout;
use crate::error::{Error, Result};
use crate::game::{exact_policy_value, q_from_v, sup_distance, GameModel, StochasticPolicyPair, ValueVector};
use crate::planners::{check_lookahead_condition, generalized_pi, solve_reference, PlannerConfig};
use crate::stochastic_pi::draw_index;
use crate::trace::ConvergenceTrace;

/// Transition estimates `P̂ = count/N` with the true rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    /// Per triple (base triple order), `(s', count)` for observed successors.
    pub counts: Vec<Vec<(usize, u64)>>,
    pub n_per_tuple: u64,
    pub induced: GameModel,
}

/// `N` i.i.d. successor draws for every `(s,u,v)`. Tuple `i` uses its own
/// stream of a generator seeded from `rng`, so the result does not depend on
/// the thread count.
pub fn generative_sample<R: Rng + ?Sized>(game: &GameModel, n: u64, rng: &mut R) -> Result<EmpiricalModel> {
    if n == 0 {
        return Err(Error::ParameterOutOfRange("samples per tuple must be at least 1".into()));
    }
    let seed: u64 = rng.random();
    let triples: Vec<(usize, usize, usize, usize)> = game.triples().collect();
    let counts: Vec<Vec<(usize, u64)>> = triples
        .par_iter()
        .map(|&(s, u, v, i)| {
            let mut local = ChaCha8Rng::seed_from_u64(seed);
            local.set_stream(i as u64);
            let succ = game.successors(s, u, v);
            let mut tally = vec![0u64; succ.len()];
            for _ in 0..n {
                tally[draw_index(succ.iter().map(|&(_, p)| p), &mut local)] += 1;
            }
            succ.iter().zip(tally).filter(|&(_, c)| c > 0).map(|(&(next, _), c)| (next, c)).collect()
        })
        .collect();
    let mut rewards = Vec::with_capacity(triples.len());
    let mut transitions = Vec::with_capacity(triples.len());
    for (&(s, u, v, _), row) in triples.iter().zip(&counts) {
        rewards.push(game.reward(s, u, v));
        transitions.push(row.iter().map(|&(next, c)| (next, c as f64 / n as f64)).collect());
    }
    let actions_max = (0..game.num_states()).map(|s| game.actions_max(s)).collect();
    let actions_min = (0..game.num_states()).map(|s| game.actions_min(s)).collect();
    let induced = GameModel::from_tables(game.discount(), actions_max, actions_min, rewards, transitions)?;
    Ok(EmpiricalModel { counts, n_per_tuple: n, induced })
}

pub fn generative_sample_seeded(game: &GameModel, n: u64, seed: u64) -> Result<EmpiricalModel> {
    generative_sample(game, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPolicy {
    pub policy: StochasticPolicyPair,
    pub value: ValueVector,
    /// Residual target that certifies `‖Ĵ^{μ̂,ν̂} − Ĵ*‖∞ ≤ ε_opt`.
    pub stop_tol: f64,
    pub trace: ConvergenceTrace,
}

/// Residual level at which the lookahead policy of `V` is `ε_opt`-optimal:
/// both `‖J^{μ,ν} − T^{H−1}V‖∞` and `‖T^{H−1}V − J*‖∞` are at most
/// `α^{H−1}‖TV − V‖∞/(1−α)`.
pub fn certificate_tolerance(alpha: f64, horizon: usize, eps_opt: f64) -> f64 {
    eps_opt * (1.0 - alpha) / (2.0 * alpha.powi(horizon as i32 - 1))
}

/// Generalized PI on the estimated model until the residual certificate holds.
pub fn plan_on_model(empirical: &EmpiricalModel, m: Rollout, horizon: usize, eps_opt: f64) -> Result<PlannedPolicy> {
    plan_on_game(&empirical.induced, m, horizon, eps_opt)
}

pub fn plan_on_game(game: &GameModel, m: Rollout, horizon: usize, eps_opt: f64) -> Result<PlannedPolicy> {
    if !(eps_opt > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("eps_opt = {eps_opt} must be positive")));
    }
    let rate = check_lookahead_condition(game.discount(), m, horizon)?;
    if !rate.condition_satisfied {
        return Err(Error::AssumptionViolated { lhs: rate.condition_lhs });
    }
    let stop_tol = certificate_tolerance(game.discount(), horizon, eps_opt);
    let config = PlannerConfig::new(m, horizon).with_tol(stop_tol).with_max_iters(100_000);
    let out = generalized_pi(game, &config)?;
    Ok(PlannedPolicy { policy: out.policy, value: out.value, stop_tol, trace: out.trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    /// `‖Q^{μ,ν} − Q*‖∞`.
    pub q_error: f64,
    /// `‖J^{μ,ν} − J*‖∞`.
    pub v_error: f64,
}

/// Compare a policy pair with the equilibrium of the true game.
pub fn evaluate_learned_policy(true_game: &GameModel, policy: &StochasticPolicyPair) -> Result<PolicyEvaluation> {
    let star = solve_reference(true_game)?;
    evaluate_against(true_game, policy, &star)
}

/// As [`evaluate_learned_policy`] with `J*` supplied.
pub fn evaluate_against(true_game: &GameModel, policy: &StochasticPolicyPair, j_star: &ValueVector) -> Result<PolicyEvaluation> {
    if policy.mu.len() != true_game.num_states() || policy.nu.len() != true_game.num_states() {
        return Err(Error::DimensionMismatch {
            what: "policy states",
            expected: true_game.num_states(),
            found: policy.mu.len().min(policy.nu.len()),
        });
    }
    let j = exact_policy_value(true_game, policy)?;
    let q = q_from_v(true_game, &j)?;
    let q_star = q_from_v(true_game, j_star)?;
    Ok(PolicyEvaluation { q_error: q.sup_distance(&q_star), v_error: sup_distance(&j, j_star) })
}

/// Inputs for the computation half of the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputationInputs {
    pub m: Rollout,
    pub horizon: usize,
    pub eps_opt: f64,
    pub d: u64,
    pub r: u64,
    pub a_max: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBoundInputs {
    pub alpha: f64,
    pub eps: f64,
    pub delta: f64,
    pub num_states: u64,
    pub num_max_actions: u64,
    pub num_min_actions: u64,
    /// Unspecified absolute constant; 1 by default.
    pub c: f64,
    pub computation: Option<ComputationInputs>,
}

impl SampleBoundInputs {
    pub fn new(alpha: f64, eps: f64, delta: f64, num_states: u64, num_max_actions: u64, num_min_actions: u64) -> Self {
        SampleBoundInputs { alpha, eps, delta, num_states, num_max_actions, num_min_actions, c: 1.0, computation: None }
    }
}

pub const BOUND_SCOPE: &str = "stated for linear turn-based games; evaluated here as a formula only";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBoundReport {
    pub n_required: u64,
    pub inputs: SampleBoundInputs,
    /// Planning computations; absent when the rate is not below 1 or `m` is infinite.
    pub c_ops: Option<f64>,
    /// The rate `α̃` used for `c_ops`.
    pub alpha_tilde: Option<f64>,
    pub scope: String,
}

/// Samples per tuple
/// `⌈cα ln(c|S||U||V|(1−α)^{-2}δ^{-1}) / ((1−α)³ε²)⌉` (at least 1), and the
/// planning computation count
/// `c m H ln(1/(ε_opt(1−α)))/ln(1/α̃) · (d(2r+1) + d³/3 + r a_max² d)`.
pub fn sample_bound(inputs: &SampleBoundInputs) -> Result<SampleBoundReport> {
    let SampleBoundInputs { alpha, eps, delta, num_states, num_max_actions, num_min_actions, c, computation } = *inputs;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("discount {alpha} outside (0,1)")));
    }
    let ceiling = (1.0 - alpha).powf(-0.5);
    if !(eps > 0.0 && eps <= ceiling) {
        return Err(Error::ParameterOutOfRange(format!("eps = {eps} outside (0, {ceiling}]")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("delta = {delta} outside (0,1)")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("c = {c} must be positive")));
    }
    if num_states == 0 || num_max_actions == 0 || num_min_actions == 0 {
        return Err(Error::ParameterOutOfRange("state and action counts must be positive".into()));
    }
    let size = (num_states * num_max_actions * num_min_actions) as f64;
    let log_term = (c * size / ((1.0 - alpha).powi(2) * delta)).ln();
    let n = (c * alpha * log_term / ((1.0 - alpha).powi(3) * eps * eps)).ceil();
    let n_required = if n.is_finite() && n >= 1.0 { n as u64 } else { 1 };

    let (c_ops, alpha_tilde) = match computation {
        None => (None, None),
        Some(ComputationInputs { m, horizon, eps_opt, d, r, a_max }) => {
            if !(eps_opt > 0.0) {
                return Err(Error::ParameterOutOfRange(format!("eps_opt = {eps_opt} must be positive")));
            }
            let tilde = check_lookahead_condition(alpha, m, horizon)?.kappa;
            let ops = match m {
                Rollout::Steps(steps) if tilde < 1.0 => {
                    let (d, r, a) = (d as f64, r as f64, a_max as f64);
                    let per_step = d * (2.0 * r + 1.0) + d.powi(3) / 3.0 + r * a * a * d;
                    let rounds = (1.0 / (eps_opt * (1.0 - alpha))).ln().max(0.0) / (1.0 / tilde).ln();
                    Some((c * steps as f64 * horizon as f64 * rounds * per_step).ceil())
                }
                _ => None,
            };
            (ops, Some(tilde))
        }
    };
    Ok(SampleBoundReport { n_required, inputs: *inputs, c_ops, alpha_tilde, scope: BOUND_SCOPE.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{random_game_seeded, GeneratorConfig};

    #[test]
    fn deterministic_game_sampled_exactly() {
        let game = random_game_seeded(&GeneratorConfig::new(4, 2, 0.7).with_sparsity(0.0), 1).unwrap();
        let est = generative_sample_seeded(&game, 7, 2).unwrap();
        assert_eq!(est.induced, game);
    }

    #[test]
    fn single_draw_rows_are_point_masses() {
        let game = random_game_seeded(&GeneratorConfig::new(4, 2, 0.7).with_sparsity(1.0), 1).unwrap();
        let est = generative_sample_seeded(&game, 1, 5).unwrap();
        assert!(est.induced.triples().all(|(s, u, v, _)| est.induced.successors(s, u, v).len() == 1));
        assert!(est.counts.iter().all(|row| row.iter().map(|&(_, c)| c).sum::<u64>() == 1));
    }

    #[test]
    fn zero_samples_rejected() {
        let game = random_game_seeded(&GeneratorConfig::new(2, 2, 0.7), 1).unwrap();
        assert!(generative_sample_seeded(&game, 0, 0).is_err());
    }

    #[test]
    fn bound_example() {
        let r = sample_bound(&SampleBoundInputs::new(0.9, 0.1, 0.1, 10, 2, 2)).unwrap();
        let expected = (0.9 * 40000f64.ln() / (0.1f64.powi(3) * 0.01)).ceil() as u64;
        assert_eq!(r.n_required, expected);
        assert!((953_690..953_700).contains(&r.n_required));
    }

    #[test]
    fn bound_monotone_and_ranged() {
        let at = |eps, delta| sample_bound(&SampleBoundInputs::new(0.5, eps, delta, 5, 2, 2)).unwrap().n_required;
        let ceiling = 0.5f64.powf(-0.5);
        assert!(at(ceiling, 0.1) <= at(0.5, 0.1));
        assert!(at(0.5, 0.2) <= at(0.5, 0.1));
        assert!(sample_bound(&SampleBoundInputs::new(0.5, ceiling * 1.01, 0.1, 5, 2, 2)).is_err());
        assert!(sample_bound(&SampleBoundInputs::new(0.5, 0.1, 1.0, 5, 2, 2)).is_err());
    }

    #[test]
    fn computation_bound() {
        let mut inputs = SampleBoundInputs::new(0.5, 0.1, 0.1, 5, 2, 2);
        inputs.computation = Some(ComputationInputs { m: Rollout::Steps(3), horizon: 4, eps_opt: 0.01, d: 2, r: 1, a_max: 2 });
        let r = sample_bound(&inputs).unwrap();
        let rounds = (1.0f64 / 0.005).ln() / (1.0f64 / 0.546875).ln();
        let expected = (12.0 * rounds * (6.0 + 8.0 / 3.0 + 8.0)).ceil();
        assert_eq!(r.c_ops, Some(expected));
        inputs.computation = Some(ComputationInputs { m: Rollout::Steps(3), horizon: 2, eps_opt: 0.01, d: 2, r: 1, a_max: 2 });
        assert_eq!(sample_bound(&inputs).unwrap().c_ops, None);
    }

    #[test]
    fn exact_model_gives_equilibrium() {
        let game = random_game_seeded(&GeneratorConfig::new(5, 3, 0.5), 4).unwrap();
        let plan = plan_on_game(&game, Rollout::Steps(3), 4, 1e-9).unwrap();
        let eval = evaluate_learned_policy(&game, &plan.policy).unwrap();
        assert!(eval.v_error <= 1e-9 + 1e-11);
        let uniform = evaluate_learned_policy(&game, &StochasticPolicyPair::uniform(&game)).unwrap();
        assert!(uniform.q_error > 0.0);
    }

    #[test]
    fn huge_eps_opt_stops_at_once() {
        let game = random_game_seeded(&GeneratorConfig::new(3, 2, 0.5), 4).unwrap();
        let plan = plan_on_game(&game, Rollout::Steps(1), 4, 1e6).unwrap();
        assert_eq!(plan.trace.len(), 1);
    }

    #[test]
    fn short_lookahead_rejected() {
        let game = random_game_seeded(&GeneratorConfig::new(3, 2, 0.9), 4).unwrap();
        assert!(matches!(plan_on_game(&game, Rollout::Steps(1), 2, 1e-3), Err(Error::AssumptionViolated { .. })));
    }
}
