//! Policy iteration with simulated m-step returns and stochastic-approximation
//! averaging of the fitted feature weights.
//!
//! The lookahead `T^{H−1}Φθ_k` and its policy are computed exactly; only the
//! rollout is sampled. Each iteration draws start states, simulates one m-step
//! trajectory from each, fits `θ` to the returns at the visited states with the
//! Moore–Penrose pseudo-inverse and blends the fit into `θ_k`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::{lookahead, Rollout};
use crate::error::{Error, Result};
use crate::game::{exact_policy_value, sup_distance, GameModel, StochasticPolicyPair, ValueVector};
use crate::linear_fa::StateFeatureScheme;
use crate::trace::{ConvergenceTrace, Termination};

/// Singular values below this are dropped by the pseudo-inverse.
pub const PINV_TOL: f64 = 1e-12;

/// Step sizes `γ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepSchedule {
    /// `γ_k = c/(k+1)^p`.
    Harmonic { c: f64, p: f64 },
    Explicit(Vec<f64>),
}

impl StepSchedule {
    /// Harmonic schedules need `c > 0` and `p ∈ (1/2, 1]` so that the steps
    /// are not summable but their squares are. Explicit sequences need one
    /// positive finite step per iteration.
    pub fn validate(&self, iterations: usize) -> Result<()> {
        match self {
            StepSchedule::Harmonic { c, p } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::ParameterOutOfRange(format!("step scale c = {c} must be positive")));
                }
                if !(*p > 0.5 && *p <= 1.0) {
                    return Err(Error::ParameterOutOfRange(format!("step exponent p = {p} outside (1/2, 1]")));
                }
            }
            StepSchedule::Explicit(steps) => {
                if steps.len() < iterations {
                    return Err(Error::ParameterOutOfRange(format!(
                        "{} explicit steps for {iterations} iterations",
                        steps.len()
                    )));
                }
                if let Some(bad) = steps.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                    return Err(Error::ParameterOutOfRange(format!("step {bad} must be positive")));
                }
            }
        }
        Ok(())
    }

    pub fn step(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Harmonic { c, p } => c / ((k + 1) as f64).powf(*p),
            StepSchedule::Explicit(steps) => steps[k],
        }
    }
}

pub(crate) fn draw_index<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if x < acc {
                return i;
            }
        }
    }
    // Rounding left the cumulative sum just below 1.
    last_positive
}

/// `Σ_{i<m} α^i g(s_i,u_i,v_i) + α^m backed(s_m)` along one trajectory
/// started at `start` and played with `pol`.
pub fn sample_return<R: Rng + ?Sized>(
    game: &GameModel,
    pol: &StochasticPolicyPair,
    backed: &ValueVector,
    m: usize,
    start: usize,
    rng: &mut R,
) -> f64 {
    let alpha = game.discount();
    let mut s = start;
    let mut total = 0.0;
    let mut weight = 1.0;
    for _ in 0..m {
        let u = draw_index(pol.mu[s].iter().copied(), rng);
        let v = draw_index(pol.nu[s].iter().copied(), rng);
        total += weight * game.reward(s, u, v);
        let succ = game.successors(s, u, v);
        s = succ[draw_index(succ.iter().map(|&(_, p)| p), rng)].0;
        weight *= alpha;
    }
    total + weight * backed[s]
}

/// How start states are chosen each iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Visitation {
    /// This many i.i.d. draws from the start distribution.
    Sampled { starts_per_iter: usize },
    /// One trajectory from every state.
    AllStates,
}

/// Returns observed in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    /// Distinct visited states, ascending.
    pub visited: Vec<usize>,
    /// Mean return per visited state.
    pub returns: Vec<f64>,
    pub draws: Vec<usize>,
    /// RNG stream used for this iteration.
    pub stream: u64,
}

impl TrajectoryBatch {
    /// `Ĵ` over all states, zero off the visited set.
    pub fn padded(&self, num_states: usize) -> ValueVector {
        let mut j = DVector::zeros(num_states);
        for (&s, &r) in self.visited.iter().zip(&self.returns) {
            j[s] = r;
        }
        j
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticConfig {
    pub m: usize,
    pub lookahead: usize,
    pub iterations: usize,
    pub schedule: StepSchedule,
    pub visitation: Visitation,
    /// Start distribution; uniform when absent. Every entry must be positive.
    pub start_distribution: Option<Vec<f64>>,
    pub seed: u64,
    pub reference: Option<ValueVector>,
    /// Track `δ′_FV` and `δ′_app` (one policy evaluation per iteration).
    pub diagnostics: bool,
}

impl StochasticConfig {
    pub fn new(m: usize, lookahead: usize, iterations: usize, seed: u64) -> Self {
        StochasticConfig {
            m,
            lookahead,
            iterations,
            schedule: StepSchedule::Harmonic { c: 1.0, p: 1.0 },
            visitation: Visitation::AllStates,
            start_distribution: None,
            seed,
            reference: None,
            diagnostics: false,
        }
    }
}

/// Maxima over iterations of the visited-set projection norm and the
/// projection error of the policies' values; empirical lower estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticDiagnostics {
    pub delta_fv_prime: f64,
    pub delta_app_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticOutcome {
    /// `θ_0, …, θ_K`.
    pub thetas: Vec<DVector<f64>>,
    pub trace: ConvergenceTrace,
    pub diagnostics: Option<StochasticDiagnostics>,
    pub last_batch: Option<TrajectoryBatch>,
}

fn start_weights(game: &GameModel, given: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    let n = game.num_states();
    let Some(p) = given else {
        return Ok(vec![1.0 / n as f64; n]);
    };
    if p.len() != n {
        return Err(Error::DimensionMismatch { what: "start distribution", expected: n, found: p.len() });
    }
    if p.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::ParameterOutOfRange("start distribution must be positive at every state".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::ParameterOutOfRange(format!("start distribution sums to {total}")));
    }
    Ok(p.clone())
}

/// Per-iteration generator: the master seed with stream `k`.
pub fn iteration_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

fn pseudo_inverse(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.pseudo_inverse(PINV_TOL).map_err(|_| Error::NumericalFailure { cap: 0 })
}

pub fn stochastic_pi(
    game: &GameModel,
    scheme: &StateFeatureScheme,
    theta0: &DVector<f64>,
    config: &StochasticConfig,
) -> Result<StochasticOutcome> {
    let n = game.num_states();
    if scheme.num_states() != n {
        return Err(Error::DimensionMismatch { what: "feature rows", expected: n, found: scheme.num_states() });
    }
    if theta0.len() != scheme.dim() {
        return Err(Error::DimensionMismatch { what: "theta", expected: scheme.dim(), found: theta0.len() });
    }
    if config.lookahead == 0 {
        return Err(Error::ParameterOutOfRange("lookahead depth H must be at least 1".into()));
    }
    if let Visitation::Sampled { starts_per_iter: 0 } = config.visitation {
        return Err(Error::ParameterOutOfRange("at least one start per iteration is required".into()));
    }
    if let Some(r) = &config.reference {
        game.check_values(r)?;
    }
    config.schedule.validate(config.iterations)?;
    let weights = start_weights(game, &config.start_distribution)?;

    let mut thetas = vec![theta0.clone()];
    let mut trace = ConvergenceTrace::new();
    let mut diag: Option<StochasticDiagnostics> =
        config.diagnostics.then_some(StochasticDiagnostics { delta_fv_prime: 0.0, delta_app_prime: 0.0 });
    let mut last_batch = None;
    let h = config.lookahead as u64;
    for k in 0..config.iterations {
        let theta = thetas.last().unwrap();
        let values = scheme.values(theta);
        let look = lookahead(game, &values, config.lookahead)?;
        trace.work.operator_applications += h;
        trace.work.matrix_games_solved += h * n as u64;
        trace.push(config.reference.as_ref().map(|r| sup_distance(&values, r)), look.bellman_residual);

        let mut rng = iteration_rng(config.seed, k);
        let starts: Vec<usize> = match config.visitation {
            Visitation::AllStates => (0..n).collect(),
            Visitation::Sampled { starts_per_iter } => {
                (0..starts_per_iter).map(|_| draw_index(weights.iter().copied(), &mut rng)).collect()
            }
        };
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        for &s in &starts {
            sums[s] += sample_return(game, &look.policy, &look.backed_value, config.m, s, &mut rng);
            counts[s] += 1;
        }
        let visited: Vec<usize> = (0..n).filter(|&s| counts[s] > 0).collect();
        let returns: Vec<f64> = visited.iter().map(|&s| sums[s] / counts[s] as f64).collect();

        let rows = scheme.phi.select_rows(visited.iter());
        let pinv = pseudo_inverse(rows)?;
        let fit = &pinv * DVector::from_column_slice(&returns);
        let gamma = config.schedule.step(k);
        let next = theta * (1.0 - gamma) + fit * gamma;

        if let Some(d) = diag.as_mut() {
            // M_k = Φ(P₁Φ)⁺P₂ over the visited rows.
            let mut m_k = DMatrix::zeros(n, n);
            let proj = &scheme.phi * &pinv;
            for (col, &s) in visited.iter().enumerate() {
                m_k.set_column(s, &proj.column(col));
            }
            let norm = m_k.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
            d.delta_fv_prime = d.delta_fv_prime.max(norm);
            let j = exact_policy_value(game, &look.policy)?;
            d.delta_app_prime = d.delta_app_prime.max(sup_distance(&j, &(&m_k * &j)));
        }
        thetas.push(next);
        last_batch = Some(TrajectoryBatch { visited, returns, draws: starts, stream: k as u64 });
    }
    let last = scheme.values(thetas.last().unwrap());
    let (tv, _) = crate::bellman::apply_bellman(game, &last)?;
    trace.work.operator_applications += 1;
    trace.work.matrix_games_solved += n as u64;
    trace.push(config.reference.as_ref().map(|r| sup_distance(&last, r)), sup_distance(&tv, &last));
    trace.termination = Termination::Completed;
    Ok(StochasticOutcome { thetas, trace, diagnostics: diag, last_batch })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledConditionReport {
    pub satisfied: bool,
    /// `δ′_FV α^{m+H−1}(1+α)/(1−α) + 2α^{H−1}/(1−α)`.
    pub lhs: f64,
}

pub fn check_sampled_condition(alpha: f64, m: Rollout, horizon: usize, delta_fv_prime: f64) -> Result<SampledConditionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("discount {alpha} outside (0,1)")));
    }
    if horizon == 0 {
        return Err(Error::ParameterOutOfRange("lookahead depth H must be at least 1".into()));
    }
    if !(delta_fv_prime >= 0.0 && delta_fv_prime.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("δ′_FV = {delta_fv_prime} must be nonnegative")));
    }
    let a = alpha.powi(horizon as i32 - 1);
    let lhs = delta_fv_prime * m.discount_power(alpha) * a * (1.0 + alpha) / (1.0 - alpha) + 2.0 * a / (1.0 - alpha);
    Ok(SampledConditionReport { satisfied: lhs < 1.0, lhs })
}
