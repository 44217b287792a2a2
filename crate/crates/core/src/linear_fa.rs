//! Least-squares policy iteration with lookahead over state features.
//!
//! Values are represented as `Φθ`. Each iteration evaluates the lookahead and
//! rollout target at the anchor states `D` and refits `θ` on those rows only.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bellman::{apply_bellman, tmh_step, Rollout};
use crate::error::{Error, Result};
use crate::game::{exact_policy_value, sup_distance, GameModel, StochasticPolicyPair, ValueVector};
use crate::trace::{ConvergenceTrace, Termination};

/// Singular values of `Φ_D` at or below this count as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Features `Φ` (one row per state) and the ordered anchor set `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFeatureScheme {
    pub phi: DMatrix<f64>,
    pub anchors: Vec<usize>,
}

/// On-disk form: `{"d": d, "phi": [[...], ...], "anchors": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    pub d: usize,
    pub phi: Vec<Vec<f64>>,
    pub anchors: Vec<usize>,
}

impl FeatureFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn into_scheme(self) -> Result<StateFeatureScheme> {
        if let Some((s, row)) = self.phi.iter().enumerate().find(|(_, r)| r.len() != self.d) {
            return Err(Error::InvalidFeatures(format!("row {s} has {} entries, expected d = {}", row.len(), self.d)));
        }
        let n = self.phi.len();
        let phi = DMatrix::from_fn(n, self.d, |s, j| self.phi[s][j]);
        StateFeatureScheme::new(phi, self.anchors)
    }
}

impl From<&StateFeatureScheme> for FeatureFile {
    fn from(scheme: &StateFeatureScheme) -> Self {
        FeatureFile {
            d: scheme.dim(),
            phi: scheme.phi.row_iter().map(|r| r.iter().copied().collect()).collect(),
            anchors: scheme.anchors.clone(),
        }
    }
}

impl StateFeatureScheme {
    /// Checks shapes, anchor indices and finiteness. The rank condition is
    /// checked by [`build_projection`].
    pub fn new(phi: DMatrix<f64>, anchors: Vec<usize>) -> Result<Self> {
        if phi.ncols() == 0 || phi.nrows() == 0 {
            return Err(Error::InvalidFeatures("feature matrix is empty".into()));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidFeatures("feature matrix has non-finite entries".into()));
        }
        let mut seen = vec![false; phi.nrows()];
        for &a in &anchors {
            if a >= phi.nrows() {
                return Err(Error::InvalidFeatures(format!("anchor {a} out of range for {} states", phi.nrows())));
            }
            if std::mem::replace(&mut seen[a], true) {
                return Err(Error::InvalidFeatures(format!("anchor {a} listed twice")));
            }
        }
        Ok(StateFeatureScheme { phi, anchors })
    }

    /// Identity features with every state an anchor: the tabular case.
    pub fn tabular(num_states: usize) -> Self {
        StateFeatureScheme { phi: DMatrix::identity(num_states, num_states), anchors: (0..num_states).collect() }
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn num_states(&self) -> usize {
        self.phi.nrows()
    }

    /// `Φ_D`.
    pub fn anchor_rows(&self) -> DMatrix<f64> {
        self.phi.select_rows(self.anchors.iter())
    }

    pub fn values(&self, theta: &DVector<f64>) -> ValueVector {
        &self.phi * theta
    }

    fn check_game(&self, game: &GameModel) -> Result<()> {
        if self.num_states() != game.num_states() {
            return Err(Error::DimensionMismatch {
                what: "feature rows",
                expected: game.num_states(),
                found: self.num_states(),
            });
        }
        Ok(())
    }
}

/// `M = Φ(Φ_DᵀΦ_D)^{-1}Φ_DᵀP_D` with `P_D` the anchor selector, and `δ_FV = ‖M‖∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOperator {
    pub m_matrix: DMatrix<f64>,
    pub delta_fv: f64,
    gram_inverse_times_anchor_t: DMatrix<f64>,
}

impl ProjectionOperator {
    /// `θ` fitting `target` (a full-length vector) on the anchor rows.
    pub fn fit(&self, scheme: &StateFeatureScheme, target: &ValueVector) -> DVector<f64> {
        let at_anchors = DVector::from_iterator(scheme.anchors.len(), scheme.anchors.iter().map(|&s| target[s]));
        &self.gram_inverse_times_anchor_t * at_anchors
    }

    pub fn apply(&self, v: &ValueVector) -> ValueVector {
        &self.m_matrix * v
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn check_rank(phi_d: &DMatrix<f64>) -> Result<()> {
    let d = phi_d.ncols();
    if phi_d.nrows() < d {
        return Err(Error::RankDeficient { rank: phi_d.nrows(), needed: d });
    }
    let sv = phi_d.clone().svd(false, false).singular_values;
    let rank = sv.iter().filter(|&&x| x > RANK_TOL).count();
    if rank < d {
        return Err(Error::RankDeficient { rank, needed: d });
    }
    Ok(())
}

pub fn build_projection(scheme: &StateFeatureScheme) -> Result<ProjectionOperator> {
    let phi_d = scheme.anchor_rows();
    check_rank(&phi_d)?;
    let gram = phi_d.transpose() * &phi_d;
    let chol = gram.cholesky().ok_or(Error::RankDeficient { rank: 0, needed: scheme.dim() })?;
    let solve = chol.solve(&phi_d.transpose());
    let n = scheme.num_states();
    let mut selector = DMatrix::zeros(scheme.anchors.len(), n);
    for (row, &s) in scheme.anchors.iter().enumerate() {
        selector[(row, s)] = 1.0;
    }
    let m_matrix = &scheme.phi * &solve * selector;
    let delta_fv = inf_norm(&m_matrix);
    Ok(ProjectionOperator { m_matrix, delta_fv, gram_inverse_times_anchor_t: solve })
}

/// One refit together with the lookahead policy used to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct FaStep {
    pub theta: DVector<f64>,
    pub policy: StochasticPolicyPair,
    /// `‖TΦθ_k − Φθ_k‖∞`.
    pub bellman_residual: f64,
}

/// Evaluate `T^m_{μ,ν}T^{H−1}Φθ_k` and fit it at the anchors.
pub fn fa_pi_step(
    game: &GameModel,
    scheme: &StateFeatureScheme,
    proj: &ProjectionOperator,
    theta: &DVector<f64>,
    m: Rollout,
    horizon: usize,
) -> Result<FaStep> {
    scheme.check_game(game)?;
    if theta.len() != scheme.dim() {
        return Err(Error::DimensionMismatch { what: "theta", expected: scheme.dim(), found: theta.len() });
    }
    let step = tmh_step(game, &scheme.values(theta), m, horizon)?;
    Ok(FaStep {
        theta: proj.fit(scheme, &step.value),
        policy: step.lookahead.policy,
        bellman_residual: step.lookahead.bellman_residual,
    })
}

/// `κ` of the approximate scheme:
/// `α^{H−1} + (δ_FV α^{m+H−1} + α^{H−1})(1+α)/(1−α)`.
pub fn kappa_fa(alpha: f64, m: Rollout, horizon: usize, delta_fv: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("discount {alpha} outside (0,1)")));
    }
    if horizon == 0 {
        return Err(Error::ParameterOutOfRange("lookahead depth H must be at least 1".into()));
    }
    let a = alpha.powi(horizon as i32 - 1);
    Ok(a + (delta_fv * m.discount_power(alpha) * a + a) * (1.0 + alpha) / (1.0 - alpha))
}

/// Error bound parameters of an approximate run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaBoundReport {
    pub kappa_fa: f64,
    pub delta_fv: f64,
    /// Max of `‖J^{μ,ν} − M J^{μ,ν}‖∞` over the policies examined; a lower
    /// estimate of the supremum over all iterations.
    pub delta_app_estimate: f64,
    /// `δ_app/(1−κ)`, only when `κ < 1`.
    pub asymptotic_bound: Option<f64>,
}

impl FaBoundReport {
    /// `κ^k e_0 + δ_app/(1−κ)`, when `κ < 1`.
    pub fn bound_at(&self, k: usize, initial_error: f64) -> Option<f64> {
        self.asymptotic_bound.map(|tail| self.kappa_fa.powi(k as i32) * initial_error + tail)
    }
}

pub fn estimate_delta_app(
    game: &GameModel,
    proj: &ProjectionOperator,
    policies: &[StochasticPolicyPair],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for pol in policies {
        let j = exact_policy_value(game, pol)?;
        worst = worst.max(sup_distance(&j, &proj.apply(&j)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaConfig {
    pub rollout: Rollout,
    pub lookahead: usize,
    /// Iteration budget `K`.
    pub iterations: usize,
    /// Stop early once `‖TΦθ_k − Φθ_k‖∞` falls below this; running out of
    /// iterations is then an error.
    pub stop_tol: Option<f64>,
    pub reference: Option<ValueVector>,
    /// Refuse to run when `κ ≥ 1`.
    pub strict: bool,
    /// Extra policies included in the `δ_app` estimate.
    pub extra_policies: Vec<StochasticPolicyPair>,
}

impl FaConfig {
    pub fn new(rollout: Rollout, lookahead: usize, iterations: usize) -> Self {
        FaConfig {
            rollout,
            lookahead,
            iterations,
            stop_tol: None,
            reference: None,
            strict: false,
            extra_policies: Vec::new(),
        }
    }

    pub fn with_reference(mut self, reference: ValueVector) -> Self {
        self.reference = Some(reference);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaOutcome {
    /// `θ_0, …, θ_K`.
    pub thetas: Vec<DVector<f64>>,
    /// Lookahead policies, one per completed step.
    pub policies: Vec<StochasticPolicyPair>,
    pub report: FaBoundReport,
    pub trace: ConvergenceTrace,
}

impl FaOutcome {
    pub fn final_theta(&self) -> &DVector<f64> {
        self.thetas.last().expect("theta_0 is always present")
    }
}

pub fn fa_pi(
    game: &GameModel,
    scheme: &StateFeatureScheme,
    theta0: &DVector<f64>,
    config: &FaConfig,
) -> Result<FaOutcome> {
    scheme.check_game(game)?;
    if let Some(r) = &config.reference {
        game.check_values(r)?;
    }
    let proj = build_projection(scheme)?;
    let kappa = kappa_fa(game.discount(), config.rollout, config.lookahead, proj.delta_fv)?;
    if config.strict && kappa >= 1.0 {
        return Err(Error::AssumptionViolated { lhs: kappa });
    }
    let n = game.num_states() as u64;
    let h = config.lookahead as u64;
    let sup_error = |theta: &DVector<f64>| config.reference.as_ref().map(|r| sup_distance(&scheme.values(theta), r));

    let mut thetas = vec![theta0.clone()];
    let mut policies = Vec::new();
    let mut trace = ConvergenceTrace::new();
    let mut converged = false;
    for _ in 0..config.iterations {
        let current = thetas.last().unwrap();
        let step = fa_pi_step(game, scheme, &proj, current, config.rollout, config.lookahead)?;
        trace.work.operator_applications += h;
        trace.work.matrix_games_solved += n * h;
        match config.rollout {
            Rollout::Steps(m) => trace.work.operator_applications += m as u64,
            Rollout::Infinite => trace.work.linear_solves += 1,
        }
        trace.push(sup_error(current), step.bellman_residual);
        if config.stop_tol.is_some_and(|tol| step.bellman_residual <= tol) {
            converged = true;
            break;
        }
        thetas.push(step.theta);
        policies.push(step.policy);
    }
    if !converged {
        // Close the trace with the final iterate so it covers θ_0, …, θ_K.
        let last = scheme.values(thetas.last().unwrap());
        let (tv, _) = apply_bellman(game, &last)?;
        trace.work.operator_applications += 1;
        trace.work.matrix_games_solved += n;
        trace.push(sup_error(thetas.last().unwrap()), sup_distance(&tv, &last));
    }

    let mut examined = policies.clone();
    examined.extend(config.extra_policies.iter().cloned());
    let delta_app_estimate = estimate_delta_app(game, &proj, &examined)?;
    let report = FaBoundReport {
        kappa_fa: kappa,
        delta_fv: proj.delta_fv,
        delta_app_estimate,
        asymptotic_bound: (kappa < 1.0).then(|| delta_app_estimate / (1.0 - kappa)),
    };

    if converged {
        trace.termination = Termination::Converged;
    } else if config.stop_tol.is_some() {
        trace.termination = Termination::MaxIters;
        let last = scheme.values(thetas.last().unwrap());
        let residual = trace.last_residual().unwrap_or(f64::NAN);
        return Err(Error::MaxItersExceeded {
            iters: config.iterations,
            residual,
            state: Box::new(crate::error::Unconverged { last, trace }),
        });
    } else {
        trace.termination = Termination::Completed;
    }
    Ok(FaOutcome { thetas, policies, report, trace })
}
