//! Linear Markov games: `g(s,u,v) = φ(s,u,v)ᵀθ` and `P(·|s,u,v) = ηφ(s,u,v)`.
//!
//! A value vector `V` enters every local game only through
//! `β = θ + αηᵀV`, since `A_{V,s}(u,v) = φ(s,u,v)ᵀβ`. The planner here works
//! on `β` directly: each backup evaluates the target at the anchor tuples `D`,
//! which needs the local games at their successor states only, and refits `β`
//! by least squares over `D`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::bellman::Rollout;
use crate::error::{Error, Result};
use crate::game::{sup_distance, GameModel, ValueVector};
use crate::linear_fa::RANK_TOL;
use crate::matrix_game::{solve_matrix_game, MatrixGame};
use crate::trace::{ConvergenceTrace, Termination};

/// Tolerance on `φᵀθ ∈ [0,1]` and on `ηφ` being a distribution.
pub const LINEAR_TOL: f64 = 1e-10;

pub type Triple = (usize, usize, usize);

/// On-disk form of a linear model. An empty anchor list selects anchors by
/// [`greedy_anchor_set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelFile {
    pub d: usize,
    pub features: Vec<(usize, usize, usize, Vec<f64>)>,
    pub theta: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    #[serde(default)]
    pub anchors: Vec<Triple>,
}

impl LinearModelFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The file carries no discount factor, so it is supplied here.
    pub fn into_model(self, discount: f64) -> Result<LinearGameModel> {
        let d = self.d;
        if let Some(row) = self.eta.iter().find(|r| r.len() != d) {
            return Err(Error::InvalidLinearModel(format!("eta row has {} entries, expected d = {d}", row.len())));
        }
        let eta = DMatrix::from_fn(self.eta.len(), d, |s, j| self.eta[s][j]);
        let features = self.features.into_iter().map(|(s, u, v, f)| ((s, u, v), DVector::from_vec(f))).collect();
        let anchors = (!self.anchors.is_empty()).then_some(self.anchors);
        LinearGameModel::new(features, DVector::from_vec(self.theta), eta, anchors, discount)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Anchor {
    triple: Triple,
    phi: DVector<f64>,
    reward: f64,
    successors: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGameModel {
    d: usize,
    /// Indexed by the base model's triple index.
    features: Vec<DVector<f64>>,
    theta: DVector<f64>,
    eta: DMatrix<f64>,
    anchors: Vec<Anchor>,
    /// `(Φ_DᵀΦ_D)^{-1}Φ_Dᵀ`.
    fit_matrix: DMatrix<f64>,
    base: GameModel,
}

fn numerical_rank(rows: &DMatrix<f64>) -> usize {
    if rows.nrows() == 0 {
        return 0;
    }
    rows.clone().svd(false, false).singular_values.iter().filter(|&&x| x > RANK_TOL).count()
}

/// Scan triples in order, keeping each one that raises the numerical rank.
pub fn greedy_anchor_set(d: usize, features: &[(Triple, DVector<f64>)]) -> Vec<Triple> {
    // Orthonormal basis of the span so far (modified Gram–Schmidt).
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d);
    let mut chosen = Vec::with_capacity(d);
    for (triple, phi) in features {
        if basis.len() == d {
            break;
        }
        let mut r = phi.clone();
        for q in &basis {
            let c = q.dot(&r);
            r -= q * c;
        }
        let norm = r.norm();
        if norm > RANK_TOL * phi.norm().max(1.0) {
            basis.push(r / norm);
            chosen.push(*triple);
        }
    }
    chosen
}

impl LinearGameModel {
    /// Builds the induced tabular game and checks linearity and the anchor rank.
    /// Anchors default to [`greedy_anchor_set`] over triples in `(s,u,v)` order.
    pub fn new(
        mut features: Vec<(Triple, DVector<f64>)>,
        theta: DVector<f64>,
        eta: DMatrix<f64>,
        anchors: Option<Vec<Triple>>,
        discount: f64,
    ) -> Result<Self> {
        let d = theta.len();
        let n = eta.nrows();
        if d == 0 || n == 0 {
            return Err(Error::InvalidLinearModel("empty theta or eta".into()));
        }
        if eta.ncols() != d {
            return Err(Error::DimensionMismatch { what: "eta columns", expected: d, found: eta.ncols() });
        }
        if theta.iter().chain(eta.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidLinearModel("non-finite theta or eta".into()));
        }
        features.sort_by_key(|&(t, _)| t);
        let mut actions_max = vec![0usize; n];
        let mut actions_min = vec![0usize; n];
        for ((s, u, v), phi) in &features {
            if *s >= n {
                return Err(Error::InvalidLinearModel(format!("feature state {s} outside 0..{n}")));
            }
            if phi.len() != d || phi.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidLinearModel(format!("feature ({s},{u},{v}) must be {d} finite reals")));
            }
            actions_max[*s] = actions_max[*s].max(u + 1);
            actions_min[*s] = actions_min[*s].max(v + 1);
        }
        let expected: usize = (0..n).map(|s| actions_max[s] * actions_min[s]).sum();
        if expected != features.len() || features.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidLinearModel("features must cover every (s,u,v) exactly once".into()));
        }

        let mut rewards = Vec::with_capacity(features.len());
        let mut transitions = Vec::with_capacity(features.len());
        for ((s, u, v), phi) in &features {
            let g = phi.dot(&theta);
            if !(-LINEAR_TOL..=1.0 + LINEAR_TOL).contains(&g) {
                return Err(Error::InvalidLinearModel(format!("reward φᵀθ = {g} at ({s},{u},{v}) outside [0,1]")));
            }
            rewards.push(g.clamp(0.0, 1.0));
            let p = &eta * phi;
            if let Some(bad) = p.iter().find(|&&x| x < -LINEAR_TOL) {
                return Err(Error::InvalidLinearModel(format!("ηφ has entry {bad} at ({s},{u},{v})")));
            }
            let total: f64 = p.iter().map(|x| x.max(0.0)).sum();
            if (total - 1.0).abs() > LINEAR_TOL {
                return Err(Error::InvalidLinearModel(format!("ηφ sums to {total} at ({s},{u},{v})")));
            }
            // Entries at rounding level are treated as unreachable.
            let row: Vec<(usize, f64)> =
                p.iter().enumerate().filter(|&(_, &x)| x > LINEAR_TOL).map(|(t, &x)| (t, x)).collect();
            let kept: f64 = row.iter().map(|&(_, x)| x).sum();
            transitions.push(row.into_iter().map(|(t, x)| (t, x / kept)).collect());
        }
        let base = GameModel::from_tables(discount, actions_max, actions_min, rewards, transitions)?;

        let anchor_triples = match anchors {
            Some(a) => a,
            None => greedy_anchor_set(d, &features),
        };
        let feats: Vec<DVector<f64>> = features.into_iter().map(|(_, f)| f).collect();
        let mut anchor_data = Vec::with_capacity(anchor_triples.len());
        for &(s, u, v) in &anchor_triples {
            if s >= n || u >= base.actions_max(s) || v >= base.actions_min(s) {
                return Err(Error::InvalidLinearModel(format!("anchor ({s},{u},{v}) is not a valid triple")));
            }
            anchor_data.push(Anchor {
                triple: (s, u, v),
                phi: feats[base.triple_index(s, u, v)].clone(),
                reward: base.reward(s, u, v),
                successors: base.successors(s, u, v).to_vec(),
            });
        }
        let phi_d = DMatrix::from_fn(anchor_data.len(), d, |i, j| anchor_data[i].phi[j]);
        let rank = numerical_rank(&phi_d);
        if rank < d {
            return Err(Error::RankDeficient { rank, needed: d });
        }
        let gram = phi_d.transpose() * &phi_d;
        let chol = gram.cholesky().ok_or(Error::RankDeficient { rank, needed: d })?;
        let fit_matrix = chol.solve(&phi_d.transpose());
        Ok(LinearGameModel { d, features: feats, theta, eta, anchors: anchor_data, fit_matrix, base })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn base(&self) -> &GameModel {
        &self.base
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn eta(&self) -> &DMatrix<f64> {
        &self.eta
    }

    pub fn feature(&self, s: usize, u: usize, v: usize) -> &DVector<f64> {
        &self.features[self.base.triple_index(s, u, v)]
    }

    pub fn anchors(&self) -> Vec<Triple> {
        self.anchors.iter().map(|a| a.triple).collect()
    }

    /// `Σ_{(s,u,v)∈D} |R(s,u,v)|`.
    pub fn reach_sum(&self) -> usize {
        self.anchors.iter().map(|a| a.successors.len()).sum()
    }

    /// Largest `|R(s,u,v)|` over the anchors.
    pub fn max_reach(&self) -> usize {
        self.anchors.iter().map(|a| a.successors.len()).max().unwrap_or(0)
    }

    pub fn to_file(&self) -> LinearModelFile {
        LinearModelFile {
            d: self.d,
            features: self.base.triples().map(|(s, u, v, i)| (s, u, v, self.features[i].iter().copied().collect())).collect(),
            theta: self.theta.iter().copied().collect(),
            eta: self.eta.row_iter().map(|r| r.iter().copied().collect()).collect(),
            anchors: self.anchors(),
        }
    }

    fn fit(&self, targets: &[f64]) -> BetaWeights {
        BetaWeights { beta: &self.fit_matrix * DVector::from_column_slice(targets) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaWeights {
    pub beta: DVector<f64>,
}

impl BetaWeights {
    pub fn new(beta: DVector<f64>) -> Result<Self> {
        if beta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidLinearModel("beta has non-finite entries".into()));
        }
        Ok(BetaWeights { beta })
    }

    pub fn zeros(d: usize) -> Self {
        BetaWeights { beta: DVector::zeros(d) }
    }
}

/// `β = θ + αηᵀV`, the weights whose local games are `A_{V,s}`.
pub fn beta_from_values(lg: &LinearGameModel, v: &ValueVector) -> Result<BetaWeights> {
    lg.base.check_values(v)?;
    BetaWeights::new(&lg.theta + lg.eta.transpose() * v * lg.base.discount())
}

/// `A(u,v) = φ(s,u,v)ᵀβ`.
pub fn assemble_local_matrix(lg: &LinearGameModel, beta: &BetaWeights, s: usize) -> Result<MatrixGame> {
    if beta.beta.len() != lg.d {
        return Err(Error::DimensionMismatch { what: "beta", expected: lg.d, found: beta.beta.len() });
    }
    if s >= lg.base.num_states() {
        return Err(Error::InvalidPolicy { state: s, reason: "state out of range".into() });
    }
    let payoff = DMatrix::from_fn(lg.base.actions_max(s), lg.base.actions_min(s), |u, v| lg.feature(s, u, v).dot(&beta.beta));
    MatrixGame::new(payoff)
}

/// Equilibrium strategies at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalStrategy {
    pub max: Vec<f64>,
    pub min: Vec<f64>,
}

/// Strategies at the states reachable from the anchors.
pub type LocalPolicy = BTreeMap<usize, LocalStrategy>;

pub enum BackupMode<'a> {
    /// Target `A_{TV,s}(u,v)`.
    Bellman,
    /// Target `A_{T_{μ,ν}V,s}(u,v)`.
    Policy(&'a LocalPolicy),
}

struct Pass {
    targets: Vec<f64>,
    strategies: LocalPolicy,
    games: u64,
}

// One backup at every anchor. Bellman mode solves the local game at each
// successor of each anchor, repeats included.
fn anchor_pass(lg: &LinearGameModel, beta: &BetaWeights, mode: &BackupMode<'_>) -> Result<Pass> {
    let alpha = lg.base.discount();
    let mut targets = Vec::with_capacity(lg.anchors.len());
    let mut strategies = LocalPolicy::new();
    let mut games = 0;
    for anchor in &lg.anchors {
        let mut acc = 0.0;
        for &(next, p) in &anchor.successors {
            let local = assemble_local_matrix(lg, beta, next)?;
            let value = match mode {
                BackupMode::Bellman => {
                    let sol = solve_matrix_game(&local)?;
                    games += 1;
                    strategies.entry(next).or_insert(LocalStrategy { max: sol.row_strategy, min: sol.col_strategy });
                    sol.value
                }
                BackupMode::Policy(pol) => {
                    let strat = pol.get(&next).ok_or_else(|| Error::InvalidPolicy {
                        state: next,
                        reason: "no strategy at a state reachable from the anchors".into(),
                    })?;
                    crate::game::check_distribution(next, &strat.max, local.rows(), "maximizer")?;
                    crate::game::check_distribution(next, &strat.min, local.cols(), "minimizer")?;
                    local.expected_payoff(&strat.max, &strat.min)
                }
            };
            acc += p * value;
        }
        targets.push(anchor.reward + alpha * acc);
    }
    Ok(Pass { targets, strategies, games })
}

/// Backed-up weights fitted by least squares over the anchors.
pub fn beta_backup(lg: &LinearGameModel, beta: &BetaWeights, mode: BackupMode<'_>) -> Result<BetaWeights> {
    let pass = anchor_pass(lg, beta, &mode)?;
    Ok(lg.fit(&pass.targets))
}

/// Value of the local game at every state. For `β = β(V)` this is `TV`.
pub fn induced_values(lg: &LinearGameModel, beta: &BetaWeights) -> Result<ValueVector> {
    let n = lg.base.num_states();
    let mut out = DVector::zeros(n);
    for s in 0..n {
        out[s] = solve_matrix_game(&assemble_local_matrix(lg, beta, s)?)?.value;
    }
    Ok(out)
}

/// `φᵀβ` at every triple, in the base model's triple order.
pub fn induced_q(lg: &LinearGameModel, beta: &BetaWeights) -> Vec<f64> {
    lg.features.iter().map(|f| f.dot(&beta.beta)).collect()
}

// Fixed point of the policy-mode backup, which is affine in β.
fn policy_fixed_point(lg: &LinearGameModel, pol: &LocalPolicy) -> Result<BetaWeights> {
    let d = lg.d;
    let offset = lg.fit(&anchor_pass(lg, &BetaWeights::zeros(d), &BackupMode::Policy(pol))?.targets).beta;
    let mut linear = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut unit = BetaWeights::zeros(d);
        unit.beta[j] = 1.0;
        let image = lg.fit(&anchor_pass(lg, &unit, &BackupMode::Policy(pol))?.targets).beta - &offset;
        linear.set_column(j, &image);
    }
    let system = DMatrix::identity(d, d) - linear;
    let beta = system.lu().solve(&offset).ok_or(Error::SingularSystem)?;
    BetaWeights::new(beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPiConfig {
    pub rollout: Rollout,
    pub lookahead: usize,
    pub iterations: usize,
    /// Stop early once the anchor residual falls below this; running out of
    /// iterations is then an error.
    pub stop_tol: Option<f64>,
    /// `J*` for sup-error tracing of the induced values (evaluates every state).
    pub reference: Option<ValueVector>,
}

impl LinearPiConfig {
    pub fn new(rollout: Rollout, lookahead: usize, iterations: usize) -> Self {
        LinearPiConfig { rollout, lookahead, iterations, stop_tol: None, reference: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPiOutcome {
    /// `β_0, …, β_K`.
    pub betas: Vec<BetaWeights>,
    /// Lookahead strategies at the reachable states, one map per step.
    pub policies: Vec<LocalPolicy>,
    /// `bellman_residual` is `max_{(s,u,v)∈D} |A_{TV_k,s}(u,v) − A_{V_k,s}(u,v)|`;
    /// `sup_error` compares the induced values `TV_k` with the reference.
    pub trace: ConvergenceTrace,
}

/// Generalized policy iteration carried out on `β`.
///
/// Per iteration: `H−1` Bellman backups, a final round of local games at the
/// reachable states that fixes the lookahead policy, then `m` policy backups.
pub fn linear_generalized_pi(lg: &LinearGameModel, beta0: &BetaWeights, config: &LinearPiConfig) -> Result<LinearPiOutcome> {
    if config.lookahead == 0 {
        return Err(Error::ParameterOutOfRange("lookahead depth H must be at least 1".into()));
    }
    if beta0.beta.len() != lg.d {
        return Err(Error::DimensionMismatch { what: "beta", expected: lg.d, found: beta0.beta.len() });
    }
    if let Some(r) = &config.reference {
        lg.base.check_values(r)?;
    }
    let sup_error = |b: &BetaWeights| -> Result<Option<f64>> {
        match &config.reference {
            Some(r) => Ok(Some(sup_distance(&induced_values(lg, b)?, r))),
            None => Ok(None),
        }
    };
    let mut betas = vec![beta0.clone()];
    let mut policies = Vec::new();
    let mut trace = ConvergenceTrace::new();
    let mut converged = false;
    for _ in 0..config.iterations {
        let current = betas.last().unwrap().clone();
        let anchor_now: Vec<f64> = lg.anchors.iter().map(|a| a.phi.dot(&current.beta)).collect();
        let mut cur = current.clone();
        let mut residual = 0.0;
        let mut policy = LocalPolicy::new();
        for step in 1..=config.lookahead {
            let pass = anchor_pass(lg, &cur, &BackupMode::Bellman)?;
            trace.work.matrix_games_solved += pass.games;
            trace.work.operator_applications += 1;
            if step == 1 {
                residual = pass.targets.iter().zip(&anchor_now).map(|(t, a)| (t - a).abs()).fold(0.0, f64::max);
            }
            if step < config.lookahead {
                cur = lg.fit(&pass.targets);
            } else {
                policy = pass.strategies;
            }
        }
        trace.push(sup_error(&current)?, residual);
        if config.stop_tol.is_some_and(|tol| residual <= tol) {
            converged = true;
            break;
        }
        cur = match config.rollout {
            Rollout::Steps(m) => {
                for _ in 0..m {
                    cur = lg.fit(&anchor_pass(lg, &cur, &BackupMode::Policy(&policy))?.targets);
                }
                trace.work.operator_applications += m as u64;
                cur
            }
            Rollout::Infinite => {
                trace.work.linear_solves += 1;
                policy_fixed_point(lg, &policy)?
            }
        };
        betas.push(cur);
        policies.push(policy);
    }
    if converged {
        trace.termination = Termination::Converged;
    } else if config.stop_tol.is_some() {
        trace.termination = Termination::MaxIters;
        let residual = trace.last_residual().unwrap_or(f64::NAN);
        let last = induced_values(lg, betas.last().unwrap())?;
        return Err(Error::MaxItersExceeded {
            iters: config.iterations,
            residual,
            state: Box::new(crate::error::Unconverged { last, trace }),
        });
    } else {
        trace.termination = Termination::Completed;
    }
    Ok(LinearPiOutcome { betas, policies, trace })
}

/// Operation counts for one iteration of the β-space planner.
///
/// Each of the `H + m` backups costs `d(2r+1)` per anchor for the targets,
/// `⌊d³/3⌋` for the least-squares fit (an upper-bound estimate) and
/// `r·a_max²·d` per anchor to assemble the local matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub backup_ops: u64,
    pub lsq_ops: u64,
    pub assembly_ops: u64,
    /// `H·Σ_D |R(s,u,v)|`.
    pub matrix_game_count: u64,
    pub total_per_iteration: u64,
}

pub fn cost_model(
    d: u64,
    r: u64,
    a_max: u64,
    anchor_count: u64,
    reach_sum: u64,
    m: u64,
    horizon: u64,
) -> Result<CostReport> {
    for (name, value) in [("d", d), ("r", r), ("a_max", a_max), ("anchor_count", anchor_count), ("reach_sum", reach_sum), ("H", horizon)] {
        if value == 0 {
            return Err(Error::ParameterOutOfRange(format!("{name} must be positive")));
        }
    }
    let overflow = || Error::ParameterOutOfRange("operation count overflows u64".into());
    let passes = horizon.checked_add(m).ok_or_else(overflow)?;
    let mul = |xs: &[u64]| xs.iter().try_fold(1u64, |acc, &x| acc.checked_mul(x)).ok_or_else(overflow);
    let backup_ops = mul(&[passes, anchor_count, d, 2 * r + 1])?;
    let lsq_ops = mul(&[passes, mul(&[d, d, d])? / 3])?;
    let assembly_ops = mul(&[passes, anchor_count, r, a_max, a_max, d])?;
    let matrix_game_count = mul(&[horizon, reach_sum])?;
    let total_per_iteration =
        backup_ops.checked_add(lsq_ops).and_then(|x| x.checked_add(assembly_ops)).ok_or_else(overflow)?;
    Ok(CostReport { backup_ops, lsq_ops, assembly_ops, matrix_game_count, total_per_iteration })
}

/// Shape of a random exactly-linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGeneratorConfig {
    pub num_states: usize,
    pub max_actions: usize,
    pub d: usize,
    /// Successor-support size of each column of `η`.
    pub support: usize,
    pub discount: f64,
}

/// Features on the probability simplex, `θ ∈ [0,1]^d` and `η` with
/// distribution columns, so every `ηφ` is a distribution and `φᵀθ ∈ [0,1]`.
pub fn random_linear_model<R: Rng + ?Sized>(config: &LinearGeneratorConfig, rng: &mut R) -> Result<LinearGameModel> {
    let LinearGeneratorConfig { num_states: n, max_actions, d, support, discount } = *config;
    if n == 0 || max_actions == 0 || d == 0 || support == 0 || support > n {
        return Err(Error::ParameterOutOfRange("linear generator sizes must be positive and support ≤ |S|".into()));
    }
    let simplex = |rng: &mut R, k: usize| {
        let w: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut *rng)).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect::<Vec<f64>>()
    };
    let mut features = Vec::new();
    for s in 0..n {
        let a = rng.random_range(1..=max_actions);
        let b = rng.random_range(1..=max_actions);
        for u in 0..a {
            for v in 0..b {
                features.push(((s, u, v), DVector::from_vec(simplex(rng, d))));
            }
        }
    }
    let theta = DVector::from_fn(d, |_, _| rng.random::<f64>());
    let mut eta = DMatrix::zeros(n, d);
    for j in 0..d {
        let states = rand::seq::index::sample(rng, n, support).into_vec();
        let weights = simplex(rng, support);
        for (s, w) in states.into_iter().zip(weights) {
            eta[(s, j)] = w;
        }
    }
    LinearGameModel::new(features, theta, eta, None, discount)
}

pub fn random_linear_model_seeded(config: &LinearGeneratorConfig, seed: u64) -> Result<LinearGameModel> {
    random_linear_model(config, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// One-hot features over every triple of a tabular game, all triples anchors.
pub fn one_hot_embedding(game: &GameModel) -> Result<LinearGameModel> {
    let d = game.num_triples();
    let n = game.num_states();
    let mut features = Vec::with_capacity(d);
    let mut theta = DVector::zeros(d);
    let mut eta = DMatrix::zeros(n, d);
    for (s, u, v, i) in game.triples() {
        let mut phi = DVector::zeros(d);
        phi[i] = 1.0;
        features.push(((s, u, v), phi));
        theta[i] = game.reward(s, u, v);
        for &(next, p) in game.successors(s, u, v) {
            eta[(next, i)] = p;
        }
    }
    let anchors = game.triples().map(|(s, u, v, _)| (s, u, v)).collect();
    LinearGameModel::new(features, theta, eta, Some(anchors), game.discount())
}
