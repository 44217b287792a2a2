//! Zero-sum Markov game model, policies, and exact policy evaluation.
//!
//! A game is stored as a flat list of `(s, u, v)` triples laid out state by
//! state, maximizer action major. Each triple owns a reward in `[0, 1]` and a
//! sparse successor distribution whose support is exactly the reachable set
//! `R(s, u, v)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation, Violations};

/// Value estimates, one entry per state.
pub type ValueVector = DVector<f64>;

/// Tolerance used for every probability and reward check.
pub const PROB_TOL: f64 = 1e-12;

/// Sup-norm distance between two value vectors.
pub fn sup_distance(a: &ValueVector, b: &ValueVector) -> f64 {
    a.iter().zip(b.iter()).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// On-disk game description. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub num_states: usize,
    pub discount: f64,
    pub actions_max: Vec<usize>,
    pub actions_min: Vec<usize>,
    /// `[s, u, v, g]` rows.
    pub rewards: Vec<(usize, usize, usize, f64)>,
    /// `[s, u, v, s', p]` rows.
    pub transitions: Vec<(usize, usize, usize, usize, f64)>,
}

impl GameFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Validated, immutable two-player zero-sum discounted Markov game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    discount: f64,
    actions_max: Vec<usize>,
    actions_min: Vec<usize>,
    offsets: Vec<usize>,
    rewards: Vec<f64>,
    transitions: Vec<Vec<(usize, f64)>>,
}

/// Parse and validate a game description, reporting every broken invariant.
pub fn validate_game(file: &GameFile) -> Result<GameModel> {
    let mut violations = Vec::new();
    let n = file.num_states;
    if n == 0 {
        violations.push(Violation::NoStates);
    }
    for (what, list) in [("actions_max", &file.actions_max), ("actions_min", &file.actions_min)] {
        if list.len() != n {
            violations.push(Violation::ShapeMismatch { what, expected: n, found: list.len() });
        }
    }
    if !violations.is_empty() {
        return Err(Error::InvalidGame(Violations(violations)));
    }

    let legal = |s: usize, u: usize, v: usize| s < n && u < file.actions_max[s] && v < file.actions_min[s];

    let mut rewards: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for &(s, u, v, g) in &file.rewards {
        if !legal(s, u, v) {
            violations.push(out_of_range(n, s, u, v));
            continue;
        }
        if rewards.insert((s, u, v), g).is_some() {
            violations.push(Violation::DuplicateReward { state: s, max_action: u, min_action: v });
        }
    }

    let mut rows: BTreeMap<(usize, usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    let mut seen: BTreeSet<(usize, usize, usize, usize)> = BTreeSet::new();
    for &(s, u, v, next, p) in &file.transitions {
        if !legal(s, u, v) {
            violations.push(out_of_range(n, s, u, v));
            continue;
        }
        if !seen.insert((s, u, v, next)) {
            violations.push(Violation::DuplicateTransition {
                state: s,
                max_action: u,
                min_action: v,
                successor: next,
            });
            continue;
        }
        rows.entry((s, u, v)).or_default().push((next, p));
    }

    let mut flat_rewards = Vec::new();
    let mut flat_rows = Vec::new();
    for s in 0..n {
        for u in 0..file.actions_max[s] {
            for v in 0..file.actions_min[s] {
                match rewards.get(&(s, u, v)) {
                    Some(&g) => flat_rewards.push(g),
                    None => {
                        violations.push(Violation::MissingReward { state: s, max_action: u, min_action: v });
                        flat_rewards.push(0.0);
                    }
                }
                match rows.remove(&(s, u, v)) {
                    Some(row) => flat_rows.push(row),
                    None => {
                        violations.push(Violation::MissingTransition { state: s, max_action: u, min_action: v });
                        flat_rows.push(vec![(s, 1.0)]);
                    }
                }
            }
        }
    }

    match GameModel::from_tables(
        file.discount,
        file.actions_max.clone(),
        file.actions_min.clone(),
        flat_rewards,
        flat_rows,
    ) {
        Ok(game) if violations.is_empty() => Ok(game),
        Ok(_) => Err(Error::InvalidGame(Violations(violations))),
        Err(Error::InvalidGame(Violations(more))) => {
            violations.extend(more);
            Err(Error::InvalidGame(Violations(violations)))
        }
        Err(e) => Err(e),
    }
}

fn out_of_range(n: usize, s: usize, u: usize, v: usize) -> Violation {
    if s >= n {
        Violation::StateOutOfRange { state: s }
    } else {
        Violation::ActionOutOfRange { state: s, max_action: u, min_action: v }
    }
}

impl GameModel {
    /// Build a game from flat tables laid out in triple order
    /// (state, then maximizer action, then minimizer action).
    pub fn from_tables(
        discount: f64,
        actions_max: Vec<usize>,
        actions_min: Vec<usize>,
        rewards: Vec<f64>,
        transitions: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let mut violations = Vec::new();
        let n = actions_max.len();
        if n == 0 {
            violations.push(Violation::NoStates);
        }
        if actions_min.len() != n {
            violations.push(Violation::ShapeMismatch {
                what: "actions_min",
                expected: n,
                found: actions_min.len(),
            });
            return Err(Error::InvalidGame(Violations(violations)));
        }
        if !(discount > 0.0 && discount < 1.0) {
            violations.push(Violation::DiscountOutOfRange { discount });
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for s in 0..n {
            if actions_max[s] == 0 || actions_min[s] == 0 {
                violations.push(Violation::EmptyActionSet { state: s });
            }
            offsets.push(offsets[s] + actions_max[s] * actions_min[s]);
        }
        let triples = offsets[n];
        if rewards.len() != triples {
            violations.push(Violation::ShapeMismatch { what: "rewards", expected: triples, found: rewards.len() });
        }
        if transitions.len() != triples {
            violations.push(Violation::ShapeMismatch {
                what: "transitions",
                expected: triples,
                found: transitions.len(),
            });
        }
        if !violations.iter().all(|v| matches!(v, Violation::DiscountOutOfRange { .. })) {
            return Err(Error::InvalidGame(Violations(violations)));
        }

        let mut cleaned = Vec::with_capacity(triples);
        for s in 0..n {
            for u in 0..actions_max[s] {
                for v in 0..actions_min[s] {
                    let idx = offsets[s] + u * actions_min[s] + v;
                    let g = rewards[idx];
                    if !g.is_finite() || !(0.0..=1.0).contains(&g) {
                        violations.push(Violation::RewardOutOfRange { state: s, max_action: u, min_action: v, reward: g });
                    }
                    let mut row: Vec<(usize, f64)> = Vec::with_capacity(transitions[idx].len());
                    let mut sum = 0.0;
                    let mut successors = BTreeSet::new();
                    for &(next, p) in &transitions[idx] {
                        if next >= n {
                            violations.push(Violation::DanglingSuccessor {
                                state: s,
                                max_action: u,
                                min_action: v,
                                successor: next,
                            });
                            continue;
                        }
                        if !successors.insert(next) {
                            violations.push(Violation::DuplicateTransition {
                                state: s,
                                max_action: u,
                                min_action: v,
                                successor: next,
                            });
                            continue;
                        }
                        if !p.is_finite() || p < 0.0 {
                            violations.push(Violation::NegativeProbability {
                                state: s,
                                max_action: u,
                                min_action: v,
                                successor: next,
                                probability: p,
                            });
                            continue;
                        }
                        sum += p;
                        if p > 0.0 {
                            row.push((next, p));
                        }
                    }
                    if (sum - 1.0).abs() > PROB_TOL {
                        violations.push(Violation::NonstochasticRow { state: s, max_action: u, min_action: v, sum });
                    }
                    row.sort_by_key(|&(next, _)| next);
                    cleaned.push(row);
                }
            }
        }
        if !violations.is_empty() {
            return Err(Error::InvalidGame(Violations(violations)));
        }
        Ok(GameModel { discount, actions_max, actions_min, offsets, rewards, transitions: cleaned })
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        validate_game(&GameFile::read(path)?)
    }

    pub fn to_file(&self) -> GameFile {
        let mut rewards = Vec::with_capacity(self.num_triples());
        let mut transitions = Vec::new();
        for (s, u, v, idx) in self.triples() {
            rewards.push((s, u, v, self.rewards[idx]));
            for &(next, p) in &self.transitions[idx] {
                transitions.push((s, u, v, next, p));
            }
        }
        GameFile {
            num_states: self.num_states(),
            discount: self.discount,
            actions_max: self.actions_max.clone(),
            actions_min: self.actions_min.clone(),
            rewards,
            transitions,
        }
    }

    /// Same game with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidGame(Violations(vec![Violation::DiscountOutOfRange { discount }])));
        }
        Ok(GameModel { discount, ..self.clone() })
    }

    pub fn num_states(&self) -> usize {
        self.actions_max.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn actions_max(&self, s: usize) -> usize {
        self.actions_max[s]
    }

    pub fn actions_min(&self, s: usize) -> usize {
        self.actions_min[s]
    }

    pub fn num_triples(&self) -> usize {
        self.rewards.len()
    }

    /// Flat index of `(s, u, v)`.
    #[inline]
    pub fn triple_index(&self, s: usize, u: usize, v: usize) -> usize {
        debug_assert!(u < self.actions_max[s] && v < self.actions_min[s]);
        self.offsets[s] + u * self.actions_min[s] + v
    }

    #[inline]
    pub fn reward(&self, s: usize, u: usize, v: usize) -> f64 {
        self.rewards[self.triple_index(s, u, v)]
    }

    /// Sparse successor distribution; its support is the reachable set.
    #[inline]
    pub fn successors(&self, s: usize, u: usize, v: usize) -> &[(usize, f64)] {
        &self.transitions[self.triple_index(s, u, v)]
    }

    /// Iterate over `(s, u, v, flat_index)` in storage order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        (0..self.num_states()).flat_map(move |s| {
            let cols = self.actions_min[s];
            (0..self.actions_max[s] * cols).map(move |k| (s, k / cols, k % cols, self.offsets[s] + k))
        })
    }

    /// Largest action-set size of either player over all states.
    pub fn max_action_count(&self) -> usize {
        self.actions_max.iter().chain(self.actions_min.iter()).copied().max().unwrap_or(0)
    }

    /// `A_{V,s}(u, v) = g(s,u,v) + α Σ_{s'} P(s'|s,u,v) V(s')`.
    pub fn backup_matrix(&self, s: usize, v: &ValueVector) -> DMatrix<f64> {
        let rows = self.actions_max[s];
        let cols = self.actions_min[s];
        DMatrix::from_fn(rows, cols, |u, w| {
            let idx = self.offsets[s] + u * cols + w;
            self.rewards[idx] + self.discount * expectation(&self.transitions[idx], v)
        })
    }

    pub(crate) fn check_values(&self, v: &ValueVector) -> Result<()> {
        if v.len() != self.num_states() {
            return Err(Error::DimensionMismatch {
                what: "value vector",
                expected: self.num_states(),
                found: v.len(),
            });
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn expectation(row: &[(usize, f64)], v: &ValueVector) -> f64 {
    row.iter().map(|&(next, p)| p * v[next]).sum()
}

/// Mixed strategies for both players at every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicyPair {
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
}

impl StochasticPolicyPair {
    /// Pure strategies given by one action index per state for each player.
    pub fn deterministic(game: &GameModel, max_actions: &[usize], min_actions: &[usize]) -> Result<Self> {
        let n = game.num_states();
        if max_actions.len() != n || min_actions.len() != n {
            return Err(Error::DimensionMismatch {
                what: "deterministic policy",
                expected: n,
                found: max_actions.len().min(min_actions.len()),
            });
        }
        let one_hot = |len: usize, at: usize| {
            let mut x = vec![0.0; len];
            x[at] = 1.0;
            x
        };
        let mu = (0..n).map(|s| one_hot(game.actions_max(s), max_actions[s])).collect();
        let nu = (0..n).map(|s| one_hot(game.actions_min(s), min_actions[s])).collect();
        let pol = StochasticPolicyPair { mu, nu };
        pol.validate(game)?;
        Ok(pol)
    }

    pub fn uniform(game: &GameModel) -> Self {
        let n = game.num_states();
        let flat = |k: usize| vec![1.0 / k as f64; k];
        StochasticPolicyPair {
            mu: (0..n).map(|s| flat(game.actions_max(s))).collect(),
            nu: (0..n).map(|s| flat(game.actions_min(s))).collect(),
        }
    }

    pub fn validate(&self, game: &GameModel) -> Result<()> {
        let n = game.num_states();
        if self.mu.len() != n || self.nu.len() != n {
            return Err(Error::DimensionMismatch {
                what: "policy state count",
                expected: n,
                found: if self.mu.len() != n { self.mu.len() } else { self.nu.len() },
            });
        }
        for s in 0..n {
            check_distribution(s, &self.mu[s], game.actions_max(s), "maximizer")?;
            check_distribution(s, &self.nu[s], game.actions_min(s), "minimizer")?;
        }
        Ok(())
    }
}

pub(crate) fn check_distribution(state: usize, x: &[f64], len: usize, who: &str) -> Result<()> {
    if x.len() != len {
        return Err(Error::DimensionMismatch { what: "strategy length", expected: len, found: x.len() });
    }
    if x.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::InvalidPolicy { state, reason: format!("{who} strategy has a negative entry") });
    }
    let sum: f64 = x.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidPolicy { state, reason: format!("{who} strategy sums to {sum}") });
    }
    Ok(())
}

/// Row-stochastic `P_{μ,ν}` as a dense `|S|×|S|` matrix.
pub fn policy_transition(game: &GameModel, pol: &StochasticPolicyPair) -> Result<DMatrix<f64>> {
    pol.validate(game)?;
    let n = game.num_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for (u, &mu) in pol.mu[s].iter().enumerate() {
            for (v, &nu) in pol.nu[s].iter().enumerate() {
                let w = mu * nu;
                if w == 0.0 {
                    continue;
                }
                for &(next, prob) in game.successors(s, u, v) {
                    p[(s, next)] += w * prob;
                }
            }
        }
    }
    Ok(p)
}

/// Expected one-step reward `g_{μ,ν}`.
pub fn policy_reward(game: &GameModel, pol: &StochasticPolicyPair) -> Result<ValueVector> {
    pol.validate(game)?;
    Ok(DVector::from_fn(game.num_states(), |s, _| {
        let mut acc = 0.0;
        for (u, &mu) in pol.mu[s].iter().enumerate() {
            for (v, &nu) in pol.nu[s].iter().enumerate() {
                acc += mu * nu * game.reward(s, u, v);
            }
        }
        acc
    }))
}

/// `J^{μ,ν}` from the linear system `(I − αP_{μ,ν}) J = g_{μ,ν}`.
pub fn exact_policy_value(game: &GameModel, pol: &StochasticPolicyPair) -> Result<ValueVector> {
    let p = policy_transition(game, pol)?;
    let g = policy_reward(game, pol)?;
    let n = game.num_states();
    let system = DMatrix::identity(n, n) - p * game.discount();
    let j = system.lu().solve(&g).ok_or(Error::SingularSystem)?;
    if j.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(j)
}

/// Per-state action-value matrices `Q(s, ·, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub matrices: Vec<DMatrix<f64>>,
}

impl QTable {
    pub fn get(&self, s: usize, u: usize, v: usize) -> f64 {
        self.matrices[s][(u, v)]
    }

    /// Sup-norm distance; both tables must come from the same game.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.matrices
            .iter()
            .zip(&other.matrices)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

/// One-step backup `Q(s,u,v) = g(s,u,v) + α Σ P(s'|s,u,v) V(s')`.
pub fn q_from_v(game: &GameModel, v: &ValueVector) -> Result<QTable> {
    game.check_values(v)?;
    Ok(QTable { matrices: (0..game.num_states()).map(|s| game.backup_matrix(s, v)).collect() })
}
