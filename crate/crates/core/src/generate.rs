//! Seeded random game suites.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_states: usize,
    /// Per-state maximizer action counts are drawn from `min_actions..=max_actions_max`.
    pub max_actions_max: usize,
    pub max_actions_min: usize,
    pub min_actions: usize,
    /// 0 gives one successor per triple, 1 makes every state reachable.
    pub sparsity: f64,
    pub discount: f64,
}

impl GeneratorConfig {
    pub fn new(num_states: usize, max_actions: usize, discount: f64) -> Self {
        GeneratorConfig {
            num_states,
            max_actions_max: max_actions,
            max_actions_min: max_actions,
            min_actions: 1,
            sparsity: 0.5,
            discount,
        }
    }

    pub fn with_sparsity(mut self, sparsity: f64) -> Self {
        self.sparsity = sparsity;
        self
    }

    pub fn with_min_actions(mut self, min_actions: usize) -> Self {
        self.min_actions = min_actions;
        self
    }

    /// Single minimizer action everywhere, i.e. a maximizing MDP.
    pub fn mdp(mut self) -> Self {
        self.max_actions_min = 1;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.num_states == 0 {
            return Err(Error::ParameterOutOfRange("num_states must be positive".into()));
        }
        if self.min_actions == 0
            || self.max_actions_max == 0
            || self.max_actions_min == 0
        {
            return Err(Error::ParameterOutOfRange("action counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::ParameterOutOfRange(format!("sparsity {} outside [0,1]", self.sparsity)));
        }
        Ok(())
    }

    fn support_size(&self) -> usize {
        1 + (self.sparsity * (self.num_states - 1) as f64).round() as usize
    }
}

/// Dirichlet(1,…,1) successor weights over a uniformly chosen support, uniform rewards.
pub fn random_game<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> Result<GameModel> {
    config.validate()?;
    let n = config.num_states;
    let draw_count = |rng: &mut R, hi: usize| {
        let lo = config.min_actions.min(hi);
        rng.random_range(lo..=hi)
    };
    let mut actions_max = Vec::with_capacity(n);
    let mut actions_min = Vec::with_capacity(n);
    for _ in 0..n {
        actions_max.push(draw_count(rng, config.max_actions_max));
        actions_min.push(draw_count(rng, config.max_actions_min));
    }
    let k = config.support_size();
    let mut rewards = Vec::new();
    let mut transitions = Vec::new();
    for s in 0..n {
        for _ in 0..actions_max[s] * actions_min[s] {
            rewards.push(rng.random::<f64>());
            let support = index::sample(rng, n, k).into_vec();
            let weights: Vec<f64> = support.iter().map(|_| Exp1.sample(&mut *rng)).collect();
            let total: f64 = weights.iter().sum();
            let mut row: Vec<(usize, f64)> = support.into_iter().zip(weights.iter().map(|w| w / total)).collect();
            row.sort_by_key(|&(next, _)| next);
            transitions.push(row);
        }
    }
    GameModel::from_tables(config.discount, actions_max, actions_min, rewards, transitions)
}

pub fn random_game_seeded(config: &GeneratorConfig, seed: u64) -> Result<GameModel> {
    random_game(config, &mut ChaCha8Rng::seed_from_u64(seed))
}
