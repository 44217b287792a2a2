//! Search for games on which naive policy iteration cycles.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::bellman::Rollout;
use crate::error::Result;
use crate::game::{validate_game, GameFile};
use crate::generate::{random_game_seeded, GeneratorConfig};
use crate::planners::{naive_pi, NaiveStatus, PlannerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub first_seed: u64,
    pub games: u64,
    pub min_states: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub discount: f64,
    pub rollout: Rollout,
    pub max_iters: usize,
    pub stop_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            first_seed: 0,
            games: 10_000,
            min_states: 2,
            max_states: 3,
            max_actions: 3,
            discount: 0.9,
            rollout: Rollout::Infinite,
            max_iters: 200,
            stop_tol: 1e-10,
        }
    }
}

impl SearchConfig {
    /// Generator settings for one seed; the state count cycles through the range.
    pub fn generator(&self, seed: u64) -> GeneratorConfig {
        let span = (self.max_states - self.min_states + 1) as u64;
        let n = self.min_states + (seed % span) as usize;
        GeneratorConfig::new(n, self.max_actions, self.discount).with_min_actions(2.min(self.max_actions))
    }
}

/// One archived instance; `game` reproduces it without the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclingInstance {
    pub seed: u64,
    pub first_seen: usize,
    pub period: usize,
    pub rollout: Rollout,
    pub game: GameFile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub tried: u64,
    pub converged: u64,
    pub cycling: u64,
    pub max_iters: u64,
    pub instances: Vec<CyclingInstance>,
}

pub fn search_naive_divergence(config: &SearchConfig) -> Result<SearchSummary> {
    if config.min_states == 0 || config.max_states < config.min_states {
        return Err(crate::Error::ParameterOutOfRange("state range must be nonempty and positive".into()));
    }
    let mut summary = SearchSummary::default();
    let planner = PlannerConfig::new(config.rollout, 1).with_tol(config.stop_tol).with_max_iters(config.max_iters);
    for seed in config.first_seed..config.first_seed + config.games {
        let game = random_game_seeded(&config.generator(seed), seed)?;
        let out = naive_pi(&game, &planner)?;
        summary.tried += 1;
        match out.status {
            NaiveStatus::Converged => summary.converged += 1,
            NaiveStatus::MaxIters => summary.max_iters += 1,
            NaiveStatus::Cycling { first_seen, period } => {
                summary.cycling += 1;
                summary.instances.push(CyclingInstance {
                    seed,
                    first_seen,
                    period,
                    rollout: config.rollout,
                    game: game.to_file(),
                });
            }
        }
    }
    Ok(summary)
}

/// One JSON object per line.
pub fn write_archive<W: Write>(instances: &[CyclingInstance], mut out: W) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parse an archive and check that every stored game validates.
pub fn read_archive<R: BufRead>(input: R) -> Result<Vec<CyclingInstance>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: CyclingInstance = serde_json::from_str(&line)?;
        validate_game(&inst.game)?;
        out.push(inst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_round_trip() {
        let game = random_game_seeded(&GeneratorConfig::new(2, 2, 0.9), 3).unwrap();
        let inst = CyclingInstance { seed: 3, first_seen: 1, period: 2, rollout: Rollout::Infinite, game: game.to_file() };
        let mut buf = Vec::new();
        write_archive(std::slice::from_ref(&inst), &mut buf).unwrap();
        assert_eq!(read_archive(&buf[..]).unwrap(), vec![inst]);
    }

    #[test]
    fn small_search_accounts_for_every_game() {
        let cfg = SearchConfig { games: 20, ..Default::default() };
        let s = search_naive_divergence(&cfg).unwrap();
        assert_eq!(s.tried, 20);
        assert_eq!(s.converged + s.cycling + s.max_iters, 20);
        assert_eq!(s.instances.len() as u64, s.cycling);
    }
}
