//! Seeded random search over the three population hyperparameters
//! (mutation probability, elite count, population size) with repeated
//! short-budget runs per sampled configuration.
//!
//! Repeat seeds are shared across configurations so that leaderboard
//! differences reflect the hyperparameters rather than seed luck. Trials
//! are independent and run in parallel; every random draw derives from the
//! search seed, so the leaderboard is reproducible bit for bit.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::evo::EvoConfig;
use crate::orchestrator::{self, EpoConfig};
use crate::seeds;
use crate::stats;

/// Uniform sampling ranges (inclusive) for the searched hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub mutation_prob: (f64, f64),
    pub elite_count: (usize, usize),
    pub population_size: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            mutation_prob: (0.1, 0.5),
            elite_count: (2, 6),
            population_size: (6, 16),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let (m_lo, m_hi) = self.mutation_prob;
        if !(0.0..=1.0).contains(&m_lo) || !(0.0..=1.0).contains(&m_hi) || m_lo > m_hi {
            return Err(Error::config("mutation_prob range must be ordered within [0, 1]"));
        }
        let (e_lo, e_hi) = self.elite_count;
        let (p_lo, p_hi) = self.population_size;
        if e_lo == 0 || e_lo > e_hi || p_lo > p_hi {
            return Err(Error::config("elite/population ranges must be ordered and >= 1"));
        }
        if e_lo >= p_hi {
            return Err(Error::config(
                "no sample can satisfy elite_count < population_size in this space",
            ));
        }
        Ok(())
    }
}

/// Draws one configuration uniformly from the space, resampling until
/// `elite_count < population_size`. Fields outside the search inherit from
/// `base`.
pub fn sample_config(space: &SearchSpace, base: &EvoConfig, seed: u64) -> Result<EvoConfig> {
    space.validate()?;
    let mut rng = seeds::rng(seed, &[seeds::STREAM_HYPER]);
    loop {
        let mutation_prob = rng.random_range(space.mutation_prob.0..=space.mutation_prob.1);
        let elite_count = rng.random_range(space.elite_count.0..=space.elite_count.1);
        let population_size = rng.random_range(space.population_size.0..=space.population_size.1);
        if elite_count < population_size {
            let config = EvoConfig { mutation_prob, elite_count, population_size, ..base.clone() };
            config.validate()?;
            return Ok(config);
        }
    }
}

/// Result of one search trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Index in sampling order (also the tie-break key).
    pub trial: usize,
    pub mutation_prob: f64,
    pub elite_count: usize,
    pub population_size: usize,
    /// Best-member reward of each repeat, in repeat order.
    pub per_repeat: Vec<f64>,
    /// Arithmetic mean of `per_repeat`; −∞ when the trial failed.
    pub mean_reward: f64,
    pub repeats: usize,
    /// Environment steps consumed across all repeats.
    pub env_steps: u64,
    /// First error encountered, if the trial failed.
    pub error: Option<String>,
}

/// Leaderboard plus whole-search accounting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    /// Trials sorted by mean reward descending (stable; ties keep sampling
    /// order). Failed trials sink to the bottom.
    pub leaderboard: Vec<TrialResult>,
    /// Total environment steps across every trial and repeat.
    pub total_steps: u64,
}

/// Runs `trials` sampled configurations for `repeats` runs each and ranks
/// them. Trial failures are recorded on their row rather than aborting the
/// search.
pub fn run_search(
    env_config: &EnvConfig,
    base: &EpoConfig,
    space: &SearchSpace,
    trials: usize,
    repeats: usize,
    seed: u64,
) -> Result<SearchReport> {
    if trials == 0 || repeats == 0 {
        return Err(Error::contract("trials and repeats must be >= 1"));
    }
    space.validate()?;

    // One repeat-seed set, shared by every configuration.
    let repeat_seeds: Vec<u64> =
        (0..repeats).map(|r| seeds::derive(seed, &[seeds::STREAM_HYPER, 2, r as u64])).collect();

    let mut rows: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let sample_seed = seeds::derive(seed, &[seeds::STREAM_HYPER, 1, trial as u64]);
            let evo = match sample_config(space, &base.evo, sample_seed) {
                Ok(evo) => evo,
                Err(e) => {
                    return TrialResult {
                        trial,
                        mutation_prob: f64::NAN,
                        elite_count: 0,
                        population_size: 0,
                        per_repeat: vec![],
                        mean_reward: f64::NEG_INFINITY,
                        repeats,
                        env_steps: 0,
                        error: Some(e.to_string()),
                    }
                }
            };
            let config = EpoConfig { evo: evo.clone(), ..base.clone() };
            let mut per_repeat = Vec::with_capacity(repeats);
            let mut env_steps = 0u64;
            let mut error = None;
            for &run_seed in &repeat_seeds {
                match orchestrator::run(env_config, &config, run_seed) {
                    Ok(result) => {
                        let reward = result
                            .best
                            .fitness
                            .map(|f| f.raw)
                            .unwrap_or(f64::NEG_INFINITY);
                        per_repeat.push(reward);
                        env_steps += result.counts.total();
                    }
                    Err(e) => {
                        error = Some(e.to_string());
                        break;
                    }
                }
            }
            let mean_reward = if error.is_some() || per_repeat.is_empty() {
                f64::NEG_INFINITY
            } else {
                stats::mean(&per_repeat)
            };
            TrialResult {
                trial,
                mutation_prob: evo.mutation_prob,
                elite_count: evo.elite_count,
                population_size: evo.population_size,
                per_repeat,
                mean_reward,
                repeats,
                env_steps,
                error,
            }
        })
        .collect();

    let total_steps = rows.iter().map(|r| r.env_steps).sum();
    // Stable sort: equal means keep sampling order (trial index ascending).
    rows.sort_by(|a, b| b.mean_reward.partial_cmp(&a.mean_reward).unwrap_or(std::cmp::Ordering::Equal));
    Ok(SearchReport { leaderboard: rows, total_steps })
}

/// Renders the leaderboard with the fixed column set.
pub fn search_results_csv(report: &SearchReport) -> String {
    let mut out = String::from("trial,mutation_prob,elite_count,population_size,mean_reward,repeats\n");
    for row in &report.leaderboard {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.trial,
            row.mutation_prob,
            row.elite_count,
            row.population_size,
            row.mean_reward,
            row.repeats
        ));
    }
    out
}
