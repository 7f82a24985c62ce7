//! Experiment harness: resolves flat key=value configurations into runs,
//! executes them across seeds in parallel, and writes the standard output
//! tree (per-seed run directories, cross-seed aggregate, comparison and
//! sweep tables).
//!
//! Configuration uses flat dotted keys (`evo.mutation_prob=0.3`), one per
//! line, `#` for comments. Precedence is defaults < config file < CLI
//! overrides, applied in order. The resolved configuration is written to
//! `config.snapshot` in a canonical rendering from which the run can be
//! re-executed bit-exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::env::{self, EnvConfig, EnvId};
use crate::error::{Error, Result};
use crate::hyper::{self, SearchSpace};
use crate::ledger::{self, Category, RunSummary, SampleLedger};
use crate::nn;
use crate::orchestrator::{self, EpoConfig};
use crate::ppo;
use crate::seeds;
use crate::stats;

/// Experiment flavor; decides what each seed executes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Gradient-only baseline (all steps charged to the baseline category).
    Ppo,
    /// The full hybrid loop.
    #[default]
    Epo,
    /// Hybrid without pre-training.
    EpoNopt,
    /// Evolution only: no pre-training, no fine-tuning.
    PureEvo,
    /// Hybrid seeded from a checkpoint instead of pre-training.
    EpoTl,
    /// One hybrid experiment per pre-train duration.
    SweepPretrain,
    /// One hybrid experiment per fine-tune duration.
    SweepFinetune,
    /// Random search over the population hyperparameters.
    Hypersearch,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Ppo,
        Mode::Epo,
        Mode::EpoNopt,
        Mode::PureEvo,
        Mode::EpoTl,
        Mode::SweepPretrain,
        Mode::SweepFinetune,
        Mode::Hypersearch,
    ];
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Mode::Ppo => "ppo",
            Mode::Epo => "epo",
            Mode::EpoNopt => "epo-nopt",
            Mode::PureEvo => "pure-evo",
            Mode::EpoTl => "epo-tl",
            Mode::SweepPretrain => "sweep-pretrain",
            Mode::SweepFinetune => "sweep-finetune",
            Mode::Hypersearch => "hypersearch",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::config(format!("unknown mode '{s}' (ppo|epo|epo-nopt|pure-evo|epo-tl|sweep-pretrain|sweep-finetune|hypersearch)")))
    }
}

/// Fully resolved experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub env: EnvConfig,
    /// Run seeds; each gets its own run directory and its own environment
    /// seed.
    pub seeds: Vec<u64>,
    pub epo: EpoConfig,
    pub search: SearchSpace,
    pub search_trials: usize,
    pub search_repeats: usize,
    /// Post-training evaluation episodes behind the summary statistics.
    pub eval_episodes: usize,
    /// Seed checkpoint for transfer runs.
    pub checkpoint: Option<PathBuf>,
    /// Sweep points; mode-specific defaults when empty.
    pub sweep_values: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Epo,
            env: EnvConfig::new(EnvId::Cartpole, 0),
            seeds: vec![1, 2, 3],
            epo: EpoConfig::default(),
            search: SearchSpace::default(),
            search_trials: 8,
            search_repeats: 3,
            eval_episodes: 20,
            checkpoint: None,
            sweep_values: vec![],
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|part| parse_value(key, part.trim())).collect()
}

fn parse_opt_u64(key: &str, value: &str) -> Result<Option<u64>> {
    if value == "none" {
        return Ok(None);
    }
    parse_value(key, value).map(Some)
}

fn parse_opt_f64(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "none" {
        return Ok(None);
    }
    parse_value(key, value).map(Some)
}

impl ExperimentConfig {
    /// Applies one `key=value` pair. Unknown keys and malformed values are
    /// configuration errors naming the key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = value.parse()?,
            // Selecting an environment resets its per-id defaults (horizon,
            // no-op window) while keeping the seed; apply env.* keys after.
            "env" => {
                let id: EnvId = value.parse()?;
                let seed = self.env.seed;
                let scripted_len = self.env.scripted_len;
                self.env = EnvConfig { scripted_len, ..EnvConfig::new(id, seed) };
            }
            "env.seed" => self.env.seed = parse_value(key, value)?,
            "env.horizon" => self.env.horizon = parse_value(key, value)?,
            "env.noop_min" => self.env.noop_min = parse_value(key, value)?,
            "env.noop_max" => self.env.noop_max = parse_value(key, value)?,
            "env.scripted_len" => self.env.scripted_len = parse_value(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "eval_episodes" => self.eval_episodes = parse_value(key, value)?,
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "sweep.values" => self.sweep_values = parse_list(key, value)?,
            "epo.pretrain_timesteps" => self.epo.pretrain_timesteps = parse_value(key, value)?,
            "epo.finetune_timesteps" => self.epo.finetune_timesteps = parse_value(key, value)?,
            "epo.fitness_episodes" => self.epo.fitness_episodes = parse_value(key, value)?,
            "epo.initial_clones" => self.epo.initial_clones = parse_value(key, value)?,
            "epo.eval_seed_policy" => self.epo.eval_seed_policy = value.parse()?,
            "epo.eval_stochastic" => self.epo.eval_stochastic = parse_value(key, value)?,
            "epo.hidden" => self.epo.hidden = parse_list(key, value)?,
            "budget.max_steps" => self.epo.budget.max_steps = parse_opt_u64(key, value)?,
            "budget.max_seconds" => self.epo.budget.max_seconds = parse_opt_f64(key, value)?,
            "evo.mutation_prob" => self.epo.evo.mutation_prob = parse_value(key, value)?,
            "evo.elite_count" => self.epo.evo.elite_count = parse_value(key, value)?,
            "evo.population_size" => self.epo.evo.population_size = parse_value(key, value)?,
            "evo.eps" => self.epo.evo.eps = parse_value(key, value)?,
            "evo.scaling_clamp_lo" => self.epo.evo.scaling_clamp.0 = parse_value(key, value)?,
            "evo.scaling_clamp_hi" => self.epo.evo.scaling_clamp.1 = parse_value(key, value)?,
            "evo.sigma_mode" => self.epo.evo.sigma_mode = value.parse()?,
            "ppo.clip" => self.epo.ppo.clip = parse_value(key, value)?,
            "ppo.gamma" => self.epo.ppo.gamma = parse_value(key, value)?,
            "ppo.lambda" => self.epo.ppo.lambda = parse_value(key, value)?,
            "ppo.epochs" => self.epo.ppo.epochs = parse_value(key, value)?,
            "ppo.minibatch" => self.epo.ppo.minibatch = parse_value(key, value)?,
            "ppo.rollout_len" => self.epo.ppo.rollout_len = parse_value(key, value)?,
            "ppo.vf_coef" => self.epo.ppo.vf_coef = parse_value(key, value)?,
            "ppo.ent_coef" => self.epo.ppo.ent_coef = parse_value(key, value)?,
            "ppo.lr" => self.epo.ppo.lr = parse_value(key, value)?,
            "ppo.max_grad_norm" => self.epo.ppo.max_grad_norm = parse_value(key, value)?,
            "search.mutation_prob_lo" => self.search.mutation_prob.0 = parse_value(key, value)?,
            "search.mutation_prob_hi" => self.search.mutation_prob.1 = parse_value(key, value)?,
            "search.elite_lo" => self.search.elite_count.0 = parse_value(key, value)?,
            "search.elite_hi" => self.search.elite_count.1 = parse_value(key, value)?,
            "search.population_lo" => self.search.population_size.0 = parse_value(key, value)?,
            "search.population_hi" => self.search.population_size.1 = parse_value(key, value)?,
            "search.trials" => self.search_trials = parse_value(key, value)?,
            "search.repeats" => self.search_repeats = parse_value(key, value)?,
            other => return Err(Error::config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Canonical flat rendering of the full resolved state; parsing it back
    /// reproduces this configuration exactly.
    pub fn snapshot(&self) -> String {
        let mut map = BTreeMap::new();
        map.insert("mode", self.mode.to_string());
        map.insert("env", self.env.id.clone());
        map.insert("env.seed", self.env.seed.to_string());
        map.insert("env.horizon", self.env.horizon.to_string());
        map.insert("env.noop_min", self.env.noop_min.to_string());
        map.insert("env.noop_max", self.env.noop_max.to_string());
        map.insert("env.scripted_len", self.env.scripted_len.to_string());
        map.insert("seeds", join(&self.seeds));
        map.insert("eval_episodes", self.eval_episodes.to_string());
        if let Some(path) = &self.checkpoint {
            map.insert("checkpoint", path.display().to_string());
        }
        if !self.sweep_values.is_empty() {
            map.insert("sweep.values", join(&self.sweep_values));
        }
        map.insert("epo.pretrain_timesteps", self.epo.pretrain_timesteps.to_string());
        map.insert("epo.finetune_timesteps", self.epo.finetune_timesteps.to_string());
        map.insert("epo.fitness_episodes", self.epo.fitness_episodes.to_string());
        map.insert("epo.initial_clones", self.epo.initial_clones.to_string());
        map.insert("epo.eval_seed_policy", self.epo.eval_seed_policy.to_string());
        map.insert("epo.eval_stochastic", self.epo.eval_stochastic.to_string());
        map.insert("epo.hidden", join(&self.epo.hidden));
        map.insert(
            "budget.max_steps",
            self.epo.budget.max_steps.map_or("none".into(), |v| v.to_string()),
        );
        map.insert(
            "budget.max_seconds",
            self.epo.budget.max_seconds.map_or("none".into(), |v| v.to_string()),
        );
        map.insert("evo.mutation_prob", self.epo.evo.mutation_prob.to_string());
        map.insert("evo.elite_count", self.epo.evo.elite_count.to_string());
        map.insert("evo.population_size", self.epo.evo.population_size.to_string());
        map.insert("evo.eps", self.epo.evo.eps.to_string());
        map.insert("evo.scaling_clamp_lo", self.epo.evo.scaling_clamp.0.to_string());
        map.insert("evo.scaling_clamp_hi", self.epo.evo.scaling_clamp.1.to_string());
        map.insert("evo.sigma_mode", self.epo.evo.sigma_mode.to_string());
        map.insert("ppo.clip", self.epo.ppo.clip.to_string());
        map.insert("ppo.gamma", self.epo.ppo.gamma.to_string());
        map.insert("ppo.lambda", self.epo.ppo.lambda.to_string());
        map.insert("ppo.epochs", self.epo.ppo.epochs.to_string());
        map.insert("ppo.minibatch", self.epo.ppo.minibatch.to_string());
        map.insert("ppo.rollout_len", self.epo.ppo.rollout_len.to_string());
        map.insert("ppo.vf_coef", self.epo.ppo.vf_coef.to_string());
        map.insert("ppo.ent_coef", self.epo.ppo.ent_coef.to_string());
        map.insert("ppo.lr", self.epo.ppo.lr.to_string());
        map.insert("ppo.max_grad_norm", self.epo.ppo.max_grad_norm.to_string());
        map.insert("search.mutation_prob_lo", self.search.mutation_prob.0.to_string());
        map.insert("search.mutation_prob_hi", self.search.mutation_prob.1.to_string());
        map.insert("search.elite_lo", self.search.elite_count.0.to_string());
        map.insert("search.elite_hi", self.search.elite_count.1.to_string());
        map.insert("search.population_lo", self.search.population_size.0.to_string());
        map.insert("search.population_hi", self.search.population_size.1.to_string());
        map.insert("search.trials", self.search_trials.to_string());
        map.insert("search.repeats", self.search_repeats.to_string());

        let mut out = String::from("# resolved experiment configuration\n");
        for (key, value) in map {
            out.push_str(&format!("{key}={value}\n"));
        }
        out
    }

    /// The sweep points for the current mode (explicit values, or the
    /// mode's defaults).
    pub fn sweep_points(&self) -> Vec<u64> {
        if !self.sweep_values.is_empty() {
            return self.sweep_values.clone();
        }
        match self.mode {
            Mode::SweepPretrain => vec![0, 10_000, 20_000, 30_000, 40_000],
            Mode::SweepFinetune => vec![0, 500, 1_000],
            _ => vec![],
        }
    }

    /// Mode-specific validation; runs before any environment step.
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.epo.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must list at least one run seed"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes must be >= 1"));
        }
        match self.mode {
            Mode::Ppo => {
                if self.epo.budget.max_steps.is_none() {
                    return Err(Error::config("mode=ppo requires budget.max_steps"));
                }
            }
            Mode::EpoTl => {
                if self.checkpoint.is_none() {
                    return Err(Error::config("mode=epo-tl requires checkpoint=<path>"));
                }
            }
            Mode::Hypersearch => {
                self.search.validate()?;
                if self.search_trials == 0 || self.search_repeats == 0 {
                    return Err(Error::config("search.trials and search.repeats must be >= 1"));
                }
            }
            Mode::SweepPretrain | Mode::SweepFinetune if self.sweep_points().is_empty() => {
                return Err(Error::config("sweep.values must list at least one value"));
            }
            _ => {}
        }
        Ok(())
    }
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Parses flat `key=value` text: one pair per line, `#` comments, blank
/// lines ignored. Later duplicates override earlier ones downstream.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(format!(
                "config line {} is not key=value: '{raw}'",
                number + 1
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Builds the resolved configuration: defaults, then the config file, then
/// override pairs (CLI flags and `--set`), then mode side effects.
pub fn resolve(file: Option<&str>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    if let Some(text) = file {
        for (key, value) in parse_config_text(text)? {
            config.apply(&key, &value)?;
        }
    }
    for (key, value) in overrides {
        config.apply(key, value)?;
    }
    // Ablation modes pin their defining fields so the resolved snapshot
    // states them explicitly.
    match config.mode {
        Mode::PureEvo => {
            config.epo.pretrain_timesteps = 0;
            config.epo.finetune_timesteps = 0;
        }
        Mode::EpoNopt => config.epo.pretrain_timesteps = 0,
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

/// Per-seed run record saved as `summary.json`; also the unit the compare
/// tool consumes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub env_id: String,
    pub mode: String,
    pub seed: u64,
    pub summary: RunSummary,
}

/// Executes one seed of a run-mode experiment into `dir`.
fn run_one_seed(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunRecord> {
    let env_config = EnvConfig { seed, ..config.env.clone() };
    let (spec, best_params, history, counts) = match config.mode {
        Mode::Ppo => {
            let spec = env_config.network_spec(config.epo.hidden.clone())?;
            let params = nn::init_params(&spec, &mut seeds::rng(seed, &[seeds::STREAM_INIT]));
            let total = config
                .epo
                .budget
                .max_steps
                .ok_or_else(|| Error::config("mode=ppo requires budget.max_steps"))?;
            let sample_ledger = SampleLedger::new();
            let out = ppo::train(
                &params,
                &spec,
                &env_config,
                total,
                &config.epo.ppo,
                seed,
                &sample_ledger,
                Category::Baseline,
            )?;
            let mut history = String::from(orchestrator::HISTORY_HEADER);
            history.push('\n');
            for row in &out.updates {
                history.push_str(&format!(
                    "{},{},{},0,0,0,{}\n",
                    row.update, row.best_reward, row.mean_reward, row.timestep
                ));
            }
            (spec, out.params, history, sample_ledger.counts())
        }
        Mode::EpoTl => {
            let path = config
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::config("mode=epo-tl requires checkpoint=<path>"))?;
            let spec = Checkpoint::load(path)?.spec;
            let result = orchestrator::run_from_checkpoint(&env_config, &config.epo, seed, path)?;
            let history = orchestrator::history_csv(&result.history);
            (spec, result.best.params, history, result.counts)
        }
        Mode::Epo | Mode::EpoNopt | Mode::PureEvo | Mode::SweepPretrain | Mode::SweepFinetune => {
            let spec = env_config.network_spec(config.epo.hidden.clone())?;
            let result = orchestrator::run(&env_config, &config.epo, seed)?;
            let history = orchestrator::history_csv(&result.history);
            (spec, result.best.params, history, result.counts)
        }
        Mode::Hypersearch => {
            return Err(Error::contract("hypersearch has no per-seed runs"));
        }
    };

    // Post-training evaluation: reporting only, never charged to the run's
    // sample ledger (the ledger measures training interactions).
    let eval = env::evaluate_policy(
        &best_params,
        &spec,
        &env_config,
        config.eval_episodes,
        seeds::derive(seed, &[seeds::STREAM_POST_EVAL]),
        config.epo.eval_stochastic,
    )?;
    let summary = ledger::summarize(&eval.per_episode, counts)?;
    let record =
        RunRecord { env_id: env_config.id.clone(), mode: config.mode.to_string(), seed, summary };

    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.snapshot"), config.snapshot())?;
    std::fs::write(dir.join("history.csv"), &history)?;
    std::fs::write(dir.join("ledger.json"), serde_json::to_string_pretty(&counts)?)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&record)?)?;
    Checkpoint::new(&env_config.id, seed, &spec, &best_params, counts)?
        .save(&dir.join("best.checkpoint"))?;
    Ok(record)
}

/// Runs every seed (in parallel) under `out` and writes `aggregate.csv`.
fn run_seed_set(config: &ExperimentConfig, out: &Path) -> Result<Vec<RunRecord>> {
    std::fs::create_dir_all(out)?;
    let records: Vec<RunRecord> = config
        .seeds
        .par_iter()
        .map(|&seed| run_one_seed(config, seed, &out.join(format!("seed-{seed}"))))
        .collect::<Result<_>>()?;
    std::fs::write(out.join("aggregate.csv"), aggregate_csv(&records))?;
    Ok(records)
}

/// Cross-seed table: one row per seed plus `mean` and `ci95_half_width`
/// summary rows (Student-t interval).
pub fn aggregate_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("seed,mean_reward,best_reward,total_steps\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.seed, r.summary.mean_reward, r.summary.best_reward, r.summary.total_samples
        ));
    }
    let means: Vec<f64> = records.iter().map(|r| r.summary.mean_reward).collect();
    let bests: Vec<f64> = records.iter().map(|r| r.summary.best_reward).collect();
    let steps: Vec<f64> = records.iter().map(|r| r.summary.total_samples as f64).collect();
    out.push_str(&format!(
        "mean,{},{},{}\n",
        stats::mean(&means),
        stats::mean(&bests),
        stats::mean(&steps)
    ));
    out.push_str(&format!(
        "ci95_half_width,{},{},{}\n",
        stats::ci95_half_width(&means),
        stats::ci95_half_width(&bests),
        stats::ci95_half_width(&steps)
    ));
    out
}

/// Runs the resolved experiment into `out` and returns a short report.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<String> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.snapshot"), config.snapshot())?;

    match config.mode {
        Mode::Hypersearch => {
            let seed = config.seeds[0];
            let report = hyper::run_search(
                &config.env,
                &config.epo,
                &config.search,
                config.search_trials,
                config.search_repeats,
                seed,
            )?;
            std::fs::write(out.join("search_results.csv"), hyper::search_results_csv(&report))?;
            let top = &report.leaderboard[0];
            Ok(format!(
                "hypersearch: {} trials x {} repeats, {} env steps; best m={:.3} E={} P={} \
                 (mean reward {:.3})\nresults: {}",
                config.search_trials,
                config.search_repeats,
                report.total_steps,
                top.mutation_prob,
                top.elite_count,
                top.population_size,
                top.mean_reward,
                out.join("search_results.csv").display()
            ))
        }
        Mode::SweepPretrain | Mode::SweepFinetune => {
            let field = match config.mode {
                Mode::SweepPretrain => "pretrain_timesteps",
                _ => "finetune_timesteps",
            };
            let mut sweep_rows = String::from("value,mean_reward,ci95_half_width,mean_total_steps\n");
            let mut lines = Vec::new();
            for value in config.sweep_points() {
                let mut point = config.clone();
                match config.mode {
                    Mode::SweepPretrain => point.epo.pretrain_timesteps = value,
                    _ => point.epo.finetune_timesteps = value,
                }
                let dir = out.join(format!("{field}-{value}"));
                let records = run_seed_set(&point, &dir)?;
                let means: Vec<f64> = records.iter().map(|r| r.summary.mean_reward).collect();
                let steps: Vec<f64> =
                    records.iter().map(|r| r.summary.total_samples as f64).collect();
                sweep_rows.push_str(&format!(
                    "{},{},{},{}\n",
                    value,
                    stats::mean(&means),
                    stats::ci95_half_width(&means),
                    stats::mean(&steps)
                ));
                lines.push(format!("{field}={value}: mean reward {:.3}", stats::mean(&means)));
            }
            std::fs::write(out.join("sweep.csv"), &sweep_rows)?;
            Ok(format!("sweep over {field} complete\n{}", lines.join("\n")))
        }
        _ => {
            let records = run_seed_set(config, out)?;
            let means: Vec<f64> = records.iter().map(|r| r.summary.mean_reward).collect();
            Ok(format!(
                "mode={} env={} seeds={}: mean reward {:.3} ± {:.3} (95% CI), aggregate: {}",
                config.mode,
                config.env.id,
                records.len(),
                stats::mean(&means),
                stats::ci95_half_width(&means),
                out.join("aggregate.csv").display()
            ))
        }
    }
}

/// Relative sample-efficiency of A over B: `(1 − samples_A / samples_B) · 100`.
pub fn sample_reduction(samples_a: f64, samples_b: f64) -> f64 {
    (1.0 - samples_a / samples_b) * 100.0
}

/// One comparable method: a run directory reduced to its headline numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub label: String,
    pub env_id: String,
    pub mean_reward: f64,
    pub best_reward: f64,
    pub total_samples: f64,
}

/// Loads a run directory (a per-seed directory with `summary.json`, or an
/// experiment root whose `seed-*` children have them) into one summary row.
pub fn load_method_summary(dir: &Path) -> Result<MethodSummary> {
    let label = dir.display().to_string();
    let single = dir.join("summary.json");
    let records: Vec<RunRecord> = if single.exists() {
        vec![serde_json::from_str(&std::fs::read_to_string(single)?)?]
    } else {
        let mut found = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let summary = path.join("summary.json");
            if summary.exists() {
                found.push((path.clone(), summary));
            }
        }
        found.sort();
        found
            .into_iter()
            .map(|(_, s)| Ok(serde_json::from_str(&std::fs::read_to_string(s)?)?))
            .collect::<Result<Vec<RunRecord>>>()?
    };
    if records.is_empty() {
        return Err(Error::config(format!("no summary.json under '{label}'")));
    }
    let env_id = records[0].env_id.clone();
    if records.iter().any(|r| r.env_id != env_id) {
        return Err(Error::config(format!("mixed environments under '{label}'")));
    }
    Ok(MethodSummary {
        label,
        env_id,
        mean_reward: stats::mean(
            &records.iter().map(|r| r.summary.mean_reward).collect::<Vec<_>>(),
        ),
        best_reward: records
            .iter()
            .map(|r| r.summary.best_reward)
            .fold(f64::NEG_INFINITY, f64::max),
        total_samples: stats::mean(
            &records.iter().map(|r| r.summary.total_samples as f64).collect::<Vec<_>>(),
        ),
    })
}

/// Renders the comparison table plus the relative sample-efficiency of the
/// first method against each other one.
pub fn compare_table(methods: &[MethodSummary]) -> Result<String> {
    if methods.len() < 2 {
        return Err(Error::config("compare needs at least two run directories"));
    }
    let env_id = &methods[0].env_id;
    for m in methods {
        if &m.env_id != env_id {
            return Err(Error::config(format!(
                "incompatible environments: '{}' is {} but '{}' is {}",
                methods[0].label, env_id, m.label, m.env_id
            )));
        }
    }
    let mut out = String::from("method,env,mean_reward,best_reward,total_samples\n");
    for m in methods {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.label, m.env_id, m.mean_reward, m.best_reward, m.total_samples
        ));
    }
    let a = &methods[0];
    for b in &methods[1..] {
        out.push_str(&format!(
            "sample-reduction {} vs {}: {:.1}%\n",
            a.label,
            b.label,
            sample_reduction(a.total_samples, b.total_samples)
        ));
    }
    Ok(out)
}

/// Compares run directories (first is the reference method).
pub fn compare(dirs: &[PathBuf]) -> Result<String> {
    let methods =
        dirs.iter().map(|d| load_method_summary(d)).collect::<Result<Vec<_>>>()?;
    compare_table(&methods)
}

/// Loads a checkpoint and reports its policy's evaluation statistics on its
/// own environment (or `env_override`).
pub fn eval_checkpoint(
    path: &Path,
    episodes: usize,
    seed: u64,
    stochastic: bool,
    env_override: Option<&str>,
) -> Result<String> {
    let checkpoint = Checkpoint::load(path)?;
    let env_id: EnvId = env_override.unwrap_or(&checkpoint.env_id).parse()?;
    let env_config = EnvConfig::new(env_id, seed);
    let params = checkpoint.params()?;
    if checkpoint.spec.obs_dim != env_id.obs_dim()
        || checkpoint.spec.num_actions != env_id.num_actions()
    {
        return Err(Error::Checkpoint(format!(
            "checkpoint network does not fit environment '{env_id}'"
        )));
    }
    let report = env::evaluate_policy(
        &params,
        &checkpoint.spec,
        &env_config,
        episodes,
        seeds::derive(seed, &[seeds::STREAM_POST_EVAL]),
        stochastic,
    )?;
    let best = report.per_episode.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(format!(
        "checkpoint {} on {}: mean reward {:.3} best {} over {} episodes ({} env steps, {})",
        path.display(),
        env_id,
        report.mean_reward,
        best,
        episodes,
        report.env_steps,
        if stochastic { "stochastic" } else { "greedy" }
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::LedgerCounts;

    fn scripted_pairs() -> Vec<(String, String)> {
        [
            ("env", "scripted"),
            ("env.scripted_len", "5"),
            ("seeds", "1,2"),
            ("eval_episodes", "4"),
            ("epo.hidden", "4"),
            ("epo.pretrain_timesteps", "0"),
            ("epo.finetune_timesteps", "40"),
            ("epo.fitness_episodes", "2"),
            ("evo.population_size", "4"),
            ("evo.elite_count", "2"),
            ("budget.max_steps", "600"),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }

    #[test]
    fn config_text_parses_comments_and_rejects_bad_lines() {
        let pairs = parse_config_text(
            "# comment\n\n  evo.mutation_prob = 0.4  # trailing\nmode=epo\n",
        )
        .unwrap();
        assert_eq!(
            pairs,
            vec![
                ("evo.mutation_prob".to_string(), "0.4".to_string()),
                ("mode".to_string(), "epo".to_string())
            ]
        );
        let err = parse_config_text("this is not a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn unknown_keys_and_bad_values_name_the_key()  {
        let mut config = ExperimentConfig::default();
        let err = config.apply("evo.mutation_probability", "0.3").unwrap_err();
        assert!(err.to_string().contains("evo.mutation_probability"), "{err}");
        let err = config.apply("evo.mutation_prob", "zebra").unwrap_err();
        assert!(err.to_string().contains("evo.mutation_prob"), "{err}");
        let err = config.apply("mode", "dqn").unwrap_err();
        assert!(err.to_string().contains("dqn"), "{err}");
    }

    #[test]
    fn overrides_take_precedence_over_file_values() {
        let file = "evo.mutation_prob=0.2\nbudget.max_steps=1000\n";
        let overrides = vec![("evo.mutation_prob".to_string(), "0.45".to_string())];
        let config = resolve(Some(file), &overrides).unwrap();
        assert_eq!(config.epo.evo.mutation_prob, 0.45);
        assert_eq!(config.epo.budget.max_steps, Some(1000));
    }

    #[test]
    fn mode_effects_pin_ablation_fields_in_the_snapshot() {
        let config =
            resolve(None, &[("mode".to_string(), "pure-evo".to_string())]).unwrap();
        assert_eq!(config.epo.pretrain_timesteps, 0);
        assert_eq!(config.epo.finetune_timesteps, 0);
        assert!(config.snapshot().contains("epo.pretrain_timesteps=0\n"));
        assert!(config.snapshot().contains("epo.finetune_timesteps=0\n"));

        let config = resolve(None, &[("mode".to_string(), "epo-nopt".to_string())]).unwrap();
        assert_eq!(config.epo.pretrain_timesteps, 0);
        assert_eq!(config.epo.finetune_timesteps, 500);
    }

    #[test]
    fn snapshot_round_trips_exactly() {
        let mut overrides = scripted_pairs();
        overrides.push(("evo.sigma_mode".to_string(), "var".to_string()));
        overrides.push(("epo.eval_seed_policy".to_string(), "fixed-across-generations".to_string()));
        overrides.push(("budget.max_seconds".to_string(), "1.5".to_string()));
        overrides.push(("ppo.lr".to_string(), "0.00025".to_string()));
        let config = resolve(None, &overrides).unwrap();
        let reparsed = resolve(Some(&config.snapshot()), &[]).unwrap();
        assert_eq!(config, reparsed);
        // And the rendering itself is a fixed point.
        assert_eq!(config.snapshot(), reparsed.snapshot());
    }

    #[test]
    fn mode_validation_names_missing_requirements() {
        let err = resolve(
            None,
            &[
                ("mode".to_string(), "ppo".to_string()),
                ("budget.max_steps".to_string(), "none".to_string()),
                ("budget.max_seconds".to_string(), "5".to_string()),
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("budget.max_steps"), "{err}");

        let err = resolve(None, &[("mode".to_string(), "epo-tl".to_string())]).unwrap_err();
        assert!(err.to_string().contains("checkpoint"), "{err}");
    }

    #[test]
    fn epo_experiment_writes_the_full_output_tree() {
        let dir = tempfile::tempdir().unwrap();
        let config = resolve(None, &scripted_pairs()).unwrap();
        let report = run_experiment(&config, dir.path()).unwrap();
        assert!(report.contains("mode=epo"), "{report}");

        assert!(dir.path().join("config.snapshot").exists());
        let aggregate = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert!(aggregate.starts_with("seed,mean_reward,best_reward,total_steps\n"));
        assert_eq!(aggregate.lines().count(), 1 + 2 + 2); // header + seeds + mean + ci
        for seed in [1u64, 2] {
            let seed_dir = dir.path().join(format!("seed-{seed}"));
            for file in
                ["config.snapshot", "history.csv", "ledger.json", "summary.json", "best.checkpoint"]
            {
                assert!(seed_dir.join(file).exists(), "missing {file} for seed {seed}");
            }
            let record: RunRecord = serde_json::from_str(
                &std::fs::read_to_string(seed_dir.join("summary.json")).unwrap(),
            )
            .unwrap();
            assert_eq!(record.seed, seed);
            assert_eq!(record.env_id, "scripted");
            assert_eq!(record.summary.eval_episodes, 4);
        }
    }

    #[test]
    fn experiments_rerun_identically_from_their_snapshot() {
        let first = tempfile::tempdir().unwrap();
        let config = resolve(None, &scripted_pairs()).unwrap();
        run_experiment(&config, first.path()).unwrap();

        let snapshot = std::fs::read_to_string(first.path().join("config.snapshot")).unwrap();
        let reloaded = resolve(Some(&snapshot), &[]).unwrap();
        let second = tempfile::tempdir().unwrap();
        run_experiment(&reloaded, second.path()).unwrap();

        for seed in [1u64, 2] {
            let a = std::fs::read_to_string(
                first.path().join(format!("seed-{seed}")).join("history.csv"),
            )
            .unwrap();
            let b = std::fs::read_to_string(
                second.path().join(format!("seed-{seed}")).join("history.csv"),
            )
            .unwrap();
            assert_eq!(a, b, "seed {seed} history diverged");
        }
        let a = std::fs::read_to_string(first.path().join("aggregate.csv")).unwrap();
        let b = std::fs::read_to_string(second.path().join("aggregate.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ppo_mode_charges_everything_to_the_baseline_category() {
        let dir = tempfile::tempdir().unwrap();
        let mut overrides = scripted_pairs();
        overrides.push(("mode".to_string(), "ppo".to_string()));
        overrides.push(("ppo.rollout_len".to_string(), "100".to_string()));
        overrides.push(("ppo.epochs".to_string(), "2".to_string()));
        overrides.push(("seeds".to_string(), "3".to_string()));
        let config = resolve(None, &overrides).unwrap();
        run_experiment(&config, dir.path()).unwrap();

        let counts: LedgerCounts = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("seed-3").join("ledger.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(counts.steps_baseline, 600);
        assert_eq!(counts.steps_pretrain, 0);
        assert_eq!(counts.steps_finetune, 0);
        assert_eq!(counts.steps_eval, 0);
        let history =
            std::fs::read_to_string(dir.path().join("seed-3").join("history.csv")).unwrap();
        assert!(history.starts_with(orchestrator::HISTORY_HEADER));
        assert_eq!(history.lines().count(), 1 + 6); // 600 steps / 100-step rollouts
    }

    #[test]
    fn sweep_writes_one_block_per_value_and_a_summary_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut overrides = scripted_pairs();
        overrides.push(("mode".to_string(), "sweep-finetune".to_string()));
        overrides.push(("sweep.values".to_string(), "0,40".to_string()));
        let config = resolve(None, &overrides).unwrap();
        run_experiment(&config, dir.path()).unwrap();

        let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(sweep.starts_with("value,mean_reward,ci95_half_width,mean_total_steps\n"));
        assert_eq!(sweep.lines().count(), 3);
        for value in [0u64, 40] {
            let block = dir.path().join(format!("finetune_timesteps-{value}"));
            assert!(block.join("aggregate.csv").exists());
            assert!(block.join("seed-1").join("summary.json").exists());
        }
    }

    #[test]
    fn compare_reproduces_the_reference_reduction_percentages() {
        assert!((sample_reduction(0.82e6, 1.12e6) - 26.785714285714285).abs() < 1e-9);
        assert_eq!(format!("{:.1}%", sample_reduction(0.82e6, 1.12e6)), "26.8%");
        assert_eq!(format!("{:.1}%", sample_reduction(0.82e6, 1.92e6)), "57.3%");
        assert_eq!(sample_reduction(5.0, 5.0), 0.0);

        let make = |label: &str, samples: f64| MethodSummary {
            label: label.to_string(),
            env_id: "catch-sparse".to_string(),
            mean_reward: 1.0,
            best_reward: 2.0,
            total_samples: samples,
        };
        let table =
            compare_table(&[make("epo", 0.82e6), make("ppo", 1.12e6), make("evo", 1.92e6)])
                .unwrap();
        assert!(table.contains("sample-reduction epo vs ppo: 26.8%"), "{table}");
        assert!(table.contains("sample-reduction epo vs evo: 57.3%"), "{table}");

        let mut other = make("x", 1.0);
        other.env_id = "cartpole".to_string();
        let err = compare_table(&[make("epo", 1.0), other]).unwrap_err();
        assert!(err.to_string().contains("incompatible"), "{err}");
    }

    #[test]
    fn compare_reads_run_directories() {
        let dir = tempfile::tempdir().unwrap();
        let config = resolve(None, &scripted_pairs()).unwrap();
        run_experiment(&config, &dir.path().join("epo")).unwrap();

        let mut overrides = scripted_pairs();
        overrides.push(("mode".to_string(), "pure-evo".to_string()));
        let config = resolve(None, &overrides).unwrap();
        run_experiment(&config, &dir.path().join("evo")).unwrap();

        // Experiment roots aggregate across seeds; per-seed dirs load singly.
        let table =
            compare(&[dir.path().join("epo"), dir.path().join("evo")]).unwrap();
        assert!(table.starts_with("method,env,mean_reward,best_reward,total_samples\n"));
        assert!(table.contains("sample-reduction"), "{table}");
        let single = compare(&[
            dir.path().join("epo").join("seed-1"),
            dir.path().join("evo").join("seed-1"),
        ])
        .unwrap();
        assert!(single.lines().count() >= 4);
    }

    #[test]
    fn transfer_mode_seeds_from_a_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let config = resolve(None, &scripted_pairs()).unwrap();
        run_experiment(&config, &dir.path().join("source")).unwrap();
        let checkpoint = dir.path().join("source").join("seed-1").join("best.checkpoint");

        let mut overrides = scripted_pairs();
        overrides.push(("mode".to_string(), "epo-tl".to_string()));
        overrides.push(("checkpoint".to_string(), checkpoint.display().to_string()));
        overrides.push(("seeds".to_string(), "9".to_string()));
        let config = resolve(None, &overrides).unwrap();
        run_experiment(&config, &dir.path().join("transfer")).unwrap();

        let counts: LedgerCounts = serde_json::from_str(
            &std::fs::read_to_string(
                dir.path().join("transfer").join("seed-9").join("ledger.json"),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(counts.steps_pretrain, 0);
        assert!(counts.steps_eval > 0);
    }

    #[test]
    fn hypersearch_mode_writes_the_leaderboard() {
        let dir = tempfile::tempdir().unwrap();
        let mut overrides = scripted_pairs();
        overrides.push(("mode".to_string(), "hypersearch".to_string()));
        overrides.push(("search.trials".to_string(), "2".to_string()));
        overrides.push(("search.repeats".to_string(), "1".to_string()));
        overrides.push(("search.population_lo".to_string(), "4".to_string()));
        overrides.push(("search.population_hi".to_string(), "5".to_string()));
        overrides.push(("search.elite_lo".to_string(), "2".to_string()));
        overrides.push(("search.elite_hi".to_string(), "2".to_string()));
        let config = resolve(None, &overrides).unwrap();
        let report = run_experiment(&config, dir.path()).unwrap();
        assert!(report.contains("best m="), "{report}");
        let csv = std::fs::read_to_string(dir.path().join("search_results.csv")).unwrap();
        assert!(csv.starts_with("trial,mutation_prob,elite_count,population_size,mean_reward,repeats\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn checkpoint_evaluation_reports_reward_statistics() {
        let dir = tempfile::tempdir().unwrap();
        let config = resolve(None, &scripted_pairs()).unwrap();
        run_experiment(&config, dir.path()).unwrap();
        let path = dir.path().join("seed-1").join("best.checkpoint");
        let report = eval_checkpoint(&path, 5, 0, false, None).unwrap();
        assert!(report.contains("mean reward"), "{report}");
        assert!(report.contains("greedy"), "{report}");
        // Dimension mismatch against an override environment is rejected.
        let err = eval_checkpoint(&path, 5, 0, false, Some("cartpole")).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err:?}");
    }
}
