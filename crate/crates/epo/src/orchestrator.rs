//! The hybrid training loop: pre-train a base model with gradients, clone
//! it into a small population, then alternate fitness evaluation, elitism,
//! fitness-weighted crossover, and mutate-or-fine-tune offspring until a
//! step or wall-clock budget runs out.
//!
//! Every environment interaction is charged to a [`SampleLedger`] category
//! (pre-train, fine-tune, evaluation), so the total sample complexity of a
//! run is exact by construction and comparable across methods.
//!
//! Generation phases are barriers: all fitness evaluations run in parallel
//! (results are order-independent because every seed derives from the run
//! seed, generation, and member position), selection is serial, and
//! offspring are built serially so the budget-halt rule — finish the
//! offspring in flight, then stop — has a single unambiguous meaning.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::env::{self, EnvConfig};
use crate::error::{Error, Result};
use crate::evo::{self, EvoConfig, FitnessRecord};
use crate::ledger::{Category, LedgerCounts, SampleLedger};
use crate::nn::{self, NetworkSpec, ParameterVector};
use crate::ppo::{self, PpoConfig};
use crate::seeds;

/// How a member entered the current population.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineageOp {
    /// Clone of the pre-trained (or loaded) base model.
    InitialClone,
    /// Carried over unchanged as an elite.
    EliteCarryover,
    /// Crossover child with Gaussian mutation.
    MutatedOffspring,
    /// Crossover child refined by a short gradient run.
    FinetunedOffspring,
}

impl std::fmt::Display for LineageOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            LineageOp::InitialClone => "initial-clone",
            LineageOp::EliteCarryover => "elite-carryover",
            LineageOp::MutatedOffspring => "mutated-offspring",
            LineageOp::FinetunedOffspring => "finetuned-offspring",
        };
        write!(f, "{tag}")
    }
}

/// Parent ids and the operator that produced a member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lineage {
    pub parents: Vec<usize>,
    pub op: LineageOp,
}

/// One individual in the population.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationMember {
    /// Unique within a run; elites keep their id across generations.
    pub id: usize,
    pub params: ParameterVector,
    /// Latest evaluation, if any (fresh offspring carry `None` until the
    /// next generation evaluates them).
    pub fitness: Option<FitnessRecord>,
    pub lineage: Lineage,
}

/// Step and/or wall-clock limits for a run. At least one must be set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_steps: Option<u64>,
    pub max_seconds: Option<f64>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_steps: Some(50_000), max_seconds: None }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps.is_none() && self.max_seconds.is_none() {
            return Err(Error::config("budget needs max_steps and/or max_seconds"));
        }
        if self.max_steps == Some(0) {
            return Err(Error::config("max_steps must be positive"));
        }
        if matches!(self.max_seconds, Some(s) if s <= 0.0) {
            return Err(Error::config("max_seconds must be positive"));
        }
        Ok(())
    }
}

/// Live budget probe for one run.
pub struct BudgetTracker {
    budget: Budget,
    start: Instant,
}

impl BudgetTracker {
    pub fn start(budget: Budget) -> Self {
        BudgetTracker { budget, start: Instant::now() }
    }

    pub fn exhausted(&self, ledger: &SampleLedger) -> bool {
        let steps_out = self.budget.max_steps.is_some_and(|m| ledger.total() >= m);
        let time_out = self
            .budget
            .max_seconds
            .is_some_and(|m| self.start.elapsed().as_secs_f64() >= m);
        steps_out || time_out
    }
}

/// Which evaluation episodes fitness is measured on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalSeedPolicy {
    /// All members of a generation share one episode-seed set; the set
    /// changes every generation (default).
    #[default]
    SharedPerGeneration,
    /// One episode-seed set for the whole run. Makes elite fitness exactly
    /// reproducible, so the best fitness is non-decreasing.
    FixedAcrossGenerations,
}

impl std::fmt::Display for EvalSeedPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalSeedPolicy::SharedPerGeneration => write!(f, "shared-per-generation"),
            EvalSeedPolicy::FixedAcrossGenerations => write!(f, "fixed-across-generations"),
        }
    }
}

impl std::str::FromStr for EvalSeedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared-per-generation" => Ok(EvalSeedPolicy::SharedPerGeneration),
            "fixed-across-generations" => Ok(EvalSeedPolicy::FixedAcrossGenerations),
            other => Err(Error::config(format!(
                "unknown eval seed policy '{other}' \
                 (shared-per-generation|fixed-across-generations)"
            ))),
        }
    }
}

/// Full configuration of a hybrid run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpoConfig {
    pub evo: EvoConfig,
    pub ppo: PpoConfig,
    /// Policy/value network hidden-layer widths.
    pub hidden: Vec<usize>,
    /// Gradient steps for the base model before cloning.
    pub pretrain_timesteps: u64,
    /// Gradient steps per fine-tuned offspring (one rollout of this length).
    pub finetune_timesteps: u64,
    /// Episodes averaged into each fitness evaluation.
    pub fitness_episodes: usize,
    /// Population bootstrap size (clones of the base model).
    pub initial_clones: usize,
    pub budget: Budget,
    pub eval_seed_policy: EvalSeedPolicy,
    /// Evaluate fitness with sampled actions (true) or greedy ones.
    pub eval_stochastic: bool,
}

impl Default for EpoConfig {
    fn default() -> Self {
        EpoConfig {
            evo: EvoConfig::default(),
            ppo: PpoConfig::default(),
            hidden: vec![32, 32],
            pretrain_timesteps: 30_000,
            finetune_timesteps: 500,
            fitness_episodes: 5,
            initial_clones: 2,
            budget: Budget::default(),
            eval_seed_policy: EvalSeedPolicy::default(),
            eval_stochastic: true,
        }
    }
}

impl EpoConfig {
    pub fn validate(&self) -> Result<()> {
        self.evo.validate()?;
        self.ppo.validate()?;
        self.budget.validate()?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be >= 1"));
        }
        if self.fitness_episodes == 0 {
            return Err(Error::config("fitness_episodes must be >= 1"));
        }
        if self.initial_clones == 0 || self.initial_clones > self.evo.population_size {
            return Err(Error::config("need 1 <= initial_clones <= population_size"));
        }
        Ok(())
    }

    /// The gradient config used for offspring fine-tuning: one update cycle
    /// whose rollout is exactly the fine-tune budget, so the ledger charge
    /// per offspring is exactly `finetune_timesteps`.
    fn finetune_ppo(&self) -> PpoConfig {
        PpoConfig { rollout_len: self.finetune_timesteps as usize, ..self.ppo.clone() }
    }
}

/// Fitness of one member within a generation report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberFitness {
    pub id: usize,
    pub raw: f64,
    pub shifted: f64,
}

/// Everything observable about one generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    /// Evaluated fitness of the incoming population, in member order.
    pub fitness: Vec<MemberFitness>,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub elite_ids: Vec<usize>,
    pub mutated_offspring: usize,
    pub finetuned_offspring: usize,
    /// Ledger movement caused by this generation.
    pub ledger_delta: LedgerCounts,
    /// Cumulative ledger after this generation.
    pub ledger_after: LedgerCounts,
    /// False when the budget halted the offspring fill early; offspring
    /// counts then sum to less than `population_size − |elites|`.
    pub completed: bool,
}

/// Outcome of a full run.
#[derive(Clone, Debug)]
pub struct RunResult {
    /// Member with the highest last-evaluated fitness.
    pub best: PopulationMember,
    pub history: Vec<GenerationReport>,
    pub counts: LedgerCounts,
}

/// Pre-trains the base model (when configured) and clones it into the
/// bootstrap population.
pub fn initialize(
    env_config: &EnvConfig,
    spec: &NetworkSpec,
    config: &EpoConfig,
    run_seed: u64,
    ledger: &SampleLedger,
    next_id: &mut usize,
) -> Result<Vec<PopulationMember>> {
    let mut base = nn::init_params(spec, &mut seeds::rng(run_seed, &[seeds::STREAM_INIT]));
    if config.pretrain_timesteps > 0 {
        let out = ppo::train(
            &base,
            spec,
            env_config,
            config.pretrain_timesteps,
            &config.ppo,
            run_seed,
            ledger,
            Category::Pretrain,
        )?;
        base = out.params;
    }
    Ok(clone_population(&base, config.initial_clones, next_id))
}

fn clone_population(
    base: &ParameterVector,
    clones: usize,
    next_id: &mut usize,
) -> Vec<PopulationMember> {
    (0..clones)
        .map(|_| {
            let id = *next_id;
            *next_id += 1;
            PopulationMember {
                id,
                params: base.clone(),
                fitness: None,
                lineage: Lineage { parents: vec![], op: LineageOp::InitialClone },
            }
        })
        .collect()
}

/// Loads a checkpoint as the base model in place of pre-training (transfer
/// seeding). The checkpoint's network must match the environment's
/// dimensions; the run then uses the checkpoint's architecture.
pub fn load_population_seed(
    path: &Path,
    env_config: &EnvConfig,
    config: &EpoConfig,
    next_id: &mut usize,
) -> Result<(NetworkSpec, Vec<PopulationMember>)> {
    let checkpoint = Checkpoint::load(path)?;
    let id = env_config.validate()?;
    if checkpoint.spec.obs_dim != id.obs_dim() || checkpoint.spec.num_actions != id.num_actions()
    {
        return Err(Error::Checkpoint(format!(
            "checkpoint network ({} obs, {} actions) does not fit environment '{}' \
             ({} obs, {} actions)",
            checkpoint.spec.obs_dim,
            checkpoint.spec.num_actions,
            env_config.id,
            id.obs_dim(),
            id.num_actions()
        )));
    }
    let base = checkpoint.params()?;
    let population = clone_population(&base, config.initial_clones, next_id);
    Ok((checkpoint.spec, population))
}

/// One generation: evaluate everyone on shared episode seeds, keep the
/// elites, and top the population back up with crossover offspring that are
/// each either mutated (probability m) or fine-tuned.
#[allow(clippy::too_many_arguments)]
pub fn run_generation(
    mut population: Vec<PopulationMember>,
    env_config: &EnvConfig,
    spec: &NetworkSpec,
    config: &EpoConfig,
    run_seed: u64,
    generation: usize,
    ledger: &SampleLedger,
    budget: &BudgetTracker,
    next_id: &mut usize,
) -> Result<(Vec<PopulationMember>, GenerationReport)> {
    if population.is_empty() {
        return Err(Error::contract("generation over an empty population"));
    }
    let before = ledger.counts();
    let gen = generation as u64;

    // Phase 1: parallel fitness evaluation on generation-shared seeds.
    let eval_seed = match config.eval_seed_policy {
        EvalSeedPolicy::SharedPerGeneration => seeds::derive(run_seed, &[seeds::STREAM_EVAL, gen]),
        EvalSeedPolicy::FixedAcrossGenerations => seeds::derive(run_seed, &[seeds::STREAM_EVAL]),
    };
    let reports = population
        .par_iter()
        .map(|member| {
            env::evaluate_policy(
                &member.params,
                spec,
                env_config,
                config.fitness_episodes,
                eval_seed,
                config.eval_stochastic,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    ledger.charge(Category::Eval, reports.iter().map(|r| r.env_steps).sum());

    let raws: Vec<f64> = reports.iter().map(|r| r.mean_reward).collect();
    let shifted = evo::shift_fitness(&raws);
    for ((member, report), &shift) in population.iter_mut().zip(&reports).zip(&shifted) {
        member.fitness = Some(FitnessRecord {
            raw: report.mean_reward,
            shifted: shift,
            episodes: config.fitness_episodes,
            env_steps: report.env_steps,
        });
    }
    let fitness: Vec<MemberFitness> = population
        .iter()
        .zip(&shifted)
        .map(|(m, &s)| MemberFitness { id: m.id, raw: m.fitness.unwrap().raw, shifted: s })
        .collect();
    let best_fitness = raws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_fitness = raws.iter().sum::<f64>() / raws.len() as f64;

    // Phase 2: elitism (serial).
    let elite_indices = evo::select_elites(&raws, config.evo.elite_count);
    let mut next_population: Vec<PopulationMember> = elite_indices
        .iter()
        .map(|&i| PopulationMember {
            id: population[i].id,
            params: population[i].params.clone(),
            fitness: population[i].fitness,
            lineage: Lineage {
                parents: vec![population[i].id],
                op: LineageOp::EliteCarryover,
            },
        })
        .collect();
    let elite_ids: Vec<usize> = next_population.iter().map(|m| m.id).collect();

    // Phase 3: offspring fill. The budget is checked between offspring, so
    // an exhausted budget finishes the offspring in flight and halts.
    let needed = config.evo.population_size.saturating_sub(next_population.len());
    let mut mutated = 0usize;
    let mut finetuned = 0usize;
    let mut completed = true;
    for k in 0..needed {
        if budget.exhausted(ledger) {
            completed = false;
            break;
        }
        let mut rng = seeds::rng(run_seed, &[seeds::STREAM_CROSSOVER, gen, k as u64]);
        let (a, b) = if elite_indices.len() >= 2 {
            // Uniform without replacement within the pair.
            let a = rng.random_range(0..elite_indices.len());
            let mut b = rng.random_range(0..elite_indices.len() - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        } else {
            (0, 0) // self-pairing during the bootstrap
        };
        let parent1 = &population[elite_indices[a]];
        let parent2 = &population[elite_indices[b]];
        let f1 = parent1.fitness.unwrap().shifted;
        let f2 = parent2.fitness.unwrap().shifted;
        let alpha = evo::crossover_alpha(f1, f2, config.evo.eps)?;
        let child = evo::crossover(&parent1.params, &parent2.params, alpha)?;

        let (params, op) = if rng.random::<f64>() < config.evo.mutation_prob {
            let scaling = evo::mutation_scaling(f1, f2, config.evo.eps, config.evo.scaling_clamp)?;
            let seed = seeds::derive(run_seed, &[seeds::STREAM_MUTATE, gen, k as u64]);
            mutated += 1;
            (evo::mutate(&child, scaling, config.evo.sigma_mode, seed)?, LineageOp::MutatedOffspring)
        } else {
            finetuned += 1;
            let params = if config.finetune_timesteps > 0 {
                let seed = seeds::derive(run_seed, &[seeds::STREAM_ROLLOUT, gen, k as u64]);
                ppo::train(
                    &child,
                    spec,
                    env_config,
                    config.finetune_timesteps,
                    &config.finetune_ppo(),
                    seed,
                    ledger,
                    Category::Finetune,
                )?
                .params
            } else {
                child // pure-evolution ablation: the branch is a no-op
            };
            (params, LineageOp::FinetunedOffspring)
        };
        let id = *next_id;
        *next_id += 1;
        next_population.push(PopulationMember {
            id,
            params,
            fitness: None,
            lineage: Lineage { parents: vec![parent1.id, parent2.id], op },
        });
    }

    let after = ledger.counts();
    let report = GenerationReport {
        generation,
        fitness,
        best_fitness,
        mean_fitness,
        elite_ids,
        mutated_offspring: mutated,
        finetuned_offspring: finetuned,
        ledger_delta: after.delta(&before),
        ledger_after: after,
        completed,
    };
    Ok((next_population, report))
}

fn run_inner(
    env_config: &EnvConfig,
    spec: &NetworkSpec,
    config: &EpoConfig,
    run_seed: u64,
    mut population: Vec<PopulationMember>,
    ledger: SampleLedger,
    mut next_id: usize,
) -> Result<RunResult> {
    let budget = BudgetTracker::start(config.budget);
    let mut history = Vec::new();
    let mut generation = 0usize;
    let best = loop {
        let (next, report) = run_generation(
            population,
            env_config,
            spec,
            config,
            run_seed,
            generation,
            &ledger,
            &budget,
            &mut next_id,
        )?;
        let halted = !report.completed;
        history.push(report);
        population = next;
        generation += 1;
        if halted || budget.exhausted(&ledger) {
            // Elites lead the population in descending fitness, so the head
            // is the best member by the most recent evaluation.
            break population[0].clone();
        }
    };
    Ok(RunResult { best, history, counts: ledger.counts() })
}

/// Full run: pre-train, clone, then generations until the budget is
/// exhausted. Even a budget too small for one generation performs a single
/// evaluation pass so a best member is always defined.
pub fn run(env_config: &EnvConfig, config: &EpoConfig, run_seed: u64) -> Result<RunResult> {
    config.validate()?;
    let spec = env_config.network_spec(config.hidden.clone())?;
    let ledger = SampleLedger::new();
    let mut next_id = 0usize;
    let population = initialize(env_config, &spec, config, run_seed, &ledger, &mut next_id)?;
    run_inner(env_config, &spec, config, run_seed, population, ledger, next_id)
}

/// Like [`run`] but seeds the population from a checkpoint instead of
/// pre-training (transfer runs). The pre-train ledger category stays 0.
pub fn run_from_checkpoint(
    env_config: &EnvConfig,
    config: &EpoConfig,
    run_seed: u64,
    checkpoint_path: &Path,
) -> Result<RunResult> {
    config.validate()?;
    let mut next_id = 0usize;
    let (spec, population) =
        load_population_seed(checkpoint_path, env_config, config, &mut next_id)?;
    let ledger = SampleLedger::new();
    run_inner(env_config, &spec, config, run_seed, population, ledger, next_id)
}

/// Fixed column set of `history.csv`.
pub const HISTORY_HEADER: &str =
    "generation,best_fitness,mean_fitness,steps_pretrain,steps_finetune,steps_eval,steps_total";

/// Renders the per-generation history with the fixed column set.
pub fn history_csv(history: &[GenerationReport]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for report in history {
        let l = report.ledger_after;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            report.generation,
            report.best_fitness,
            report.mean_fitness,
            l.steps_pretrain,
            l.steps_finetune,
            l.steps_eval,
            l.total()
        ));
    }
    out
}

/// Writes the standard run directory: `config.snapshot` (the caller's
/// resolved configuration rendering), `history.csv`, `best.checkpoint`,
/// and `ledger.json`.
pub fn save_run_dir(
    dir: &Path,
    snapshot: &str,
    env_config: &EnvConfig,
    spec: &NetworkSpec,
    run_seed: u64,
    result: &RunResult,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.snapshot"), snapshot)?;
    std::fs::write(dir.join("history.csv"), history_csv(&result.history))?;
    std::fs::write(dir.join("ledger.json"), serde_json::to_string_pretty(&result.counts)?)?;
    let checkpoint =
        Checkpoint::new(&env_config.id, run_seed, spec, &result.best.params, result.counts)?;
    checkpoint.save(&dir.join("best.checkpoint"))?;
    Ok(())
}
