//! Head-to-head comparison on the dense catch task: the hybrid loop versus
//! evolution alone under the same step budget. Reports the standard
//! comparison table, then the sample-to-threshold view — how many
//! environment steps each method needed before its population mean fitness
//! first cleared a target.
//!
//! Run with: `cargo run --release --example compare_methods`

use epo::env::{self, EnvConfig, EnvId};
use epo::experiment::{self, MethodSummary};
use epo::orchestrator::{self, Budget, EpoConfig, RunResult};
use epo::seeds;

const BUDGET: u64 = 20_000;
const THRESHOLD: f64 = 0.6; // population mean fitness: most members catching most balls

fn epo_config() -> EpoConfig {
    EpoConfig {
        pretrain_timesteps: 4_096,
        finetune_timesteps: 256,
        budget: Budget { max_steps: Some(BUDGET), max_seconds: None },
        ..EpoConfig::default()
    }
}

fn pure_evo_config() -> EpoConfig {
    let mut config = epo_config();
    config.pretrain_timesteps = 0;
    config.finetune_timesteps = 0;
    config.evo.mutation_prob = 1.0;
    config.evo.population_size = 12;
    config.evo.elite_count = 4;
    config
}

/// Steps consumed up to the first generation whose population mean fitness
/// clears the threshold; `None` when the run never gets there.
fn steps_to_threshold(result: &RunResult) -> Option<u64> {
    result
        .history
        .iter()
        .find(|r| r.mean_fitness >= THRESHOLD)
        .map(|r| r.ledger_after.total())
}

fn summarize(label: &str, env_config: &EnvConfig, result: &RunResult) -> epo::Result<MethodSummary> {
    let spec = env_config.network_spec(vec![32, 32])?;
    let eval = env::evaluate_policy(
        &result.best.params,
        &spec,
        env_config,
        20,
        seeds::derive(env_config.seed, &[seeds::STREAM_POST_EVAL]),
        false,
    )?;
    Ok(MethodSummary {
        label: label.to_string(),
        env_id: env_config.id.clone(),
        mean_reward: eval.mean_reward,
        best_reward: eval.per_episode.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        total_samples: result.counts.total() as f64,
    })
}

fn main() -> epo::Result<()> {
    let seed = 1;
    let env_config = EnvConfig::new(EnvId::CatchDense, seed);
    println!("comparing on {} with a {BUDGET}-step budget (seed {seed})", env_config.id);

    let epo_run = orchestrator::run(&env_config, &epo_config(), seed)?;
    let evo_run = orchestrator::run(&env_config, &pure_evo_config(), seed)?;

    let methods = vec![
        summarize("epo", &env_config, &epo_run)?,
        summarize("pure-evo", &env_config, &evo_run)?,
    ];
    println!();
    print!("{}", experiment::compare_table(&methods)?);
    println!();

    println!("samples to first population mean fitness >= {THRESHOLD}:");
    let rows = [("epo", &epo_run), ("pure-evo", &evo_run)].map(|(label, run)| {
        let reached = steps_to_threshold(run);
        match reached {
            Some(steps) => println!("  {label:<9} {steps} steps"),
            None => println!("  {label:<9} not reached within the budget"),
        }
        (label, reached, run.counts.total())
    });

    let [(a_label, a_steps, _), (b_label, b_steps, b_total)] = rows;
    match (a_steps, b_steps) {
        (Some(a), Some(b)) => println!(
            "  {a_label} used {:.1}% fewer samples than {b_label}",
            experiment::sample_reduction(a as f64, b as f64),
        ),
        // The laggard's consumed budget bounds its samples-to-threshold
        // from below, so the reduction is a floor, not an estimate.
        (Some(a), None) => println!(
            "  {a_label} used at least {:.1}% fewer samples than {b_label} \
             (which had not reached the target when its budget ran out)",
            experiment::sample_reduction(a as f64, b_total as f64),
        ),
        _ => println!("  {a_label} did not reach the target; no reduction to report"),
    }
    Ok(())
}
