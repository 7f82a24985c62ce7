//! Ablation: evolution with no gradient steps at all. The population starts
//! from random clones, and every non-elite offspring is produced by
//! fitness-weighted crossover plus adaptive Gaussian mutation — no
//! pre-training, no fine-tuning. Compare the step counts and fitness curve
//! against `run_epo`.
//!
//! Run with: `cargo run --release --example pure_evolution`

use epo::env::{EnvConfig, EnvId};
use epo::evo::EvoConfig;
use epo::orchestrator::{self, Budget, EpoConfig};

fn main() -> epo::Result<()> {
    let seed = 1;
    let env_config = EnvConfig::new(EnvId::CatchDense, seed);

    let config = EpoConfig {
        // No gradient phases: the whole budget goes to fitness evaluation.
        pretrain_timesteps: 0,
        finetune_timesteps: 0,
        // Mutation-only offspring lean on a larger population for diversity.
        evo: EvoConfig {
            population_size: 12,
            elite_count: 4,
            mutation_prob: 1.0,
            ..EvoConfig::default()
        },
        budget: Budget { max_steps: Some(12_000), max_seconds: None },
        ..EpoConfig::default()
    };

    println!(
        "pure evolution on {}: population {}, elites {}, budget {} steps",
        env_config.id,
        config.evo.population_size,
        config.evo.elite_count,
        config.budget.max_steps.unwrap(),
    );

    let result = orchestrator::run(&env_config, &config, seed)?;

    println!();
    println!("{:>4}  {:>9}  {:>9}  {:>10}", "gen", "best_fit", "mean_fit", "cum_steps");
    for report in &result.history {
        println!(
            "{:>4}  {:>9.3}  {:>9.3}  {:>10}",
            report.generation, report.best_fitness, report.mean_fitness, report.ledger_after.total(),
        );
    }

    println!();
    println!(
        "best fitness {:.3} after {} generations and {} steps",
        result.history.iter().map(|r| r.best_fitness).fold(f64::NEG_INFINITY, f64::max),
        result.history.len(),
        result.counts.total(),
    );
    // Every consumed step was a fitness evaluation — the ledger proves the
    // ablation did what it claims.
    assert_eq!(result.counts.steps_pretrain, 0);
    assert_eq!(result.counts.steps_finetune, 0);
    assert_eq!(result.counts.steps_eval, result.counts.total());
    println!("ledger confirms: all {} steps were evaluation", result.counts.steps_eval);
    Ok(())
}
