//! The full hybrid loop on the dense catch task: pre-train one base policy,
//! clone it into a population, then alternate fitness evaluation, elite
//! selection, and offspring creation (crossover followed by mutation or a
//! short burst of fine-tuning) until the step budget runs out.
//!
//! Run with: `cargo run --release --example run_epo`

use epo::env::{EnvConfig, EnvId};
use epo::orchestrator::{self, Budget, EpoConfig};

fn main() -> epo::Result<()> {
    let seed = 1;
    let env_config = EnvConfig::new(EnvId::CatchDense, seed);

    // A scaled-down configuration so the run finishes in seconds: a short
    // pre-train phase and a tight overall budget. Everything else keeps its
    // defaults (population 8, 3 elites, mutation probability 0.3).
    let config = EpoConfig {
        pretrain_timesteps: 6_144,
        finetune_timesteps: 256,
        budget: Budget { max_steps: Some(16_000), max_seconds: None },
        ..EpoConfig::default()
    };

    println!(
        "epo on {}: pre-train {} steps, population {}, elites {}, budget {} steps",
        env_config.id,
        config.pretrain_timesteps,
        config.evo.population_size,
        config.evo.elite_count,
        config.budget.max_steps.unwrap(),
    );

    let result = orchestrator::run(&env_config, &config, seed)?;

    println!();
    println!(
        "{:>4}  {:>9}  {:>9}  {:>7}  {:>9}  {:>6}  {:>10}",
        "gen", "best_fit", "mean_fit", "mutated", "finetuned", "steps", "cum_steps"
    );
    for report in &result.history {
        println!(
            "{:>4}  {:>9.3}  {:>9.3}  {:>7}  {:>9}  {:>6}  {:>10}",
            report.generation,
            report.best_fitness,
            report.mean_fitness,
            report.mutated_offspring,
            report.finetuned_offspring,
            report.ledger_delta.total(),
            report.ledger_after.total(),
        );
    }

    let last = result.history.last().expect("at least one generation");
    println!();
    println!(
        "halted after generation {} ({})",
        last.generation,
        if last.completed { "budget reached between generations" } else { "budget hit mid-generation" }
    );
    println!(
        "best member: id {} via {} (fitness {:.3})",
        result.best.id,
        result.best.lineage.op,
        result.best.fitness.map(|f| f.raw).unwrap_or(f64::NAN),
    );
    println!(
        "ledger: pretrain {} + finetune {} + eval {} = {} steps",
        result.counts.steps_pretrain,
        result.counts.steps_finetune,
        result.counts.steps_eval,
        result.counts.total(),
    );
    Ok(())
}
