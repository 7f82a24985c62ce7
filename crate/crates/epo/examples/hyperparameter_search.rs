//! Random search over the variation hyperparameters — mutation probability,
//! elite count, and population size — with every trial scored by full
//! (scaled-down) runs on repeated seeds. The same seeds score every trial,
//! so the leaderboard differences come from the hyperparameters alone.
//!
//! Run with: `cargo run --release --example hyperparameter_search`

use epo::env::{EnvConfig, EnvId};
use epo::hyper::{self, SearchSpace};
use epo::orchestrator::{Budget, EpoConfig};

fn main() -> epo::Result<()> {
    let seed = 3;
    let env_config = EnvConfig::new(EnvId::CatchDense, seed);

    // Each trial runs this base configuration with sampled variation knobs.
    let base = EpoConfig {
        pretrain_timesteps: 3_072,
        finetune_timesteps: 128,
        budget: Budget { max_steps: Some(8_000), max_seconds: None },
        ..EpoConfig::default()
    };

    let space = SearchSpace {
        mutation_prob: (0.1, 0.5),
        elite_count: (2, 4),
        population_size: (6, 10),
    };
    let (trials, repeats) = (6, 2);
    println!(
        "searching {trials} trials x {repeats} repeats on {} ({} steps each)",
        env_config.id,
        base.budget.max_steps.unwrap(),
    );

    let report = hyper::run_search(&env_config, &base, &space, trials, repeats, seed)?;

    println!();
    println!(
        "{:>5}  {:>13}  {:>6}  {:>10}  {:>11}",
        "trial", "mutation_prob", "elites", "population", "mean_reward"
    );
    for trial in &report.leaderboard {
        println!(
            "{:>5}  {:>13.3}  {:>6}  {:>10}  {:>11.3}",
            trial.trial,
            trial.mutation_prob,
            trial.elite_count,
            trial.population_size,
            trial.mean_reward,
        );
        if let Some(error) = &trial.error {
            println!("       failed: {error}");
        }
    }

    let best = &report.leaderboard[0];
    println!();
    println!(
        "best configuration: mutation_prob={:.3} elites={} population={} (mean reward {:.3})",
        best.mutation_prob, best.elite_count, best.population_size, best.mean_reward,
    );
    println!("search consumed {} environment steps in total", report.total_steps);
    Ok(())
}
