//! Checkpoint round trips: train a small policy, save it with its network
//! shape and sample-ledger provenance, reload it bit-exactly, and continue
//! evolving from it (the transfer-learning entry point).
//!
//! Run with: `cargo run --release --example checkpoints`

use epo::checkpoint::Checkpoint;
use epo::env::{self, EnvConfig, EnvId};
use epo::experiment;
use epo::ledger::{Category, SampleLedger};
use epo::nn;
use epo::orchestrator::{self, Budget, EpoConfig};
use epo::ppo::{self, PpoConfig};
use epo::seeds;

fn main() -> epo::Result<()> {
    let seed = 5;
    let env_config = EnvConfig::new(EnvId::CatchDense, seed);
    let spec = env_config.network_spec(vec![32, 32])?;
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("policy.checkpoint");

    // Train briefly, then persist the result with its ledger.
    let params = nn::init_params(&spec, &mut seeds::rng(seed, &[seeds::STREAM_INIT]));
    let ledger = SampleLedger::new();
    let config = PpoConfig { rollout_len: 256, ..PpoConfig::default() };
    let out =
        ppo::train(&params, &spec, &env_config, 4_096, &config, seed, &ledger, Category::Pretrain)?;
    Checkpoint::new(&env_config.id, seed, &spec, &out.params, ledger.counts())?.save(&path)?;
    println!("saved {} after {} training steps", path.display(), ledger.counts().total());

    // Reload and verify the parameters survived byte-for-byte.
    let loaded = Checkpoint::load(&path)?;
    assert_eq!(loaded.values, out.params.values, "parameters must round-trip exactly");
    assert_eq!(loaded.env_id, env_config.id);
    println!(
        "reloaded: {} parameters for {} (trained for {} steps, seed {})",
        loaded.values.len(),
        loaded.env_id,
        loaded.ledger.total(),
        loaded.seed,
    );

    // The loaded policy behaves identically to the one we saved.
    let eval_seed = seeds::derive(seed, &[seeds::STREAM_POST_EVAL]);
    let saved_eval = env::evaluate_policy(&out.params, &spec, &env_config, 10, eval_seed, false)?;
    let loaded_eval =
        env::evaluate_policy(&loaded.params()?, &loaded.spec, &env_config, 10, eval_seed, false)?;
    assert_eq!(saved_eval.per_episode, loaded_eval.per_episode);
    println!("greedy evaluation matches: mean reward {:.3}", loaded_eval.mean_reward);

    // The one-line report used by the `eval-checkpoint` CLI subcommand.
    println!("{}", experiment::eval_checkpoint(&path, 10, 0, false, None)?);

    // Transfer: seed a fresh evolutionary run from the checkpoint instead
    // of pre-training from scratch.
    let epo_config = EpoConfig {
        finetune_timesteps: 128,
        budget: Budget { max_steps: Some(4_000), max_seconds: None },
        ..EpoConfig::default()
    };
    let result = orchestrator::run_from_checkpoint(&env_config, &epo_config, 11, &path)?;
    println!(
        "transfer run: {} generations, best fitness {:.3}, {} steps (none of them pre-training)",
        result.history.len(),
        result.history.iter().map(|r| r.best_fitness).fold(f64::NEG_INFINITY, f64::max),
        result.counts.total(),
    );
    assert_eq!(result.counts.steps_pretrain, 0);
    Ok(())
}
