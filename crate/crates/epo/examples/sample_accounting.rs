//! Exact sample accounting. Every environment step a run consumes is
//! charged to exactly one ledger category (pre-train, fine-tune, fitness
//! evaluation, or gradient baseline). To show the books balance, this
//! example wires an independent probe into the environment config — a
//! counter incremented by every `step()` call anywhere in the run — and
//! checks it against the ledger total.
//!
//! Run with: `cargo run --release --example sample_accounting`

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use epo::env::{EnvConfig, EnvId};
use epo::orchestrator::{self, Budget, EpoConfig};

fn main() -> epo::Result<()> {
    let seed = 4;
    let probe = Arc::new(AtomicU64::new(0));
    let mut env_config = EnvConfig::new(EnvId::CatchSparse, seed);
    env_config.probe = Some(Arc::clone(&probe));

    let config = EpoConfig {
        pretrain_timesteps: 1_024,
        finetune_timesteps: 128,
        budget: Budget { max_steps: Some(5_000), max_seconds: None },
        ..EpoConfig::default()
    };

    let result = orchestrator::run(&env_config, &config, seed)?;
    let counts = result.counts;
    let total = counts.total();

    println!("sample ledger after an epo run on {}:", env_config.id);
    println!();
    let rows = [
        ("pre-train", counts.steps_pretrain),
        ("fine-tune", counts.steps_finetune),
        ("fitness evaluation", counts.steps_eval),
        ("gradient baseline", counts.steps_baseline),
    ];
    for (label, steps) in rows {
        println!("  {label:<20} {steps:>7}  ({:>5.1}%)", 100.0 * steps as f64 / total as f64);
    }
    println!("  {:<20} {total:>7}", "total");
    println!();

    // The probe counted raw `step()` calls with no knowledge of the ledger.
    let observed = probe.load(Ordering::Relaxed);
    println!("independent probe counted {observed} environment steps");
    assert_eq!(observed, total, "ledger must match the probe exactly");
    println!("ledger total matches the probe exactly");

    // Per-generation deltas reconcile against the final books too.
    let summed: u64 = result.history.iter().map(|r| r.ledger_delta.total()).sum();
    let pretrain_delta = result.history[0].ledger_after.total() - result.history[0].ledger_delta.total();
    assert_eq!(summed + pretrain_delta, total);
    println!(
        "{} generations account for {summed} steps; pre-training for the remaining {pretrain_delta}",
        result.history.len(),
    );
    Ok(())
}
