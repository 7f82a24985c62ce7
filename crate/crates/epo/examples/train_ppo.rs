//! Pure gradient training on cart-pole: collect fixed-length rollouts,
//! estimate advantages, take clipped-surrogate updates, and watch the
//! rolling episode reward climb.
//!
//! Run with: `cargo run --release --example train_ppo`

use epo::env::{self, EnvConfig, EnvId};
use epo::ledger::{Category, SampleLedger};
use epo::nn;
use epo::ppo::{self, PpoConfig};
use epo::seeds;

fn main() -> epo::Result<()> {
    let seed = 7;
    let env_config = EnvConfig::new(EnvId::Cartpole, seed);
    let spec = env_config.network_spec(vec![32, 32])?;
    let params = nn::init_params(&spec, &mut seeds::rng(seed, &[seeds::STREAM_INIT]));

    // Evaluate the untrained policy first so the improvement is visible.
    // Evaluation samples actions from the policy distribution — the same
    // quantity the surrogate objective optimizes.
    let eval_seed = seeds::derive(seed, &[seeds::STREAM_POST_EVAL]);
    let before = env::evaluate_policy(&params, &spec, &env_config, 20, eval_seed, true)?;

    let config = PpoConfig::default();
    let ledger = SampleLedger::new();
    println!("training on {} for 20480 environment steps", env_config.id);
    println!("{:>6}  {:>8}  {:>11}  {:>9}  {:>8}  {:>7}", "update", "timestep", "mean_reward", "clip_frac", "entropy", "loss");
    let out = ppo::train(
        &params,
        &spec,
        &env_config,
        20_480,
        &config,
        seed,
        &ledger,
        Category::Baseline,
    )?;
    for row in out.updates.iter().step_by(5).chain(out.updates.last()) {
        println!(
            "{:>6}  {:>8}  {:>11.2}  {:>9.3}  {:>8.4}  {:>7.4}",
            row.update, row.timestep, row.mean_reward, row.clip_fraction, row.entropy, row.loss
        );
    }

    let after = env::evaluate_policy(&out.params, &spec, &env_config, 20, eval_seed, true)?;
    println!();
    println!("steps charged to the ledger: {}", ledger.counts().total());
    println!("mean episode reward, stochastic policy: {:.1} -> {:.1}", before.mean_reward, after.mean_reward);
    let greedy = env::evaluate_policy(&out.params, &spec, &env_config, 20, eval_seed, false)?;
    println!("mean episode reward, greedy readout:    {:.1}", greedy.mean_reward);
    Ok(())
}
