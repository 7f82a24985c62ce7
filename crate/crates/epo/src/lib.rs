//! Evolutionary policy optimization for small discrete-action control tasks.
//!
//! This crate combines two ways of improving a policy network and accounts
//! for every environment interaction either one consumes:
//!
//! * gradient-based updates with a clipped-surrogate policy-gradient
//!   objective ([`ppo`]), and
//! * population-based variation — fitness-weighted crossover and adaptive
//!   Gaussian mutation — over the flattened parameter vectors of that same
//!   network ([`evo`]).
//!
//! The [`orchestrator`] ties the two together: a single base policy is
//! pre-trained with the gradient learner, cloned into a small population,
//! and then evolved generation by generation, where each non-elite offspring
//! is either mutated or briefly fine-tuned. A [`ledger::SampleLedger`]
//! records exactly how many environment steps went to pre-training,
//! fine-tuning, and fitness evaluation, so runs with different mechanisms
//! can be compared on consumed samples rather than wall clock alone.
//!
//! Everything is deterministic given a seed: environments, rollouts,
//! evolutionary draws, and hyperparameter search all derive their streams
//! from one root seed (see [`seeds`]), and repeated runs write byte-identical
//! history files.
//!
//! # Examples
//!
//! The `examples/` directory is the best starting point. Each file is
//! runnable with `cargo run --example <name>`:
//!
//! * `train_ppo` — pure gradient training on cart-pole with diagnostics.
//! * `run_epo` — the full evolutionary loop on the dense catch task.
//! * `pure_evolution` — ablation: variation only, no gradient steps.
//! * `evolution_operators` — elite selection, crossover, and mutation on
//!   hand-built fitness records.
//! * `sample_accounting` — how the ledger splits a run's step budget.
//! * `compare_methods` — sample-to-threshold comparison between two runs.
//! * `hyperparameter_search` — random search over the variation knobs.
//! * `checkpoints` — saving, reloading, and evaluating a trained policy.
//!
//! The same capabilities are exposed as a thin command-line tool (`epo`)
//! with `run`, `compare`, `hypersearch`, and `eval-checkpoint` subcommands.

pub mod checkpoint;
pub mod env;
pub mod error;
pub mod evo;
pub mod experiment;
pub mod hyper;
pub mod ledger;
pub mod nn;
pub mod orchestrator;
pub mod ppo;
pub mod seeds;
pub mod stats;

pub use error::{Error, Result};
