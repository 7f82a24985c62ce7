//! Exact environment-interaction accounting.
//!
//! Sample complexity is the headline statistic of every comparison this
//! crate produces, so interaction counting is centralised here: every
//! environment step anywhere in the system is charged to exactly one
//! [`Category`] of a [`SampleLedger`]. The ledger is the arbiter — runs
//! are compared on `total()`, and an instrumented-environment test in the
//! acceptance suite asserts that no step escapes it.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a batch of environment steps came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    /// Gradient pre-training of the base model before cloning.
    Pretrain,
    /// Gradient fine-tuning of offspring inside the generational loop.
    Finetune,
    /// Fitness-evaluation episodes.
    Eval,
    /// Plain gradient-baseline runs (no population involved).
    Baseline,
}

impl Category {
    /// All categories, in ledger-column order.
    pub const ALL: [Category; 4] = [
        Category::Pretrain,
        Category::Finetune,
        Category::Eval,
        Category::Baseline,
    ];
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Category::Pretrain => "pretrain",
            Category::Finetune => "finetune",
            Category::Eval => "eval",
            Category::Baseline => "baseline",
        };
        f.write_str(name)
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Category::Pretrain),
            "finetune" => Ok(Category::Finetune),
            "eval" => Ok(Category::Eval),
            "baseline" => Ok(Category::Baseline),
            other => Err(Error::contract(format!("unknown ledger category `{other}`"))),
        }
    }
}

/// Thread-safe step counter, one cell per [`Category`].
///
/// `charge` is the only mutating entry point; it is an atomic increment, so
/// concurrent fine-tunes and evaluations never lose counts. Reads take a
/// [`LedgerCounts`] snapshot.
#[derive(Debug, Default)]
pub struct SampleLedger {
    pretrain: AtomicU64,
    finetune: AtomicU64,
    eval: AtomicU64,
    baseline: AtomicU64,
}

impl SampleLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resumes accounting from a snapshot (checkpoint restart).
    pub fn from_counts(counts: LedgerCounts) -> Self {
        SampleLedger {
            pretrain: AtomicU64::new(counts.steps_pretrain),
            finetune: AtomicU64::new(counts.steps_finetune),
            eval: AtomicU64::new(counts.steps_eval),
            baseline: AtomicU64::new(counts.steps_baseline),
        }
    }

    fn cell(&self, category: Category) -> &AtomicU64 {
        match category {
            Category::Pretrain => &self.pretrain,
            Category::Finetune => &self.finetune,
            Category::Eval => &self.eval,
            Category::Baseline => &self.baseline,
        }
    }

    /// Records `steps` environment interactions under `category`.
    /// Exactly-once: callers charge each step they consume, once.
    pub fn charge(&self, category: Category, steps: u64) {
        self.cell(category).fetch_add(steps, Ordering::Relaxed);
    }

    /// Consistent snapshot of all counters.
    ///
    /// "Consistent" here means: if no charges are in flight, the snapshot
    /// equals the true counts; generation barriers in the orchestrator
    /// guarantee that whenever a snapshot is taken for reporting.
    pub fn counts(&self) -> LedgerCounts {
        LedgerCounts {
            steps_pretrain: self.pretrain.load(Ordering::Relaxed),
            steps_finetune: self.finetune.load(Ordering::Relaxed),
            steps_eval: self.eval.load(Ordering::Relaxed),
            steps_baseline: self.baseline.load(Ordering::Relaxed),
        }
    }

    /// Total environment steps across all categories.
    pub fn total(&self) -> u64 {
        self.counts().total()
    }
}

/// Immutable snapshot of a [`SampleLedger`]; the serialized form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerCounts {
    pub steps_pretrain: u64,
    pub steps_finetune: u64,
    pub steps_eval: u64,
    pub steps_baseline: u64,
}

impl LedgerCounts {
    /// Sum of all categories. The ledger identity — total equals the sum,
    /// exactly — holds by construction and is asserted in tests anyway.
    pub fn total(&self) -> u64 {
        self.steps_pretrain + self.steps_finetune + self.steps_eval + self.steps_baseline
    }

    /// Per-category difference `self − earlier`; panics on regression,
    /// which would mean a counter went backwards.
    pub fn delta(&self, earlier: &LedgerCounts) -> LedgerCounts {
        LedgerCounts {
            steps_pretrain: self.steps_pretrain - earlier.steps_pretrain,
            steps_finetune: self.steps_finetune - earlier.steps_finetune,
            steps_eval: self.steps_eval - earlier.steps_eval,
            steps_baseline: self.steps_baseline - earlier.steps_baseline,
        }
    }

    pub fn get(&self, category: Category) -> u64 {
        match category {
            Category::Pretrain => self.steps_pretrain,
            Category::Finetune => self.steps_finetune,
            Category::Eval => self.steps_eval,
            Category::Baseline => self.steps_baseline,
        }
    }
}

/// Post-run report: reward statistics over the final evaluation episodes
/// plus the per-category sample breakdown.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    /// Arithmetic mean of the evaluation episode rewards.
    pub mean_reward: f64,
    /// Best single evaluation episode reward.
    pub best_reward: f64,
    /// Number of evaluation episodes behind the two statistics.
    pub eval_episodes: usize,
    /// Total environment interactions consumed by the run.
    pub total_samples: u64,
    /// Per-category breakdown; `total_samples == counts.total()`.
    pub counts: LedgerCounts,
}

/// Condenses a run into its headline numbers: mean/best reward over the
/// post-training evaluation episodes (callers default to 20) and the exact
/// sample breakdown.
pub fn summarize(episode_rewards: &[f64], counts: LedgerCounts) -> Result<RunSummary> {
    if episode_rewards.is_empty() {
        return Err(Error::contract("summarize requires at least one episode reward"));
    }
    let mean = episode_rewards.iter().sum::<f64>() / episode_rewards.len() as f64;
    let best = episode_rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RunSummary {
        mean_reward: mean,
        best_reward: best,
        eval_episodes: episode_rewards.len(),
        total_samples: counts.total(),
        counts,
    })
}

/// One row of the diagnostics stream: a named scalar at a point in a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Environment steps elapsed when the value was recorded.
    pub env_steps: u64,
    /// Wall-clock seconds elapsed (informational only; never feeds back
    /// into algorithmic decisions in step-budgeted runs).
    pub wall_secs: f64,
    /// Scalar name, e.g. `loss` or `mean_reward`.
    pub name: String,
    pub value: f64,
}

/// Append-only time series of scalar diagnostics, written out as CSV.
#[derive(Debug)]
pub struct MetricsStream {
    rows: Vec<MetricsRow>,
    started: Instant,
}

impl Default for MetricsStream {
    fn default() -> Self {
        Self::new()
    }
}

impl MetricsStream {
    pub fn new() -> Self {
        MetricsStream { rows: Vec::new(), started: Instant::now() }
    }

    /// Records `name = value` at `env_steps` elapsed interactions.
    /// `env_steps` must be non-decreasing across calls.
    pub fn record(&mut self, env_steps: u64, name: &str, value: f64) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if env_steps < last.env_steps {
                return Err(Error::contract(format!(
                    "metrics env_steps must be non-decreasing: {} after {}",
                    env_steps, last.env_steps
                )));
            }
        }
        self.rows.push(MetricsRow {
            env_steps,
            wall_secs: self.started.elapsed().as_secs_f64(),
            name: name.to_string(),
            value,
        });
        Ok(())
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    /// Renders the stream as `env_steps, wall_secs, name, value` CSV.
    /// Values use shortest-round-trip decimal formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("env_steps,wall_secs,name,value\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.env_steps, row.wall_secs, row.name, row.value
            ));
        }
        out
    }
}
