//! Deterministic, seedable desk-scale environments.
//!
//! Three tasks with different reward densities, plus a scripted diagnostic:
//!
//! * `cartpole` — the standard published cart-pole balancing task
//!   (dense: +1 every step until the pole falls or the cart escapes).
//! * `catch-dense` — a 5-column × 7-row grid; a ball drops from a seeded
//!   column and a paddle on the bottom row must be under it on the last
//!   row. Terminal reward +1 on a catch, −1 on a miss.
//! * `catch-sparse` — same dynamics, but a miss pays 0 instead of −1, so
//!   the reward carries no gradient away from success (exploration-hard).
//! * `scripted` — fixed-length episodes with reward 1 per step for action
//!   0 and an observation that just counts time. Episode lengths are exact
//!   by construction, which makes sample-accounting tests precise; it is a
//!   test/diagnostic task, not part of the benchmark trio.
//!
//! Episodes start with a seeded number of no-op actions drawn from the
//! configured range, which is the only source of start-state variability:
//! the underlying dynamics are fully deterministic. No-op steps happen
//! inside [`Env::reset`] and are not visible to the caller's step count —
//! the ledger counts exactly the steps an agent takes. For cartpole, where
//! there is no force-free action, the no-op phase alternates left/right
//! pushes, which perturbs the start state while roughly cancelling.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, NetworkSpec, ParameterVector};
use crate::seeds;

/// Grid width (columns) of the catch tasks.
pub const CATCH_WIDTH: usize = 5;
/// Grid height (rows) of the catch tasks; the ball falls HEIGHT−1 rows.
pub const CATCH_HEIGHT: usize = 7;

const CARTPOLE_GRAVITY: f64 = 9.8;
const CARTPOLE_MASS_CART: f64 = 1.0;
const CARTPOLE_MASS_POLE: f64 = 0.1;
const CARTPOLE_HALF_LENGTH: f64 = 0.5;
const CARTPOLE_FORCE: f64 = 10.0;
const CARTPOLE_TAU: f64 = 0.02;
const CARTPOLE_X_LIMIT: f64 = 2.4;
/// 12 degrees in radians.
const CARTPOLE_THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

/// Which task an [`EnvConfig`] names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvId {
    Cartpole,
    CatchDense,
    CatchSparse,
    Scripted,
}

impl EnvId {
    pub fn obs_dim(self) -> usize {
        match self {
            EnvId::Cartpole => 4,
            // One-hot ball column + one-hot paddle column + ball row.
            EnvId::CatchDense | EnvId::CatchSparse => 2 * CATCH_WIDTH + 1,
            EnvId::Scripted => 1,
        }
    }

    pub fn num_actions(self) -> usize {
        match self {
            EnvId::Cartpole => 2,
            EnvId::CatchDense | EnvId::CatchSparse => 3,
            EnvId::Scripted => 2,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EnvId::Cartpole => "cartpole",
            EnvId::CatchDense => "catch-dense",
            EnvId::CatchSparse => "catch-sparse",
            EnvId::Scripted => "scripted",
        };
        f.write_str(name)
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" => Ok(EnvId::Cartpole),
            "catch-dense" => Ok(EnvId::CatchDense),
            "catch-sparse" => Ok(EnvId::CatchSparse),
            "scripted" => Ok(EnvId::Scripted),
            other => Err(Error::config(format!("unknown environment id `{other}`"))),
        }
    }
}

/// Everything needed to build identical environment instances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Environment id string, e.g. `cartpole` or `catch-sparse`.
    pub id: String,
    /// Hard episode cap in agent steps.
    pub horizon: usize,
    /// Base seed; combined with per-episode seeds on reset.
    pub seed: u64,
    /// Inclusive lower bound of the starting no-op count.
    pub noop_min: usize,
    /// Inclusive upper bound of the starting no-op count (≤ 30).
    pub noop_max: usize,
    /// Episode length of the `scripted` task; ignored elsewhere.
    pub scripted_len: usize,
    /// Instrumentation hook: counts every agent step taken in any
    /// environment built from this config. Not serialized; test-only in
    /// spirit, but harmless to leave attached.
    #[serde(skip)]
    pub probe: Option<Arc<AtomicU64>>,
}

impl PartialEq for EnvConfig {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.horizon == other.horizon
            && self.seed == other.seed
            && self.noop_min == other.noop_min
            && self.noop_max == other.noop_max
            && self.scripted_len == other.scripted_len
    }
}

impl EnvConfig {
    /// Sensible defaults per task: cartpole runs 200 steps with up to 8
    /// starting no-ops; catch episodes are geometry-bounded with up to 3;
    /// scripted episodes are exact with none.
    pub fn new(id: EnvId, seed: u64) -> Self {
        let (horizon, noop_min, noop_max) = match id {
            EnvId::Cartpole => (200, 0, 8),
            EnvId::CatchDense | EnvId::CatchSparse => (10, 0, 3),
            EnvId::Scripted => (10, 0, 0),
        };
        EnvConfig {
            id: id.to_string(),
            horizon,
            seed,
            noop_min,
            noop_max,
            scripted_len: 10,
            probe: None,
        }
    }

    pub fn env_id(&self) -> Result<EnvId> {
        self.id.parse()
    }

    pub fn validate(&self) -> Result<EnvId> {
        let id = self.env_id()?;
        if self.horizon == 0 {
            return Err(Error::config("horizon must be >= 1"));
        }
        if self.noop_min > self.noop_max {
            return Err(Error::config(format!(
                "no-op range [{}, {}] is empty",
                self.noop_min, self.noop_max
            )));
        }
        if self.noop_max > 30 {
            return Err(Error::config("no-op upper bound must be <= 30"));
        }
        match id {
            EnvId::CatchDense | EnvId::CatchSparse => {
                // The ball falls CATCH_HEIGHT−1 rows in total; leave at
                // least one agent step after the no-op phase.
                if self.noop_max > CATCH_HEIGHT - 2 {
                    return Err(Error::config(format!(
                        "catch no-op upper bound must be <= {} (ball geometry)",
                        CATCH_HEIGHT - 2
                    )));
                }
            }
            EnvId::Scripted => {
                if self.scripted_len == 0 {
                    return Err(Error::config("scripted episode length must be >= 1"));
                }
                if self.noop_max >= self.scripted_len {
                    return Err(Error::config(
                        "scripted no-op upper bound must leave at least one agent step",
                    ));
                }
            }
            EnvId::Cartpole => {}
        }
        Ok(id)
    }

    /// A network shape matching this environment's interface, with the
    /// given hidden layers.
    pub fn network_spec(&self, hidden: Vec<usize>) -> Result<NetworkSpec> {
        let id = self.validate()?;
        NetworkSpec::new(id.obs_dim(), hidden, id.num_actions())
    }
}

/// Observation snapshot plus episode bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    /// Agent steps taken this episode (no-ops excluded).
    pub step_index: usize,
    pub terminated: bool,
}

/// Result of one agent step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Debug)]
enum Sim {
    Cartpole { x: f64, x_dot: f64, theta: f64, theta_dot: f64 },
    Catch { ball_row: usize, ball_col: usize, paddle_col: usize },
    Scripted { t: usize },
}

/// A single environment instance. Construct, reset with an episode seed,
/// step until done, reset again. Instances are independent; run as many
/// concurrently as you like.
#[derive(Clone, Debug)]
pub struct Env {
    id: EnvId,
    config: EnvConfig,
    sim: Sim,
    step_index: usize,
    terminated: bool,
    noops_applied: usize,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        let id = config.validate()?;
        let sim = match id {
            EnvId::Cartpole => Sim::Cartpole { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 },
            EnvId::CatchDense | EnvId::CatchSparse => {
                Sim::Catch { ball_row: 0, ball_col: 0, paddle_col: CATCH_WIDTH / 2 }
            }
            EnvId::Scripted => Sim::Scripted { t: 0 },
        };
        Ok(Env {
            id,
            config,
            sim,
            step_index: 0,
            // Force an explicit reset before the first step.
            terminated: true,
            noops_applied: 0,
        })
    }

    pub fn id(&self) -> EnvId {
        self.id
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// No-op count applied by the most recent reset.
    pub fn noops_applied(&self) -> usize {
        self.noops_applied
    }

    /// Starts a new episode. Deterministic in `(config, episode_seed)`:
    /// the analytic initial condition, then a seeded number of no-op
    /// actions from the configured range.
    pub fn reset(&mut self, episode_seed: u64) -> EnvState {
        let mut rng = seeds::rng(self.config.seed, &[seeds::STREAM_ENV, episode_seed]);
        self.sim = match self.id {
            EnvId::Cartpole => Sim::Cartpole { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 },
            EnvId::CatchDense | EnvId::CatchSparse => Sim::Catch {
                ball_row: 0,
                ball_col: rng.random_range(0..CATCH_WIDTH),
                paddle_col: CATCH_WIDTH / 2,
            },
            EnvId::Scripted => Sim::Scripted { t: 0 },
        };
        self.step_index = 0;
        self.terminated = false;

        let noops = rng.random_range(self.config.noop_min..=self.config.noop_max);
        for k in 0..noops {
            // Cartpole alternates pushes (it has no force-free action);
            // the grid tasks apply their genuine "stay"/idle action.
            let action = match self.id {
                EnvId::Cartpole => k % 2,
                EnvId::CatchDense | EnvId::CatchSparse => 1,
                EnvId::Scripted => 1,
            };
            let (_, done) = self.transition(action);
            debug_assert!(!done, "no-op phase must not terminate an episode");
        }
        self.noops_applied = noops;
        self.state()
    }

    pub fn state(&self) -> EnvState {
        EnvState {
            observation: self.observe(),
            step_index: self.step_index,
            terminated: self.terminated,
        }
    }

    fn observe(&self) -> Vec<f64> {
        match &self.sim {
            Sim::Cartpole { x, x_dot, theta, theta_dot } => vec![*x, *x_dot, *theta, *theta_dot],
            Sim::Catch { ball_row, ball_col, paddle_col } => {
                let mut obs = vec![0.0; 2 * CATCH_WIDTH + 1];
                obs[*ball_col] = 1.0;
                obs[CATCH_WIDTH + *paddle_col] = 1.0;
                obs[2 * CATCH_WIDTH] = *ball_row as f64 / (CATCH_HEIGHT - 1) as f64;
                obs
            }
            Sim::Scripted { t } => vec![*t as f64 / self.config.scripted_len as f64],
        }
    }

    /// Raw dynamics: applies `action`, returns (reward, terminal-by-rule).
    /// Horizon and step accounting live in [`Env::step`].
    fn transition(&mut self, action: usize) -> (f64, bool) {
        match &mut self.sim {
            Sim::Cartpole { x, x_dot, theta, theta_dot } => {
                let force = if action == 1 { CARTPOLE_FORCE } else { -CARTPOLE_FORCE };
                let total_mass = CARTPOLE_MASS_CART + CARTPOLE_MASS_POLE;
                let polemass_length = CARTPOLE_MASS_POLE * CARTPOLE_HALF_LENGTH;
                let cos_t = theta.cos();
                let sin_t = theta.sin();
                let temp =
                    (force + polemass_length * *theta_dot * *theta_dot * sin_t) / total_mass;
                let theta_acc = (CARTPOLE_GRAVITY * sin_t - cos_t * temp)
                    / (CARTPOLE_HALF_LENGTH
                        * (4.0 / 3.0 - CARTPOLE_MASS_POLE * cos_t * cos_t / total_mass));
                let x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;
                // Explicit Euler in the published order: positions advance
                // with the old velocities.
                *x += CARTPOLE_TAU * *x_dot;
                *x_dot += CARTPOLE_TAU * x_acc;
                *theta += CARTPOLE_TAU * *theta_dot;
                *theta_dot += CARTPOLE_TAU * theta_acc;
                let fell = x.abs() > CARTPOLE_X_LIMIT || theta.abs() > CARTPOLE_THETA_LIMIT;
                (1.0, fell)
            }
            Sim::Catch { ball_row, ball_col, paddle_col } => {
                match action {
                    0 => *paddle_col = paddle_col.saturating_sub(1),
                    2 => *paddle_col = (*paddle_col + 1).min(CATCH_WIDTH - 1),
                    _ => {}
                }
                *ball_row += 1;
                if *ball_row == CATCH_HEIGHT - 1 {
                    let caught = ball_col == paddle_col;
                    let reward = match (self.id, caught) {
                        (_, true) => 1.0,
                        (EnvId::CatchDense, false) => -1.0,
                        _ => 0.0,
                    };
                    (reward, true)
                } else {
                    (0.0, false)
                }
            }
            Sim::Scripted { t } => {
                *t += 1;
                let reward = if action == 0 { 1.0 } else { 0.0 };
                (reward, *t >= self.config.scripted_len)
            }
        }
    }

    /// Applies one agent action. Errors on a terminated episode or an
    /// out-of-range action.
    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.terminated {
            return Err(Error::contract("step on a terminated episode"));
        }
        if action >= self.id.num_actions() {
            return Err(Error::contract(format!(
                "action {action} out of range for {}",
                self.id
            )));
        }
        let (reward, terminal) = self.transition(action);
        self.step_index += 1;
        self.terminated = terminal || self.step_index >= self.config.horizon;
        if let Some(probe) = &self.config.probe {
            probe.fetch_add(1, Ordering::Relaxed);
        }
        Ok(StepResult { observation: self.observe(), reward, done: self.terminated })
    }
}

/// Outcome of a policy evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Arithmetic mean of `per_episode`.
    pub mean_reward: f64,
    /// Total reward of each episode, in order.
    pub per_episode: Vec<f64>,
    /// Exact number of agent steps consumed; the caller charges these to
    /// its ledger.
    pub env_steps: u64,
}

/// Runs `episodes` episodes under the policy and reports reward statistics
/// and the exact step count. Episode seeds derive from `seed` by index, so
/// two evaluations with the same seed see identical episodes.
///
/// Action selection is greedy (argmax logits, ties to the lowest index)
/// unless `stochastic` is set, in which case actions are sampled from the
/// softmax — useful for measuring a policy's behavioural distribution, and
/// what the uniform-policy oracle tests rely on.
pub fn evaluate_policy(
    params: &ParameterVector,
    spec: &NetworkSpec,
    config: &EnvConfig,
    episodes: usize,
    seed: u64,
    stochastic: bool,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::contract("evaluation requires at least one episode"));
    }
    let mut env = Env::new(config.clone())?;
    let mut per_episode = Vec::with_capacity(episodes);
    let mut env_steps = 0u64;
    for e in 0..episodes {
        let episode_seed = seeds::derive(seed, &[seeds::STREAM_EVAL, e as u64]);
        let mut action_rng = seeds::rng(seed, &[seeds::STREAM_EVAL, e as u64, 1]);
        let mut obs = env.reset(episode_seed).observation;
        let mut total = 0.0;
        loop {
            let (logits, _) = nn::forward(params, spec, &obs)?;
            let action = if stochastic {
                sample_action(&logits, &mut action_rng)
            } else {
                greedy_action(&logits)
            };
            let step = env.step(action)?;
            env_steps += 1;
            total += step.reward;
            if step.done {
                break;
            }
            obs = step.observation;
        }
        per_episode.push(total);
    }
    let mean = per_episode.iter().sum::<f64>() / per_episode.len() as f64;
    Ok(EvalReport { mean_reward: mean, per_episode, env_steps })
}

/// Argmax with ties broken toward the lowest index.
pub fn greedy_action(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

/// Samples an action from the softmax distribution of `logits`.
pub fn sample_action(logits: &[f64], rng: &mut impl Rng) -> usize {
    let probs = nn::softmax(logits);
    let draw: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return i;
        }
    }
    probs.len() - 1
}
