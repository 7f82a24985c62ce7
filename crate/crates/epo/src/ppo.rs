//! Clipped-surrogate policy-gradient training.
//!
//! The gradient half of the hybrid: collect a fixed-length rollout with the
//! current policy, estimate advantages with GAE, then run several epochs of
//! minibatch updates on the clipped objective
//!
//! ```text
//! L = E[ min(r_t · A_t, clip(r_t, 1−ε, 1+ε) · A_t) ]
//!       − c_v · E[(V(s_t) − R_t)²] + c_e · E[H(π(·|s_t))]
//! ```
//!
//! where `r_t` is the probability ratio between the updated and the
//! collecting policy. [`train`] drives the collect/update cycle and charges
//! every environment step to a ledger category, which is what makes
//! sample-complexity comparisons against the evolutionary loop exact.
//! The same routine serves three roles: pre-training the base model,
//! fine-tuning offspring (one short cycle), and the standalone baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, Env, EnvConfig};
use crate::error::{Error, Result};
use crate::ledger::{Category, SampleLedger};
use crate::nn::{self, AdamState, BatchLoss, NetworkSpec, ParameterVector};
use crate::seeds;

/// One environment interaction as seen by the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    /// log π(action | observation) under the collecting policy; ≤ 0.
    pub logprob: f64,
    pub reward: f64,
    /// Value estimate of `observation` at collection time.
    pub value: f64,
    /// Episode boundary marker: true if this step ended its episode.
    pub done: bool,
}

/// A fixed-length batch of transitions plus derived learning targets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    /// GAE advantages; empty until [`Rollout::apply_gae`] runs.
    pub advantages: Vec<f64>,
    /// Returns-to-go (advantages + values); empty until GAE runs.
    pub returns: Vec<f64>,
    /// Value estimate of the state after the final transition; ignored by
    /// GAE when that transition ended its episode.
    pub bootstrap_value: f64,
    /// Total rewards of the episodes that completed inside this rollout.
    pub episode_rewards: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Computes and stores advantages and returns using the rollout's own
    /// bootstrap value.
    pub fn apply_gae(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let (advantages, returns) = compute_gae(self, gamma, lambda, self.bootstrap_value)?;
        self.advantages = advantages;
        self.returns = returns;
        Ok(())
    }
}

/// Hyperparameters of the gradient learner. Defaults follow the common
/// published values; only the rollout length is shrunk to desk scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    /// Clip radius ε of the surrogate objective.
    pub clip: f64,
    /// Discount γ.
    pub gamma: f64,
    /// GAE λ.
    pub lambda: f64,
    /// Optimisation epochs per collected rollout.
    pub epochs: usize,
    /// Minibatch size within an epoch.
    pub minibatch: usize,
    /// Environment steps collected per update cycle.
    pub rollout_len: usize,
    /// Value-loss coefficient c_v.
    pub vf_coef: f64,
    /// Entropy-bonus coefficient c_e.
    pub ent_coef: f64,
    /// Adam learning rate.
    pub lr: f64,
    /// Global gradient-norm clip.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 10,
            minibatch: 64,
            rollout_len: 512,
            vf_coef: 0.5,
            ent_coef: 0.0,
            lr: 3e-4,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::config("clip must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda must lie in [0, 1]"));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout_len == 0 {
            return Err(Error::config("epochs, minibatch, and rollout_len must be >= 1"));
        }
        if self.lr <= 0.0 || self.max_grad_norm <= 0.0 {
            return Err(Error::config("lr and max_grad_norm must be positive"));
        }
        if self.vf_coef < 0.0 || self.ent_coef < 0.0 {
            return Err(Error::config("loss coefficients must be non-negative"));
        }
        Ok(())
    }
}

/// Collects exactly `length` transitions with softmax action sampling,
/// auto-resetting the environment at episode ends. Fully deterministic in
/// its arguments; consumes exactly `length` environment steps (the caller
/// charges them).
pub fn collect_rollout(
    params: &ParameterVector,
    spec: &NetworkSpec,
    env_config: &EnvConfig,
    length: usize,
    seed: u64,
) -> Result<Rollout> {
    if length == 0 {
        return Err(Error::contract("rollout length must be >= 1"));
    }
    let mut env = Env::new(env_config.clone())?;
    let mut action_rng = seeds::rng(seed, &[seeds::STREAM_ROLLOUT]);
    let mut episode = 0u64;
    let mut obs = env.reset(seeds::derive(seed, &[seeds::STREAM_ENV, episode])).observation;
    let mut rollout = Rollout::default();
    let mut episode_total = 0.0;

    for _ in 0..length {
        let (logits, value) = nn::forward(params, spec, &obs)?;
        let action = env::sample_action(&logits, &mut action_rng);
        let logprob = nn::softmax_logprob(&logits, action)?;
        debug_assert!(logprob <= 0.0);
        let step = env.step(action)?;
        episode_total += step.reward;
        rollout.transitions.push(Transition {
            observation: obs,
            action,
            logprob,
            reward: step.reward,
            value,
            done: step.done,
        });
        if step.done {
            rollout.episode_rewards.push(episode_total);
            episode_total = 0.0;
            episode += 1;
            obs = env.reset(seeds::derive(seed, &[seeds::STREAM_ENV, episode])).observation;
        } else {
            obs = step.observation;
        }
    }

    // Bootstrap for the truncated final episode; irrelevant when the last
    // transition was terminal (GAE masks it out).
    let last_done = rollout.transitions.last().map(|t| t.done).unwrap_or(true);
    rollout.bootstrap_value = if last_done { 0.0 } else { nn::forward(params, spec, &obs)?.1 };
    Ok(rollout)
}

/// Generalized advantage estimation:
/// `A_t = Σ_k (γλ)^k δ_{t+k}` with `δ_t = r_t + γ·V(s_{t+1})·(1−done_t) − V(s_t)`,
/// accumulated across episode boundaries with the done mask, plus
/// `returns = advantages + values`.
pub fn compute_gae(
    rollout: &Rollout,
    gamma: f64,
    lambda: f64,
    bootstrap_value: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rollout.is_empty() {
        return Err(Error::contract("GAE over an empty rollout"));
    }
    let n = rollout.len();
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let tr = &rollout.transitions[t];
        let mask = if tr.done { 0.0 } else { 1.0 };
        let delta = tr.reward + gamma * next_value * mask - tr.value;
        carry = delta + gamma * lambda * mask * carry;
        advantages[t] = carry;
        next_value = tr.value;
    }
    let returns = advantages
        .iter()
        .zip(&rollout.transitions)
        .map(|(a, t)| a + t.value)
        .collect();
    Ok((advantages, returns))
}

/// Centres the advantages and scales them to unit sample standard
/// deviation (skipped when the batch is degenerate: size 1 or zero spread).
pub fn normalize_advantages(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len();
    if n < 2 {
        return advantages.to_vec();
    }
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    if std <= 1e-8 {
        return advantages.iter().map(|a| a - mean).collect();
    }
    advantages.iter().map(|a| (a - mean) / std).collect()
}

/// Aggregate statistics of one loss evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossDiagnostics {
    /// Mean clipped-surrogate term (the objective being maximised).
    pub surrogate: f64,
    /// Mean probability ratio.
    pub mean_ratio: f64,
    /// Fraction of samples whose ratio left the clip interval.
    pub clip_fraction: f64,
    /// Mean policy entropy.
    pub entropy: f64,
    /// Mean squared value error.
    pub value_loss: f64,
}

/// The clipped objective as a differentiable batch loss over rollout
/// samples (indices select a minibatch).
struct PpoBatchLoss<'a> {
    rollout: &'a Rollout,
    indices: &'a [usize],
    clip: f64,
    vf_coef: f64,
    ent_coef: f64,
}

impl PpoBatchLoss<'_> {
    /// Per-sample pieces shared by the loss and its gradient:
    /// (ratio, surrogate, use-unclipped-branch, probs, logprob, entropy).
    fn sample_terms(&self, idx: usize, logits: &[f64]) -> (f64, f64, bool, Vec<f64>, f64, f64) {
        let tr = &self.rollout.transitions[idx];
        let advantage = self.rollout.advantages[idx];
        let lse = nn::log_sum_exp(logits);
        let logprob = logits[tr.action] - lse;
        let ratio = (logprob - tr.logprob).exp();
        let clipped = ratio.clamp(1.0 - self.clip, 1.0 + self.clip);
        let surr1 = ratio * advantage;
        let surr2 = clipped * advantage;
        let use_unclipped = surr1 <= surr2;
        let surrogate = surr1.min(surr2);
        let probs: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
        let entropy: f64 = logits.iter().map(|l| (l - lse).exp() * (lse - l)).sum();
        (ratio, surrogate, use_unclipped, probs, logprob, entropy)
    }
}

impl BatchLoss for PpoBatchLoss<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn observation(&self, i: usize) -> &[f64] {
        &self.rollout.transitions[self.indices[i]].observation
    }

    fn at_outputs(&self, i: usize, logits: &[f64], value: f64) -> (f64, Vec<f64>, f64) {
        let idx = self.indices[i];
        let tr = &self.rollout.transitions[idx];
        let advantage = self.rollout.advantages[idx];
        let ret = self.rollout.returns[idx];
        let (ratio, surrogate, use_unclipped, probs, _, ent) = self.sample_terms(idx, logits);
        let lse = nn::log_sum_exp(logits);

        let value_err = value - ret;
        let loss = -surrogate + self.vf_coef * value_err * value_err - self.ent_coef * ent;

        // d(−surr)/dlogit_j: the clipped branch is constant in θ, so the
        // gradient gates off whenever the clipped term is the active min.
        let gate = if use_unclipped { 1.0 } else { 0.0 };
        let mut dlogits = Vec::with_capacity(logits.len());
        for (j, (&p, &l)) in probs.iter().zip(logits).enumerate() {
            let indicator = if j == tr.action { 1.0 } else { 0.0 };
            let dsurr = gate * advantage * ratio * (indicator - p);
            // dH/dlogit_j = −p_j (ln p_j + H), with ln p from logits to
            // avoid ln(0) when a probability underflows.
            let dent = -p * ((l - lse) + ent);
            dlogits.push(-dsurr - self.ent_coef * dent);
        }
        (loss, dlogits, 2.0 * self.vf_coef * value_err)
    }
}

/// Evaluates the full objective on a rollout (advantages must be present):
/// `−mean(surrogate) + c_v·value_loss − c_e·entropy`, plus diagnostics.
pub fn ppo_loss(
    params: &ParameterVector,
    spec: &NetworkSpec,
    rollout: &Rollout,
    config: &PpoConfig,
) -> Result<(f64, LossDiagnostics)> {
    if rollout.is_empty() {
        return Err(Error::contract("loss over an empty rollout"));
    }
    if rollout.advantages.len() != rollout.len() || rollout.returns.len() != rollout.len() {
        return Err(Error::contract("rollout advantages/returns not computed"));
    }
    let indices: Vec<usize> = (0..rollout.len()).collect();
    let batch = PpoBatchLoss {
        rollout,
        indices: &indices,
        clip: config.clip,
        vf_coef: config.vf_coef,
        ent_coef: config.ent_coef,
    };

    let mut loss_sum = 0.0;
    let mut surrogate = 0.0;
    let mut ratio_sum = 0.0;
    let mut clipped = 0usize;
    let mut entropy_sum = 0.0;
    let mut value_sum = 0.0;
    for (i, &idx) in indices.iter().enumerate() {
        let cache = nn::forward_cached(params, spec, batch.observation(i))?;
        let (ratio, surr, _, _, _, ent) = batch.sample_terms(idx, &cache.logits);
        let value_err = cache.value - rollout.returns[idx];
        loss_sum += -surr + config.vf_coef * value_err * value_err - config.ent_coef * ent;
        surrogate += surr;
        ratio_sum += ratio;
        if (ratio - 1.0).abs() > config.clip {
            clipped += 1;
        }
        entropy_sum += ent;
        value_sum += value_err * value_err;
    }
    let n = rollout.len() as f64;
    let diagnostics = LossDiagnostics {
        surrogate: surrogate / n,
        mean_ratio: ratio_sum / n,
        clip_fraction: clipped as f64 / n,
        entropy: entropy_sum / n,
        value_loss: value_sum / n,
    };
    let loss = loss_sum / n;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("loss {loss}, diagnostics {diagnostics:?}")));
    }
    Ok((loss, diagnostics))
}

/// Reverse-mode gradient of [`ppo_loss`] with respect to every parameter.
/// Returns `(loss, gradient)`; the gradient matches the loss' central
/// finite differences to first order and shares the parameter layout.
pub fn loss_gradient(
    params: &ParameterVector,
    spec: &NetworkSpec,
    rollout: &Rollout,
    config: &PpoConfig,
) -> Result<(f64, ParameterVector)> {
    if rollout.is_empty() {
        return Err(Error::contract("loss over an empty rollout"));
    }
    if rollout.advantages.len() != rollout.len() || rollout.returns.len() != rollout.len() {
        return Err(Error::contract("rollout advantages/returns not computed"));
    }
    let indices: Vec<usize> = (0..rollout.len()).collect();
    let batch = PpoBatchLoss {
        rollout,
        indices: &indices,
        clip: config.clip,
        vf_coef: config.vf_coef,
        ent_coef: config.ent_coef,
    };
    nn::backward(params, spec, &batch)
}

/// One row of per-update diagnostics emitted by [`train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRow {
    /// Update cycle index, starting at 0.
    pub update: usize,
    /// Cumulative environment steps after this cycle.
    pub timestep: u64,
    /// Rolling mean total reward of recent completed episodes (up to 100);
    /// 0.0 until the first episode completes.
    pub mean_reward: f64,
    /// Best episode total seen in the rolling window.
    pub best_reward: f64,
    /// Full-rollout loss after the cycle's updates.
    pub loss: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    /// Episodes completed so far during training.
    pub episodes_completed: usize,
}

/// Result of a [`train`] call.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: ParameterVector,
    /// One row per collect/update cycle.
    pub updates: Vec<UpdateRow>,
    /// Environment steps consumed (= cycles × rollout length).
    pub steps: u64,
}

/// Runs `⌈total_timesteps / rollout_len⌉` collect/update cycles starting
/// from `params`, charging every environment step to `category`. A fresh
/// optimizer is used for each call: fine-tuned offspring are new
/// individuals and inherit no moment estimates.
#[allow(clippy::too_many_arguments)]
pub fn train(
    params: &ParameterVector,
    spec: &NetworkSpec,
    env_config: &EnvConfig,
    total_timesteps: u64,
    config: &PpoConfig,
    seed: u64,
    ledger: &SampleLedger,
    category: Category,
) -> Result<TrainOutput> {
    config.validate()?;
    if total_timesteps < config.rollout_len as u64 {
        return Err(Error::contract(format!(
            "total timesteps {total_timesteps} below one rollout ({})",
            config.rollout_len
        )));
    }
    let cycles = total_timesteps.div_ceil(config.rollout_len as u64);
    let mut params = params.clone();
    let mut adam = AdamState::new(params.len(), config.lr);
    let mut updates = Vec::with_capacity(cycles as usize);
    let mut reward_window: Vec<f64> = Vec::new();
    let mut episodes_completed = 0usize;
    let mut steps = 0u64;

    for cycle in 0..cycles {
        let rollout_seed = seeds::derive(seed, &[seeds::STREAM_ROLLOUT, cycle]);
        let mut rollout =
            collect_rollout(&params, spec, env_config, config.rollout_len, rollout_seed)?;
        ledger.charge(category, config.rollout_len as u64);
        steps += config.rollout_len as u64;

        episodes_completed += rollout.episode_rewards.len();
        reward_window.extend_from_slice(&rollout.episode_rewards);
        if reward_window.len() > 100 {
            reward_window.drain(..reward_window.len() - 100);
        }

        rollout.apply_gae(config.gamma, config.lambda)?;
        rollout.advantages = normalize_advantages(&rollout.advantages);

        for epoch in 0..config.epochs {
            let mut order: Vec<usize> = (0..rollout.len()).collect();
            let mut rng = seeds::rng(seed, &[seeds::STREAM_SHUFFLE, cycle, epoch as u64]);
            // Fisher-Yates; explicit so the shuffle is stable across rand
            // versions (determinism is part of the artifact's contract).
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            for chunk in order.chunks(config.minibatch) {
                let batch = PpoBatchLoss {
                    rollout: &rollout,
                    indices: chunk,
                    clip: config.clip,
                    vf_coef: config.vf_coef,
                    ent_coef: config.ent_coef,
                };
                let (_, mut grad) = nn::backward(&params, spec, &batch)?;
                nn::clip_grad_norm(&mut grad, config.max_grad_norm);
                let (next, next_adam) = nn::adam_step(&params, &grad, &adam)?;
                params = next;
                adam = next_adam;
            }
        }

        let (loss, diagnostics) = ppo_loss(&params, spec, &rollout, config)?;
        let (mean_reward, best_reward) = if reward_window.is_empty() {
            (0.0, 0.0)
        } else {
            (
                reward_window.iter().sum::<f64>() / reward_window.len() as f64,
                reward_window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )
        };
        updates.push(UpdateRow {
            update: cycle as usize,
            timestep: steps,
            mean_reward,
            best_reward,
            loss,
            clip_fraction: diagnostics.clip_fraction,
            entropy: diagnostics.entropy,
            episodes_completed,
        });
    }

    Ok(TrainOutput { params, updates, steps })
}
