//! The DQN agent: epsilon-greedy control, double-DQN targets, and
//! head-alternating Q-learning updates against per-head replay buffers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::{self, argmax, backward, forward, init_network, sync_target, NetworkParams};
use crate::optim::{adam_step, clip_global_norm, OptimConfig};
use crate::replay::{ReplayBuffer, Transition};
use crate::tensor::Tensor;
use crate::variant::AgentVariant;

/// Linearly annealed exploration schedule: flat at `start` during warmup,
/// then linear down to `final_value` over `anneal_span` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub final_value: f64,
    pub warmup: u64,
    pub anneal_span: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            final_value: 0.01,
            warmup: 10_000,
            anneal_span: 10_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn epsilon_at(&self, env_step: u64) -> f64 {
        if env_step < self.warmup {
            self.start
        } else if env_step >= self.warmup + self.anneal_span {
            self.final_value
        } else {
            let frac = (env_step - self.warmup) as f64 / self.anneal_span as f64;
            self.start + frac * (self.final_value - self.start)
        }
    }
}

/// Epsilon-greedy over one head's Q-values; greedy ties break low.
pub fn select_action<R: Rng>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.gen_range(0.0..1.0) < epsilon {
        rng.gen_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// Round-robin head selection so every head sees the same number of updates.
pub fn head_for_update(update_count: u64, head_count: usize) -> usize {
    (update_count % head_count as u64) as usize
}

/// Pack observations into a [B, 4, 24, 24] network input.
pub fn batch_tensor<'a, I: ExactSizeIterator<Item = &'a Observation>>(obs: I) -> Tensor {
    let b = obs.len();
    let item = nn::STACK * nn::FRAME * nn::FRAME;
    let mut data = vec![0.0; b * item];
    for (chunk, o) in data.chunks_mut(item).zip(obs) {
        o.write_f64(chunk);
    }
    Tensor::from_vec(&[b, nn::STACK, nn::FRAME, nn::FRAME], data).expect("batch shape")
}

/// Double-DQN targets for one head:
/// y = r                                  on terminal transitions,
/// y = r + gamma * Q_target(s', argmax_a Q_online(s', a))   otherwise.
pub fn double_dqn_targets(
    batch: &[&Transition],
    online: &NetworkParams,
    target: &NetworkParams,
    gamma: f64,
    head: usize,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch for targets".into()));
    }
    let next = batch_tensor(batch.iter().map(|t| &t.next_observation));
    let (q_online, _) = forward(online, &next)?;
    let (q_target, _) = forward(target, &next)?;
    let q_online = &q_online[head];
    let q_target = &q_target[head];
    let k = q_online.shape[1];
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.terminal {
                t.reward
            } else {
                let row_on = &q_online.data[i * k..(i + 1) * k];
                let best = argmax(row_on);
                t.reward + gamma * q_target.data[i * k + best]
            }
        })
        .collect())
}

/// Everything one agent carries through a run.
pub struct AgentState {
    pub variant: AgentVariant,
    pub online: NetworkParams,
    pub target: NetworkParams,
    pub buffers: Vec<ReplayBuffer>,
    pub env_steps: u64,
    pub update_count: u64,
    pub schedule: EpsilonSchedule,
    pub gamma: f64,
    pub sync_period: u64,
    pub batch_size: usize,
    pub train_period: u64,
    pub optim: OptimConfig,
}

impl AgentState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: AgentVariant,
        replay_capacity: usize,
        schedule: EpsilonSchedule,
        gamma: f64,
        sync_period: u64,
        batch_size: usize,
        train_period: u64,
        optim: OptimConfig,
        seed: u64,
    ) -> Result<AgentState> {
        let online = init_network(variant, seed)?;
        let target = online.clone();
        let buffers = (0..variant.head_count())
            .map(|_| ReplayBuffer::new(replay_capacity))
            .collect();
        Ok(AgentState {
            variant,
            online,
            target,
            buffers,
            env_steps: 0,
            update_count: 0,
            schedule,
            gamma,
            sync_period,
            batch_size,
            train_period,
            optim,
        })
    }

    pub fn head_count(&self) -> usize {
        self.online.head_count()
    }

    /// Q-values of one head for a single observation.
    pub fn q_values(&self, obs: &Observation, head: usize) -> Result<Vec<f64>> {
        let batch = batch_tensor(std::iter::once(obs));
        let (out, _) = forward(&self.online, &batch)?;
        Ok(out[head].data.clone())
    }

    /// Q-values of one head for a whole batch of observations, [B, actions].
    pub fn q_values_batch(&self, obs: &[&Observation], head: usize) -> Result<Tensor> {
        let batch = batch_tensor(obs.iter().copied());
        let (mut out, _) = forward(&self.online, &batch)?;
        Ok(out.swap_remove(head))
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.epsilon_at(self.env_steps)
    }

    /// Store a transition in the given head's buffer.
    pub fn observe(&mut self, head: usize, transition: Transition) {
        self.buffers[head].push(transition);
    }

    /// Copy online into target every `sync_period` environment steps.
    /// Returns whether a sync happened.
    pub fn maybe_sync_target(&mut self) -> Result<bool> {
        if self.env_steps > 0 && self.env_steps.is_multiple_of(self.sync_period) {
            sync_target(&self.online, &mut self.target)?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// One Q-learning update on `head`: sample, build double-DQN targets,
    /// squared error on the taken actions, clip, Adam. Returns the loss.
    pub fn train_update<R: Rng>(&mut self, head: usize, rng: &mut R) -> Result<f64> {
        let batch = self.buffers[head].sample(self.batch_size, rng)?;
        let targets = double_dqn_targets(&batch, &self.online, &self.target, self.gamma, head)?;

        let obs = batch_tensor(batch.iter().map(|t| &t.observation));
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        drop(batch);

        let (q, cache) = forward(&self.online, &obs)?;
        let q = &q[head];
        let b = actions.len();
        let k = q.shape[1];
        let mut loss = 0.0;
        let mut grad = vec![0.0; b * k];
        for i in 0..b {
            let predicted = q.data[i * k + actions[i]];
            let diff = predicted - targets[i];
            loss += diff * diff;
            grad[i * k + actions[i]] = 2.0 * diff / b as f64;
        }
        loss /= b as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "Q-learning loss at update {}",
                self.update_count
            )));
        }
        let grad = Tensor::from_vec(&[b, k], grad)?;
        let mut grads = backward(&self.online, &cache, head, &grad)?;
        clip_global_norm(&mut grads, self.optim.max_grad_norm);
        adam_step(&mut self.online, &grads, &self.optim)?;
        self.update_count += 1;
        Ok(loss)
    }
}
