//! Multi-agent advantage actor-critic.
//!
//! One agent per stream: a softmax actor over the composite discrete action
//! space (primary path x bandwidth nudge x window nudge) and a scalar
//! critic, both small tanh networks trained online — one update per
//! transition, no replay, plain gradient steps with global-norm clipping.
//! Agents own their parameters exclusively and only share the environment.

pub mod gradcheck;
pub mod mlp;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{self, ControlParams};
use crate::net::NetworkState;

pub use mlp::{actor_gradient, apply_update, critic_gradient, softmax, Layer, Mlp, MlpGrads};

#[derive(Debug, Error)]
pub enum DrlError {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("non-finite gradient (norm {norm})")]
    NonFiniteGradient { norm: f64 },
    #[error("training diverged at episode {episode}, step {step}, agent {agent}: {reason}")]
    Diverged { episode: u32, step: u32, agent: usize, reason: String },
    #[error("invalid agent config {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("invalid action index {index} for {count} actions")]
    InvalidAction { index: usize, count: usize },
}

/// Observation normalization ceilings (the simulated ranges' maxima).
pub const OBS_BANDWIDTH_NORM_MBPS: f64 = 100.0;
pub const OBS_LATENCY_NORM_MS: f64 = 100.0;
pub const OBS_LOSS_NORM: f64 = 0.05;

/// Flat observation vector of length `4 * n_paths + 2`.
///
/// Layout: per path `(bandwidth, latency, loss, congestion)` normalized to
/// `[0, 1]`, then the stream's feedback metric and experience score.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Expected observation length for a network of `n_paths` paths.
pub fn observation_dim(n_paths: usize) -> usize {
    4 * n_paths + 2
}

/// Encode the agent's view of the network plus its stream-level feedback
/// and experience scalars.
pub fn encode_observation(network: &NetworkState, feedback: f64, experience: f64) -> Observation {
    let mut values = Vec::with_capacity(observation_dim(network.n_paths()));
    for path in &network.paths {
        values.push((path.bandwidth_mbps / OBS_BANDWIDTH_NORM_MBPS).clamp(0.0, 1.0));
        values.push((path.latency_ms / OBS_LATENCY_NORM_MS).clamp(0.0, 1.0));
        values.push((path.loss_rate / OBS_LOSS_NORM).clamp(0.0, 1.0));
        values.push(path.congestion.clamp(0.0, 1.0));
    }
    values.push(feedback);
    values.push(experience);
    Observation { values }
}

/// Three-way nudge applied to bandwidth demand or congestion windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Adjust {
    Decrease,
    Keep,
    Increase,
}

impl Adjust {
    pub const ALL: [Adjust; 3] = [Adjust::Decrease, Adjust::Keep, Adjust::Increase];

    pub fn index(self) -> usize {
        match self {
            Adjust::Decrease => 0,
            Adjust::Keep => 1,
            Adjust::Increase => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    /// Multiplicative factor: -10%, unchanged, +10%.
    pub fn factor(self) -> f64 {
        match self {
            Adjust::Decrease => 0.9,
            Adjust::Keep => 1.0,
            Adjust::Increase => 1.1,
        }
    }
}

/// One composite action: force a primary path, nudge bandwidth demand, and
/// nudge congestion windows. Flattens to `primary * 9 + bw * 3 + cwnd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpec {
    pub primary_path: usize,
    pub bw_adjust: Adjust,
    pub cwnd_adjust: Adjust,
}

impl ActionSpec {
    pub fn action_count(n_paths: usize) -> usize {
        9 * n_paths
    }

    pub fn flat_index(&self) -> usize {
        self.primary_path * 9 + self.bw_adjust.index() * 3 + self.cwnd_adjust.index()
    }

    pub fn from_flat(index: usize, n_paths: usize) -> Result<Self, DrlError> {
        let count = Self::action_count(n_paths);
        if index >= count {
            return Err(DrlError::InvalidAction { index, count });
        }
        Ok(Self {
            primary_path: index / 9,
            bw_adjust: Adjust::from_index((index % 9) / 3),
            cwnd_adjust: Adjust::from_index(index % 3),
        })
    }
}

/// Learning configuration shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub discount: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Multiplicative per-episode exploration decay.
    pub epsilon_decay: f64,
    pub grad_clip_norm: f64,
    pub episodes: u32,
    /// Steps per training episode.
    pub horizon: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            discount: 0.95,
            learning_rate: 0.01,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay: 0.99,
            grad_clip_norm: 5.0,
            episodes: 200,
            horizon: 1000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), DrlError> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(DrlError::InvalidConfig {
                field: "discount",
                reason: format!("must lie in (0, 1), got {}", self.discount),
            });
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(DrlError::InvalidConfig {
                field: "learning_rate",
                reason: format!("must be positive, got {}", self.learning_rate),
            });
        }
        if self.epsilon_end > self.epsilon_start || self.epsilon_end < 0.0 {
            return Err(DrlError::InvalidConfig {
                field: "epsilon_end",
                reason: format!("must lie in [0, epsilon_start], got {}", self.epsilon_end),
            });
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(DrlError::InvalidConfig {
                field: "epsilon_decay",
                reason: format!("must lie in (0, 1], got {}", self.epsilon_decay),
            });
        }
        if self.horizon == 0 {
            return Err(DrlError::InvalidConfig { field: "horizon", reason: "must be at least 1".into() });
        }
        Ok(())
    }

    /// Exploration rate at the start of `episode`:
    /// `max(epsilon_end, epsilon_start * decay^episode)`.
    pub fn epsilon_at(&self, episode: u32) -> f64 {
        (self.epsilon_start * self.epsilon_decay.powi(episode as i32)).max(self.epsilon_end)
    }
}

/// Hidden width of the actor and critic networks.
pub const HIDDEN_DIM: usize = 64;

/// One experienced transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
}

/// TD advantage: `r + discount * v_next - v`, with the bootstrap zeroed on
/// terminal transitions.
pub fn advantage(reward: f64, v_next: f64, v: f64, discount: f64, terminal: bool) -> f64 {
    reward + discount * v_next * if terminal { 0.0 } else { 1.0 } - v
}

/// Reward handed to an agent: the stream utility.
pub fn reward(bandwidth_norm: f64, latency_norm: f64, loss_norm: f64, qos: f64, p: &ControlParams) -> f64 {
    control::utility(bandwidth_norm, latency_norm, loss_norm, qos, p)
}

/// Sample an action index: with probability `epsilon` uniformly, otherwise
/// from `probs`. Always consumes exactly two draws, so trajectories stay
/// aligned across policies.
pub fn sample_action(probs: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    let explore: f64 = rng.gen();
    let u: f64 = rng.gen();
    if explore < epsilon {
        ((u * probs.len() as f64) as usize).min(probs.len() - 1)
    } else {
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

/// Operation-count estimate of training `n_agents` for `iterations` steps:
/// `n * I * (|S| * N + |A| * N)` with unit forward/backward cost constants.
pub fn complexity_estimate(
    n_agents: u64,
    state_dim: u64,
    action_dim: u64,
    param_count: u64,
    iterations: u64,
) -> u128 {
    let n = n_agents as u128;
    let s = state_dim as u128;
    let a = action_dim as u128;
    let p = param_count as u128;
    let i = iterations as u128;
    n * i * (s * p + a * p)
}

/// One stream's actor-critic pair. Each agent owns its parameters; nothing
/// here is shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
}

/// Diagnostics of one online update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub advantage: f64,
    pub td_error: f64,
    pub value: f64,
}

impl Agent {
    pub fn new(obs_dim: usize, n_actions: usize, rng: &mut impl Rng) -> Self {
        Self {
            actor: Mlp::new(&[obs_dim, HIDDEN_DIM, HIDDEN_DIM, n_actions], rng),
            critic: Mlp::new(&[obs_dim, HIDDEN_DIM, HIDDEN_DIM, 1], rng),
        }
    }

    /// Action distribution `softmax(actor(obs))`.
    pub fn policy(&self, obs: &Observation) -> Result<Vec<f64>, DrlError> {
        Ok(softmax(&self.actor.forward(&obs.values)?))
    }

    pub fn value(&self, obs: &Observation) -> Result<f64, DrlError> {
        Ok(self.critic.forward(&obs.values)?[0])
    }

    /// Deterministic evaluation action: highest-probability index, ties to
    /// the lowest.
    pub fn greedy_action(&self, obs: &Observation) -> Result<usize, DrlError> {
        let probs = self.policy(obs)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// One online actor-critic update from a single transition: critic
    /// descends the squared TD error, actor descends
    /// `-log pi(a|s) * advantage`.
    pub fn update(&mut self, transition: &Transition, cfg: &AgentConfig) -> Result<UpdateOutcome, DrlError> {
        let v = self.value(&transition.obs)?;
        let v_next = if transition.terminal { 0.0 } else { self.value(&transition.next_obs)? };
        let adv = advantage(transition.reward, v_next, v, cfg.discount, transition.terminal);
        let td_target = v + adv;

        let critic_grads = critic_gradient(&self.critic, &transition.obs.values, td_target)?;
        apply_update(&mut self.critic, &critic_grads, cfg.learning_rate, cfg.grad_clip_norm)?;

        let actor_grads = actor_gradient(&self.actor, &transition.obs.values, transition.action, adv)?;
        apply_update(&mut self.actor, &actor_grads, cfg.learning_rate, cfg.grad_clip_norm)?;

        Ok(UpdateOutcome { advantage: adv, td_error: adv, value: v })
    }

    /// Order-independent digest of all parameters; used to verify that
    /// training one agent leaves the others untouched.
    pub fn param_checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        let mut absorb = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        };
        for net in [&self.actor, &self.critic] {
            for layer in &net.layers {
                layer.weights.iter().chain(&layer.biases).for_each(|&v| absorb(v));
            }
        }
        hash
    }
}

/// Environment interface for the training loop. Implementations own their
/// randomness; `reset` must advance deterministically from episode to
/// episode so training is reproducible from the seed alone.
pub trait Environment {
    fn agent_count(&self) -> usize;
    fn observation_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Begin a new episode, returning per-agent initial observations.
    fn reset(&mut self) -> Vec<Observation>;
    /// Apply one action per agent and advance one step.
    fn step(&mut self, actions: &[usize]) -> EnvStep;
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct EnvStep {
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub terminal: bool,
}

/// Per-episode training diagnostics.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Sum over steps of the mean per-agent reward, one entry per episode.
    pub episode_rewards: Vec<f64>,
    /// Mean absolute critic TD error, one entry per episode.
    pub episode_td_errors: Vec<f64>,
}

/// Online multi-agent training loop.
///
/// Per episode, per step: every agent (in id order) observes and samples an
/// action from its policy with epsilon-uniform mixing; the environment
/// advances once with the joint action; every agent then updates critic and
/// actor from its own transition. Epsilon decays per episode. Non-finite
/// values abort with the offending episode and step.
pub fn train(
    env: &mut dyn Environment,
    agents: &mut [Agent],
    cfg: &AgentConfig,
    rng: &mut impl Rng,
) -> Result<TrainReport, DrlError> {
    cfg.validate()?;
    assert_eq!(env.agent_count(), agents.len(), "one agent per environment stream");
    let mut report = TrainReport::default();
    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon_at(episode);
        let mut observations = env.reset();
        let mut episode_reward = 0.0;
        let mut td_abs_sum = 0.0;
        let mut td_count = 0u64;
        for step in 0..cfg.horizon {
            let mut actions = Vec::with_capacity(agents.len());
            for (j, agent) in agents.iter().enumerate() {
                let probs = agent.policy(&observations[j]).map_err(|e| DrlError::Diverged {
                    episode,
                    step,
                    agent: j,
                    reason: e.to_string(),
                })?;
                if probs.iter().any(|p| !p.is_finite()) {
                    return Err(DrlError::Diverged {
                        episode,
                        step,
                        agent: j,
                        reason: "policy produced non-finite probabilities".into(),
                    });
                }
                actions.push(sample_action(&probs, epsilon, rng));
            }
            let outcome = env.step(&actions);
            let terminal = outcome.terminal || step + 1 == cfg.horizon;
            for (j, agent) in agents.iter_mut().enumerate() {
                if !outcome.rewards[j].is_finite() {
                    return Err(DrlError::Diverged {
                        episode,
                        step,
                        agent: j,
                        reason: format!("non-finite reward {}", outcome.rewards[j]),
                    });
                }
                let transition = Transition {
                    obs: observations[j].clone(),
                    action: actions[j],
                    reward: outcome.rewards[j],
                    next_obs: outcome.observations[j].clone(),
                    terminal,
                };
                let update = agent.update(&transition, cfg).map_err(|e| DrlError::Diverged {
                    episode,
                    step,
                    agent: j,
                    reason: e.to_string(),
                })?;
                td_abs_sum += update.td_error.abs();
                td_count += 1;
            }
            episode_reward +=
                outcome.rewards.iter().sum::<f64>() / agents.len().max(1) as f64;
            observations = outcome.observations;
            if terminal {
                break;
            }
        }
        report.episode_rewards.push(episode_reward);
        report
            .episode_td_errors
            .push(if td_count > 0 { td_abs_sum / td_count as f64 } else { 0.0 });
    }
    Ok(report)
}
