//! DQN / DDQN training over [`BeamEnv`] and greedy evaluation.
//!
//! The agent sees only [`StateVector`]s, rewards and done flags. All of its
//! randomness (exploration and minibatch sampling) comes from one stream; per
//! environment step the draw order is: one uniform for the ε test, one action
//! index if exploring, then `batch` replay indices if an update runs.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{build_codebook, ActionCodebook, CodebookConfig};
use crate::env::{BeamEnv, EnvSpec, Penalty, StateVector};
use crate::error::{Error, Result};
use crate::estimator::WeightVector;
use crate::neural::{adam_step, backward, clip_global_norm, AdamState, QNetwork};
use crate::par::{self, Execution};
use crate::seed::{self, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr: f64,
    /// Target sync period in gradient updates.
    pub target_sync: u64,
    pub batch: usize,
    pub buffer_capacity: usize,
    /// Updates start once the buffer holds this many transitions.
    pub warmup: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Steps until ε reaches `eps_end`; unset means 80% of all training steps.
    pub eps_decay_steps: Option<u64>,
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub grad_clip: f64,
    pub ddqn: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-3,
            target_sync: 200,
            batch: 32,
            buffer_capacity: 10_000,
            warmup: 1000,
            eps_start: 1.0,
            eps_end: 0.01,
            eps_decay_steps: None,
            episodes: 1000,
            hidden: vec![128, 128],
            grad_clip: 5.0,
            ddqn: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("agent: {m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.lr > 0.0) || !(self.grad_clip > 0.0) {
            return bad("lr and grad_clip must be positive");
        }
        if self.target_sync == 0 || self.batch == 0 || self.episodes == 0 {
            return bad("target_sync, batch and episodes must be positive");
        }
        if self.batch > self.buffer_capacity {
            return bad("batch must not exceed buffer_capacity");
        }
        if !(0.0 < self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return bad("need 0 < eps_end <= eps_start <= 1");
        }
        if self.eps_decay_steps == Some(0) {
            return bad("eps_decay_steps must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }

    pub fn decay_steps(&self, steps_per_episode: usize) -> u64 {
        self.eps_decay_steps
            .unwrap_or_else(|| ((0.8 * (self.episodes * steps_per_episode) as f64) as u64).max(1))
    }

    pub fn layer_sizes(&self, features: usize, actions: usize) -> Vec<usize> {
        let mut s = vec![features];
        s.extend(&self.hidden);
        s.push(actions);
        s
    }
}

/// `max(ε_end, ε_start·exp(−t/τ))` with `τ = decay_steps / ln(ε_start/ε_end)`.
pub fn epsilon_at(step: u64, eps_start: f64, eps_end: f64, decay_steps: u64) -> f64 {
    if eps_start <= eps_end {
        return eps_end;
    }
    let tau = decay_steps as f64 / (eps_start / eps_end).ln();
    (eps_start * (-(step as f64) / tau).exp()).max(eps_end)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn select_action<R: Rng + ?Sized>(net: &QNetwork, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    let u: f64 = rng.random();
    if u < epsilon {
        Ok(rng.random_range(0..net.output_dim()))
    } else {
        Ok(argmax(&net.forward(state)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stores `t`, returning the evicted oldest transition when full.
    pub fn push(&mut self, t: Transition) -> Option<Transition> {
        if self.items.len() < self.capacity {
            self.items.push(t);
            None
        } else {
            let old = std::mem::replace(&mut self.items[self.cursor], t);
            self.cursor = (self.cursor + 1) % self.capacity;
            Some(old)
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (new, old) = self.items.split_at(self.cursor);
        old.iter().chain(new)
    }

    /// `n` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        assert!(!self.items.is_empty(), "sampling an empty buffer");
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

/// `y = r + γ·Q̄(s′, a*)`, with `a*` the target-net argmax (standard) or the
/// online-net argmax (DDQN). Terminal transitions use `y = r`.
pub fn td_targets(
    target: &QNetwork,
    online: &QNetwork,
    batch: &[&Transition],
    gamma: f64,
    ddqn: bool,
) -> Result<Vec<f64>> {
    let live: Vec<&[f64]> = batch.iter().filter(|t| !t.done).map(|t| t.next_state.as_slice()).collect();
    let q_target = target.forward_batch(&live)?;
    let q_online = if ddqn { online.forward_batch(&live)? } else { Vec::new() };
    let mut k = 0;
    Ok(batch
        .iter()
        .map(|t| {
            if t.done {
                return t.reward;
            }
            let q = &q_target[k];
            let a = if ddqn { argmax(&q_online[k]) } else { argmax(q) };
            k += 1;
            t.reward + gamma * q[a]
        })
        .collect())
}

pub fn sync_target(online: &QNetwork, target: &mut QNetwork) -> Result<()> {
    target.copy_from(online)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// 1-based.
    pub episode: usize,
    pub cum_reward: f64,
    pub mean_error_m: f64,
    pub final_error_m: f64,
    /// ε used on the episode's last step.
    pub epsilon: f64,
    /// Mean minibatch loss over the episode's updates; 0 without updates.
    pub mean_loss: f64,
}

/// Instrumentation hook for the training loop.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainEvent<'a> {
    Step {
        global_step: u64,
        episode: usize,
        t: usize,
        epsilon: f64,
        action: usize,
        reward: f64,
        error_m: f64,
        done: bool,
        penalty: Option<Penalty>,
        buffer_len: usize,
    },
    Update { update: u64, loss: f64, grad_norm: f64 },
    Sync { update: u64 },
    EpisodeEnd { metrics: &'a EpisodeMetrics, net: &'a QNetwork },
}

pub struct TrainOutput {
    pub net: QNetwork,
    pub codebook: Arc<ActionCodebook>,
    pub metrics: Vec<EpisodeMetrics>,
    pub updates: u64,
}

/// Seed of training episode `episode` (0-based).
pub fn train_episode_seed(seed: u64, episode: usize) -> u64 {
    seed::derive_seed(seed, "train-episode", episode as u64)
}

pub fn train(
    spec: &EnvSpec,
    codebook_cfg: &CodebookConfig,
    cfg: &AgentConfig,
    seed: u64,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let codebook = Arc::new(build_codebook(spec.scenario.m_beams, codebook_cfg)?);
    let mut env = BeamEnv::new(spec.clone(), codebook.clone())?;
    let sizes = cfg.layer_sizes(env.feature_dim(), env.n_actions());
    let mut online = QNetwork::new(&sizes, &mut seed::stream(seed, "init", 0))?;
    let mut target = online.clone();
    let mut adam = AdamState::new(&online, cfg.lr);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng: SimRng = seed::stream(seed, "agent", 0);
    let decay = cfg.decay_steps(spec.env.steps_per_episode);
    let start_updates = cfg.warmup.max(cfg.batch);

    let mut metrics = Vec::with_capacity(cfg.episodes);
    let mut global_step = 0u64;
    let mut updates = 0u64;
    for episode in 0..cfg.episodes {
        let mut state: StateVector = env.reset(train_episode_seed(seed, episode))?;
        let (mut cum_reward, mut err_sum, mut loss_sum) = (0.0, 0.0, 0.0);
        let (mut n_steps, mut n_updates) = (0usize, 0usize);
        let mut final_error;
        let mut epsilon;
        loop {
            epsilon = epsilon_at(global_step, cfg.eps_start, cfg.eps_end, decay);
            let action = select_action(&online, state.as_slice(), epsilon, &mut rng)?;
            let out = env.step(action)?;
            cum_reward += out.reward;
            err_sum += out.error_m;
            final_error = out.error_m;
            n_steps += 1;
            buffer.push(Transition {
                state: state.into_inner(),
                action,
                reward: out.reward,
                next_state: out.next_state.as_slice().to_vec(),
                done: out.done,
            });
            observer(&TrainEvent::Step {
                global_step,
                episode,
                t: n_steps,
                epsilon,
                action,
                reward: out.reward,
                error_m: out.error_m,
                done: out.done,
                penalty: out.info.penalty,
                buffer_len: buffer.len(),
            });
            global_step += 1;

            if buffer.len() >= start_updates {
                let batch = buffer.sample(cfg.batch, &mut rng);
                let targets = td_targets(&target, &online, &batch, cfg.gamma, cfg.ddqn)?;
                let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
                let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
                let (mut grads, loss) = backward(&online, &states, &actions, &targets)?;
                let grad_norm = clip_global_norm(&mut grads, cfg.grad_clip);
                adam_step(&mut online, &grads, &mut adam)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite("training loss"));
                }
                updates += 1;
                n_updates += 1;
                loss_sum += loss;
                observer(&TrainEvent::Update { update: updates, loss, grad_norm });
                if updates % cfg.target_sync == 0 {
                    sync_target(&online, &mut target)?;
                    observer(&TrainEvent::Sync { update: updates });
                }
            }

            state = out.next_state;
            if out.done {
                break;
            }
        }
        let row = EpisodeMetrics {
            episode: episode + 1,
            cum_reward,
            mean_error_m: err_sum / n_steps as f64,
            final_error_m: final_error,
            epsilon,
            mean_loss: if n_updates > 0 { loss_sum / n_updates as f64 } else { 0.0 },
        };
        observer(&TrainEvent::EpisodeEnd { metrics: &row, net: &online });
        metrics.push(row);
    }
    Ok(TrainOutput {
        net: online,
        codebook,
        metrics,
        updates,
    })
}

/// What a policy does on one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Codebook index (rank-ordered weights).
    Action(usize),
    /// Weights in beam order.
    Weights(WeightVector),
    /// A position estimate that bypasses the estimator.
    Position([f64; 2]),
}

pub trait Policy: Sync {
    fn name(&self) -> String;
    fn decide(&self, env: &BeamEnv, state: &StateVector, rng: &mut SimRng) -> Result<Decision>;
}

/// ε = 0 rollout of a trained network.
pub struct GreedyPolicy {
    pub net: QNetwork,
}

impl Policy for GreedyPolicy {
    fn name(&self) -> String {
        "dqn".into()
    }

    fn decide(&self, _env: &BeamEnv, state: &StateVector, _rng: &mut SimRng) -> Result<Decision> {
        Ok(Decision::Action(argmax(&self.net.forward(state.as_slice())?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEval {
    pub episode: usize,
    pub final_error_m: f64,
    pub mean_error_m: f64,
    pub penalties: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub policy: String,
    pub seed: u64,
    pub episodes: Vec<EpisodeEval>,
    /// Root mean square of final-step errors.
    pub rmse_m: f64,
    /// Mean of per-episode mean errors.
    pub mean_error_m: f64,
}

pub fn eval_episode_seed(seed: u64, episode: usize) -> u64 {
    seed::derive_seed(seed, "eval-episode", episode as u64)
}

fn run_episode(policy: &dyn Policy, spec: &EnvSpec, codebook: &Arc<ActionCodebook>, seed: u64, index: usize) -> Result<EpisodeEval> {
    let ep_seed = eval_episode_seed(seed, index);
    let mut env = BeamEnv::new(spec.clone(), codebook.clone())?;
    let mut rng = seed::stream(ep_seed, "policy", 0);
    let mut state = env.reset(ep_seed)?;
    let (mut sum, mut penalties) = (0.0, 0);
    let mut last;
    let mut n = 0;
    loop {
        let out = match policy.decide(&env, &state, &mut rng)? {
            Decision::Action(a) => env.step(a)?,
            Decision::Weights(w) => env.step_weights(&w)?,
            Decision::Position(p) => env.step_position(p)?,
        };
        sum += out.error_m;
        last = out.error_m;
        n += 1;
        penalties += usize::from(out.info.penalty.is_some());
        state = out.next_state;
        if out.done {
            break;
        }
    }
    Ok(EpisodeEval {
        episode: index,
        final_error_m: last,
        mean_error_m: sum / n as f64,
        penalties,
    })
}

/// Rolls `policy` over `n_episodes` fresh scenarios derived from `seed`.
/// Episodes are independent, so the result does not depend on `exec`.
pub fn evaluate(
    policy: &dyn Policy,
    spec: &EnvSpec,
    codebook: &Arc<ActionCodebook>,
    n_episodes: usize,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::Config("eval: n_episodes must be positive".into()));
    }
    let episodes = par::try_map_indexed(n_episodes, exec, |i| run_episode(policy, spec, codebook, seed, i))?;
    Ok(summarize(policy.name(), seed, episodes))
}

pub fn summarize(policy: String, seed: u64, episodes: Vec<EpisodeEval>) -> EvalReport {
    let n = episodes.len() as f64;
    let rmse_m = (episodes.iter().map(|e| e.final_error_m.powi(2)).sum::<f64>() / n).sqrt();
    let mean_error_m = episodes.iter().map(|e| e.mean_error_m).sum::<f64>() / n;
    EvalReport {
        policy,
        seed,
        episodes,
        rmse_m,
        mean_error_m,
    }
}
