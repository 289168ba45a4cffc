//! Beam-weighting MDP around the WLS estimator.
//!
//! An episode freezes one scenario and one channel realization; only the
//! ranging noise is redrawn at every step. Beams are ranked once per episode
//! by normalized SINR (descending, ties by beam id) and both the state blocks
//! and the codebook positions follow that rank order.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelConfig, ChannelRealization};
use crate::codebook::ActionCodebook;
use crate::error::{Error, Result};
use crate::estimator::{positioning_error, wls_solve, EstimatorConfig, WeightVector};
use crate::geometry::{bearing_features, distance, generate_scenario, Scenario, ScenarioConfig};
use crate::measurement::{synthesize_with, NoiseConfig, Observation};
use crate::seed::{self, SimRng};

/// Features per beam block.
pub const FEATURES_PER_BEAM: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Error scale (m).
    pub tau_m: f64,
    /// Weight on mass placed on low-SINR beams.
    pub alpha: f64,
    /// Weight on the entropy term.
    pub beta: f64,
    /// Lower bound on the reward. `-inf` disables it.
    pub floor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            tau_m: 50.0,
            alpha: 0.1,
            beta: 0.05,
            floor: f64::NEG_INFINITY,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0) || !(self.alpha >= 0.0) || !(self.beta >= 0.0) || self.floor.is_nan() {
            return Err(Error::Config(
                "reward: need tau_m > 0, alpha >= 0, beta >= 0 and a non-NaN floor".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub steps_per_episode: usize,
    /// Reward for a step whose weights leave the estimator under-determined
    /// or make it diverge.
    pub rank_deficient_penalty: f64,
    /// When the solve warm-started at the previous estimate fails to converge
    /// or diverges, solve again from the scene center and keep the solution
    /// with the lower weighted residual cost.
    pub restart_from_center: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            steps_per_episode: 100,
            rank_deficient_penalty: -10.0,
            restart_from_center: true,
        }
    }
}

/// Everything the simulator needs for one environment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvSpec {
    pub scenario: ScenarioConfig,
    pub channel: ChannelConfig,
    pub noise: NoiseConfig,
    pub reward: RewardConfig,
    pub estimator: EstimatorConfig,
    pub env: EnvConfig,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.channel.validate()?;
        self.noise.validate()?;
        self.reward.validate()?;
        self.estimator.validate()?;
        if self.env.steps_per_episode == 0 {
            return Err(Error::Config("env: steps_per_episode must be positive".into()));
        }
        if !self.env.rank_deficient_penalty.is_finite() {
            return Err(Error::Config("env: rank_deficient_penalty must be finite".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        FEATURES_PER_BEAM * self.scenario.m_beams
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Block of the `rank`-th strongest beam.
    pub fn block(&self, rank: usize) -> &[f64] {
        &self.0[rank * FEATURES_PER_BEAM..(rank + 1) * FEATURES_PER_BEAM]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    RankDeficient,
    Divergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub position: [f64; 2],
    pub clock_bias: f64,
    /// Applied weights in beam order.
    pub weights: Vec<f64>,
    pub penalty: Option<Penalty>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateVector,
    pub reward: f64,
    pub error_m: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Simulator-side truth for baselines and diagnostics. Never part of the
/// agent's input.
#[derive(Debug, Clone, Copy)]
pub struct OracleView<'a> {
    pub scenario: &'a Scenario,
    pub observation: &'a Observation,
    pub channel: &'a ChannelRealization,
    pub previous_estimate: [f64; 2],
}

/// Natural-log entropy with `0·ln 0 = 0`.
pub fn entropy(w: &[f64]) -> f64 {
    -w.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `−(e/τ)² − α Σ w_i (1 − q_i) − β (1 − H(w))`, bounded below by `cfg.floor`.
pub fn reward(error_m: f64, w: &[f64], sinr_norm: &[f64], cfg: &RewardConfig) -> f64 {
    let quality: f64 = w.iter().zip(sinr_norm).map(|(wi, q)| wi * (1.0 - q)).sum();
    let e = error_m / cfg.tau_m;
    (-e * e - cfg.alpha * quality - cfg.beta * (1.0 - entropy(w))).max(cfg.floor)
}

fn weighted_cost(w: &[f64], residuals: &[f64]) -> f64 {
    w.iter().zip(residuals).map(|(w, r)| w * r * r).sum()
}

/// Beam ids sorted by descending normalized SINR, ties by id.
pub fn rank_order(sinr_norm: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sinr_norm.len()).collect();
    order.sort_by(|&a, &b| sinr_norm[b].total_cmp(&sinr_norm[a]));
    order
}

#[derive(Debug, Clone)]
struct Episode {
    scenario: Scenario,
    channel: ChannelRealization,
    order: Vec<usize>,
    noise_rng: SimRng,
    observation: Observation,
    estimate: [f64; 2],
    residuals: Vec<f64>,
    weights: Vec<f64>,
    t: usize,
}

#[derive(Debug, Clone)]
pub struct BeamEnv {
    spec: EnvSpec,
    codebook: Arc<ActionCodebook>,
    episode: Option<Episode>,
}

impl BeamEnv {
    pub fn new(spec: EnvSpec, codebook: Arc<ActionCodebook>) -> Result<Self> {
        spec.validate()?;
        if codebook.m != spec.scenario.m_beams {
            return Err(Error::DimensionMismatch {
                expected: spec.scenario.m_beams,
                got: codebook.m,
            });
        }
        Ok(Self {
            spec,
            codebook,
            episode: None,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn codebook(&self) -> &ActionCodebook {
        &self.codebook
    }

    pub fn n_actions(&self) -> usize {
        self.codebook.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim()
    }

    /// Starts an episode on a freshly drawn scenario.
    pub fn reset(&mut self, seed: u64) -> Result<StateVector> {
        let scenario = generate_scenario(&self.spec.scenario, seed::derive_seed(seed, "scenario", 0))?;
        self.reset_with(scenario, seed)
    }

    /// Starts an episode on a given scenario; `seed` drives channel and noise.
    pub fn reset_with(&mut self, scenario: Scenario, seed: u64) -> Result<StateVector> {
        let m = self.spec.scenario.m_beams;
        if scenario.m_beams != m || scenario.beam_centers.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: scenario.beam_centers.len(),
            });
        }
        let channel = channel::realize(&scenario, &self.spec.channel, &mut seed::stream(seed, "channel", 0))?;
        let order = rank_order(&channel.sinr_norm);
        let mut noise_rng = seed::stream(seed, "noise", 0);
        let observation = synthesize_with(&scenario, &channel.sinr_norm, &self.spec.noise, &mut noise_rng)?;
        let estimate = scenario.scene_center();
        let episode = Episode {
            scenario,
            channel,
            order,
            noise_rng,
            observation,
            estimate,
            residuals: vec![0.0; m],
            weights: vec![1.0 / m as f64; m],
            t: 0,
        };
        let state = self.build_state(&episode);
        self.episode = Some(episode);
        Ok(state)
    }

    fn build_state(&self, ep: &Episode) -> StateVector {
        let diag = ep.scenario.diagonal_m();
        let tau = self.spec.reward.tau_m;
        let mut f = Vec::with_capacity(self.feature_dim());
        for &i in &ep.order {
            let c = &ep.scenario.beam_centers[i];
            let (s, co) = bearing_features(&ep.estimate, c).unwrap_or((0.0, 0.0));
            f.extend_from_slice(&[
                (distance(&ep.estimate, c) / diag).clamp(0.0, 1.0),
                s,
                co,
                ep.channel.sinr_norm[i],
                (ep.residuals[i] / tau).clamp(-1.0, 1.0),
                ep.weights[i],
            ]);
        }
        StateVector(f)
    }

    fn episode(&self) -> Result<&Episode> {
        self.episode.as_ref().ok_or(Error::NotReset)
    }

    pub fn step_index(&self) -> Result<usize> {
        Ok(self.episode()?.t)
    }

    pub fn is_done(&self) -> bool {
        self.episode
            .as_ref()
            .is_some_and(|e| e.t >= self.spec.env.steps_per_episode)
    }

    /// Beam id behind each rank position.
    pub fn rank_to_beam(&self) -> Result<&[usize]> {
        Ok(&self.episode()?.order)
    }

    pub fn oracle(&self) -> Result<OracleView<'_>> {
        let ep = self.episode()?;
        Ok(OracleView {
            scenario: &ep.scenario,
            observation: &ep.observation,
            channel: &ep.channel,
            previous_estimate: ep.estimate,
        })
    }

    /// Applies codebook action `action` (rank-ordered weights).
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let ranked = self.codebook.decode(action)?.clone();
        let order = &self.episode()?.order;
        let mut w = vec![0.0; ranked.len()];
        for (rank, &beam) in order.iter().enumerate() {
            w[beam] = ranked[rank];
        }
        self.step_weights(&WeightVector::new(w)?)
    }

    /// Applies weights given in beam order.
    pub fn step_weights(&mut self, weights: &WeightVector) -> Result<StepOutcome> {
        self.check_live()?;
        let m = self.spec.scenario.m_beams;
        if weights.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: weights.len() });
        }
        let ep = self.episode.as_ref().ok_or(Error::NotReset)?;
        let solve = |init: &[f64; 2]| {
            wls_solve(
                &ep.observation.pseudoranges,
                &ep.scenario.beam_centers,
                weights,
                init,
                &self.spec.estimator,
            )
        };
        let mut solved = solve(&ep.estimate);
        let center = ep.scenario.scene_center();
        let failed = match &solved {
            Ok(sol) => !sol.converged,
            Err(e) => matches!(e, Error::Divergence { .. }),
        };
        if failed && self.spec.env.restart_from_center && ep.estimate != center {
            let retry = solve(&center);
            let better = match (&solved, &retry) {
                (Ok(a), Ok(b)) => weighted_cost(weights, &b.residuals) < weighted_cost(weights, &a.residuals),
                (Err(_), Ok(_)) => true,
                _ => false,
            };
            if better {
                solved = retry;
            }
        }
        let (position, clock_bias, residuals, penalty) = match solved {
            Ok(sol) => ([sol.position[0], sol.position[1]], sol.clock_bias, Some(sol.residuals), None),
            Err(Error::RankDeficient { .. }) => (ep.estimate, 0.0, None, Some(Penalty::RankDeficient)),
            Err(Error::Divergence { .. }) => (ep.estimate, 0.0, None, Some(Penalty::Divergence)),
            Err(e) => return Err(e),
        };
        self.finish_step(position, clock_bias, residuals, weights.to_vec(), penalty)
    }

    /// Takes a position estimate produced outside the estimator. The reward
    /// is evaluated with uniform weights.
    pub fn step_position(&mut self, position: [f64; 2]) -> Result<StepOutcome> {
        self.check_live()?;
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("position estimate"));
        }
        let m = self.spec.scenario.m_beams;
        self.finish_step(position, 0.0, None, vec![1.0 / m as f64; m], None)
    }

    fn check_live(&self) -> Result<()> {
        self.episode()?;
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        Ok(())
    }

    fn finish_step(
        &mut self,
        position: [f64; 2],
        clock_bias: f64,
        residuals: Option<Vec<f64>>,
        weights: Vec<f64>,
        penalty: Option<Penalty>,
    ) -> Result<StepOutcome> {
        let spec = &self.spec;
        let mut ep = self.episode.take().ok_or(Error::NotReset)?;
        let error_m = positioning_error(&position, &ep.scenario.ut_true);
        let r = match penalty {
            Some(_) => spec.env.rank_deficient_penalty,
            None => reward(error_m, &weights, &ep.channel.sinr_norm, &spec.reward),
        };
        ep.estimate = position;
        if let Some(res) = residuals {
            ep.residuals = res;
        }
        ep.weights = weights.clone();
        ep.t += 1;
        let done = ep.t >= spec.env.steps_per_episode;
        let next = synthesize_with(&ep.scenario, &ep.channel.sinr_norm, &spec.noise, &mut ep.noise_rng);
        let next = match next {
            Ok(obs) => obs,
            Err(e) => {
                self.episode = Some(ep);
                return Err(e);
            }
        };
        ep.observation = next;
        let next_state = self.build_state(&ep);
        self.episode = Some(ep);
        Ok(StepOutcome {
            next_state,
            reward: r,
            error_m,
            done,
            info: StepInfo {
                position,
                clock_bias,
                weights,
                penalty,
            },
        })
    }
}
