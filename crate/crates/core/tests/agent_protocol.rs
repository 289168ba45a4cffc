//! Replay, exploration, TD targets, target sync and training smoke runs.

use std::cell::RefCell;
use std::sync::Arc;

use beamloc_core::agent::{
    epsilon_at, evaluate, select_action, sync_target, td_targets, train, AgentConfig, Decision, Policy, ReplayBuffer,
    TrainEvent, Transition,
};
use beamloc_core::codebook::{build_codebook, CodebookConfig};
use beamloc_core::env::{BeamEnv, EnvSpec, StateVector};
use beamloc_core::measurement::NoiseConfig;
use beamloc_core::neural::QNetwork;
use beamloc_core::par::Execution;
use beamloc_core::seed::{rng_from, SimRng};
use beamloc_core::Result;
use proptest::prelude::*;
use rand::Rng;

fn tr(i: usize) -> Transition {
    Transition {
        state: vec![i as f64],
        action: i % 2,
        reward: i as f64,
        next_state: vec![i as f64 + 0.5],
        done: i % 5 == 0,
    }
}

fn small_agent(episodes: usize) -> AgentConfig {
    AgentConfig {
        episodes,
        warmup: 20,
        batch: 8,
        hidden: vec![16, 16],
        target_sync: 7,
        ..Default::default()
    }
}

fn small_spec(steps: usize) -> EnvSpec {
    let mut s = EnvSpec::default();
    s.env.steps_per_episode = steps;
    s
}

/// Two-input, two-action linear net: `Q = W x`.
fn linear_net(w: [[f64; 2]; 2]) -> QNetwork {
    let mut n = QNetwork::zeros(&[2, 2]).unwrap();
    n.layers[0].weights = vec![w[0][0], w[0][1], w[1][0], w[1][1]];
    n
}

#[test]
fn td_targets_by_hand() {
    // next state (1, 0): target Q = (1, 3), online Q = (5, 2)
    let target = linear_net([[1.0, 0.0], [3.0, 0.0]]);
    let online = linear_net([[5.0, 0.0], [2.0, 0.0]]);
    let t = Transition {
        state: vec![0.0, 0.0],
        action: 0,
        reward: 0.5,
        next_state: vec![1.0, 0.0],
        done: false,
    };
    let std = td_targets(&target, &online, &[&t], 0.9, false).unwrap();
    let dd = td_targets(&target, &online, &[&t], 0.9, true).unwrap();
    assert!((std[0] - (0.5 + 0.9 * 3.0)).abs() < 1e-15);
    assert!((dd[0] - (0.5 + 0.9 * 1.0)).abs() < 1e-15);
    let term = Transition { done: true, ..t };
    assert_eq!(td_targets(&target, &online, &[&term], 0.9, false).unwrap(), vec![0.5]);
}

#[test]
fn ddqn_equals_standard_when_nets_coincide() {
    let net = QNetwork::new(&[1, 8, 3], &mut rng_from(4)).unwrap();
    let batch: Vec<Transition> = (1..20).map(tr).collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    assert_eq!(
        td_targets(&net, &net, &refs, 0.99, false).unwrap(),
        td_targets(&net, &net, &refs, 0.99, true).unwrap()
    );
}

#[test]
fn greedy_and_uniform_exploration() {
    let net = QNetwork::new(&[3, 8, 6], &mut rng_from(1)).unwrap();
    let s = [0.3, -0.2, 0.9];
    let q = net.forward(&s).unwrap();
    let best = beamloc_core::agent::argmax(&q);
    let mut rng = rng_from(2);
    for _ in 0..50 {
        assert_eq!(select_action(&net, &s, 0.0, &mut rng).unwrap(), best);
    }
    // chi-square over 6 bins, 5 dof: 1% critical value 15.086
    let n = 100_000;
    let mut counts = [0usize; 6];
    for _ in 0..n {
        counts[select_action(&net, &s, 1.0, &mut rng).unwrap()] += 1;
    }
    let e = n as f64 / 6.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    assert!(chi2 < 15.086, "chi2 = {chi2}");
    let tie = QNetwork::zeros(&[3, 4]).unwrap();
    assert_eq!(select_action(&tie, &s, 0.0, &mut rng).unwrap(), 0);
}

#[test]
fn epsilon_endpoints() {
    let cfg = AgentConfig::default();
    let decay = cfg.decay_steps(100);
    assert_eq!(decay, 80_000);
    assert_eq!(epsilon_at(0, cfg.eps_start, cfg.eps_end, decay), 1.0);
    assert!((epsilon_at(decay, cfg.eps_start, cfg.eps_end, decay) - 0.01).abs() < 1e-9);
}

#[test]
fn sync_copies_exactly() {
    let online = QNetwork::new(&[4, 6, 3], &mut rng_from(1)).unwrap();
    let mut target = QNetwork::new(&[4, 6, 3], &mut rng_from(2)).unwrap();
    sync_target(&online, &mut target).unwrap();
    assert_eq!(online, target);
    let mut other = QNetwork::zeros(&[4, 5, 3]).unwrap();
    assert!(sync_target(&online, &mut other).is_err());
}

#[test]
fn smoke_run_logs_rows_and_syncs_on_schedule() {
    let syncs = RefCell::new(Vec::new());
    let updates = RefCell::new(0u64);
    let steps = RefCell::new(0usize);
    let out = train(&small_spec(5), &CodebookConfig::default(), &small_agent(8), 3, &mut |ev| match ev {
        TrainEvent::Sync { update } => syncs.borrow_mut().push(*update),
        TrainEvent::Update { update, .. } => *updates.borrow_mut() = *update,
        TrainEvent::Step { t, .. } => {
            assert!(*t >= 1 && *t <= 5);
            *steps.borrow_mut() += 1;
        }
        _ => {}
    })
    .unwrap();
    assert_eq!(out.metrics.len(), 8);
    assert_eq!(*steps.borrow(), 40);
    // updates begin once 20 transitions are stored
    assert_eq!(out.updates, 40 - 20 + 1);
    assert_eq!(*updates.borrow(), out.updates);
    let expect: Vec<u64> = (1..=out.updates).filter(|u| u % 7 == 0).collect();
    assert_eq!(*syncs.borrow(), expect);
    for m in &out.metrics {
        assert!(m.cum_reward.is_finite() && m.mean_error_m.is_finite() && m.mean_loss.is_finite());
    }
}

#[test]
fn training_is_deterministic() {
    let run = |ddqn| {
        let cfg = AgentConfig { ddqn, ..small_agent(6) };
        train(&small_spec(6), &CodebookConfig::default(), &cfg, 11, &mut |_| {}).unwrap()
    };
    let (a, b) = (run(false), run(false));
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.net, b.net);
    assert_ne!(run(true).net, a.net);
}

struct Constant;

impl Policy for Constant {
    fn name(&self) -> String {
        "center".into()
    }

    fn decide(&self, env: &BeamEnv, _: &StateVector, _: &mut SimRng) -> Result<Decision> {
        Ok(Decision::Position(env.oracle()?.scenario.scene_center()))
    }
}

struct Truth;

impl Policy for Truth {
    fn name(&self) -> String {
        "truth-weights".into()
    }

    fn decide(&self, env: &BeamEnv, _: &StateVector, _: &mut SimRng) -> Result<Decision> {
        Ok(Decision::Weights(beamloc_core::estimator::WeightVector::uniform(env.oracle()?.scenario.m_beams)))
    }
}

#[test]
fn constant_estimate_rmse_matches_closed_form() {
    // UT uniform on an L×L square, estimate at the center:
    // E[d²] = L²/6 and E[d] = L·(√2 + ln(1+√2))/6.
    let spec = small_spec(1);
    let cb = Arc::new(build_codebook(10, &CodebookConfig::default()).unwrap());
    let r = evaluate(&Constant, &spec, &cb, 4000, 5, Execution::Parallel).unwrap();
    let l = spec.scenario.area_side_m;
    let rmse = l / 6f64.sqrt();
    let mean = l * (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln()) / 6.0;
    assert!((r.rmse_m / rmse - 1.0).abs() < 0.03, "{} vs {rmse}", r.rmse_m);
    assert!((r.mean_error_m / mean - 1.0).abs() < 0.03, "{} vs {mean}", r.mean_error_m);
    assert_eq!(r.episodes.len(), 4000);
}

#[test]
fn noiseless_estimator_policy_is_exact() {
    let mut spec = small_spec(3);
    spec.noise = NoiseConfig::noiseless();
    let cb = Arc::new(build_codebook(10, &CodebookConfig::default()).unwrap());
    let r = evaluate(&Truth, &spec, &cb, 50, 2, Execution::Sequential).unwrap();
    assert!(r.rmse_m < 1e-6, "{}", r.rmse_m);
}

#[test]
fn evaluation_ignores_execution_mode() {
    let spec = small_spec(4);
    let cb = Arc::new(build_codebook(10, &CodebookConfig::default()).unwrap());
    let a = evaluate(&Truth, &spec, &cb, 16, 8, Execution::Parallel).unwrap();
    let b = evaluate(&Truth, &spec, &cb, 16, 8, Execution::Sequential).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn buffer_is_fifo(cap in 1usize..50, extra in 0usize..80) {
        let mut b = ReplayBuffer::new(cap);
        let n = cap + extra;
        for i in 0..n {
            let ev = b.push(tr(i));
            prop_assert_eq!(ev.map(|t| t.reward as usize), i.checked_sub(cap));
        }
        prop_assert_eq!(b.len(), cap.min(n));
        let held: Vec<usize> = b.iter().map(|t| t.reward as usize).collect();
        prop_assert_eq!(held, (n - cap.min(n)..n).collect::<Vec<_>>());
    }

    #[test]
    fn samples_are_resident(cap in 1usize..40, n in 1usize..100, batch in 1usize..64, seed in 0u64..1000) {
        let mut b = ReplayBuffer::new(cap);
        for i in 0..n {
            b.push(tr(i));
        }
        let mut rng = rng_from(seed);
        let s = b.sample(batch, &mut rng);
        prop_assert_eq!(s.len(), batch);
        let lo = n.saturating_sub(cap);
        for t in s {
            prop_assert!((lo..n).contains(&(t.reward as usize)));
        }
        let _: f64 = rng.random();
    }
}
