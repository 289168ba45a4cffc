//! Drivers behind the CLI subcommands. Each writes CSV artifacts with fixed
//! headers into an output directory.
//!
//! | file | columns |
//! |---|---|
//! | `metrics.csv` | episode, cum_reward, mean_error_m, final_error_m, epsilon, mean_loss |
//! | `eval.csv` | policy, seed, episode, final_error_m, mean_error_m, penalties |
//! | `eval_summary.csv` | policy, seed, episodes, rmse_m, mean_error_m (last row: seed `mean`) |
//! | `bench.csv` | episode, train_episode_s, train_step_s, inference_step_s |
//! | `codebook.csv` | index, w0 .. w{M-1} |

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::agent::{self, evaluate, EpisodeMetrics, EvalReport, GreedyPolicy, Policy, TrainEvent};
use crate::baselines::{BaselineKind, BaselinePolicy};
use crate::codebook::{build_codebook, ActionCodebook};
use crate::config::ExperimentConfig;
use crate::env::BeamEnv;
use crate::error::{Error, Result};
use crate::neural::QNetwork;
use crate::par::{self, Execution};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "qnet.ckpt";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const EVAL_FILE: &str = "eval.csv";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.csv";
pub const BENCH_FILE: &str = "bench.csv";
pub const CODEBOOK_FILE: &str = "codebook.csv";

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics(path: &Path, rows: &[EpisodeMetrics]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub struct TrainArtifacts {
    pub metrics: Vec<EpisodeMetrics>,
    pub net: QNetwork,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub config_path: PathBuf,
}

/// Trains with `cfg` and writes metrics, the final checkpoint and the resolved
/// config into `out_dir`.
pub fn run_train(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<TrainArtifacts> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let config_path = out_dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&config_path, cfg.to_toml()?)?;
    let every = cfg.checkpoint_every;
    let mut ckpt_err = None;
    let out = agent::train(&cfg.env_spec(), &cfg.codebook, &cfg.agent, cfg.seed, &mut |ev| {
        if let TrainEvent::EpisodeEnd { metrics, net } = ev {
            if every > 0 && metrics.episode % every == 0 && ckpt_err.is_none() {
                let p = out_dir.join(format!("qnet_ep{:05}.ckpt", metrics.episode));
                if let Err(e) = net.save(&p) {
                    ckpt_err = Some(e);
                }
            }
        }
        observer(ev);
    })?;
    if let Some(e) = ckpt_err {
        return Err(e);
    }
    let metrics_path = out_dir.join(METRICS_FILE);
    write_metrics(&metrics_path, &out.metrics)?;
    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);
    out.net.save(&checkpoint_path)?;
    Ok(TrainArtifacts {
        metrics: out.metrics,
        net: out.net,
        metrics_path,
        checkpoint_path,
        config_path,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySource {
    Checkpoint(PathBuf),
    Baseline(BaselineKind),
}

pub fn codebook_for(cfg: &ExperimentConfig) -> Result<ActionCodebook> {
    build_codebook(cfg.scenario.m_beams, &cfg.codebook)
}

/// Loads a checkpoint and checks it against the configured state and action
/// dimensions.
pub fn load_policy_net(cfg: &ExperimentConfig, path: &Path, codebook: &ActionCodebook) -> Result<QNetwork> {
    if !path.exists() {
        return Err(Error::Checkpoint(format!("{}: no such file", path.display())));
    }
    let net = QNetwork::load(path)?;
    let features = cfg.env_spec().feature_dim();
    if net.input_dim() != features || net.output_dim() != codebook.len() {
        return Err(Error::Checkpoint(format!(
            "{}: network maps {} -> {}, config needs {} -> {}",
            path.display(),
            net.input_dim(),
            net.output_dim(),
            features,
            codebook.len()
        )));
    }
    Ok(net)
}

pub fn make_policy(cfg: &ExperimentConfig, source: &PolicySource, codebook: &ActionCodebook) -> Result<Box<dyn Policy>> {
    Ok(match source {
        PolicySource::Checkpoint(p) => Box::new(GreedyPolicy {
            net: load_policy_net(cfg, p, codebook)?,
        }),
        PolicySource::Baseline(kind) => Box::new(BaselinePolicy {
            kind: *kind,
            geometry: cfg.geometry_baseline.clone(),
        }),
    })
}

/// Evaluates one policy on each seed in `seeds`. Reports come back in the
/// order of `seeds`, whatever the execution mode.
pub fn eval_seeds(
    cfg: &ExperimentConfig,
    source: &PolicySource,
    episodes: usize,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let codebook = std::sync::Arc::new(codebook_for(cfg)?);
    let policy = make_policy(cfg, source, &codebook)?;
    let spec = cfg.env_spec();
    par::try_map_indexed(seeds.len(), exec, |i| {
        evaluate(policy.as_ref(), &spec, &codebook, episodes, seeds[i], exec)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct EvalRow {
    pub policy: String,
    pub seed: u64,
    pub episode: usize,
    pub final_error_m: f64,
    pub mean_error_m: f64,
    pub penalties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct EvalSummaryRow {
    pub policy: String,
    /// Seed number, or `mean` for the aggregate row.
    pub seed: String,
    pub episodes: usize,
    pub rmse_m: f64,
    pub mean_error_m: f64,
}

pub fn summary_rows(reports: &[EvalReport]) -> Vec<EvalSummaryRow> {
    let mut rows: Vec<EvalSummaryRow> = reports
        .iter()
        .map(|r| EvalSummaryRow {
            policy: r.policy.clone(),
            seed: r.seed.to_string(),
            episodes: r.episodes.len(),
            rmse_m: r.rmse_m,
            mean_error_m: r.mean_error_m,
        })
        .collect();
    if let Some(first) = reports.first() {
        let n = reports.len() as f64;
        rows.push(EvalSummaryRow {
            policy: first.policy.clone(),
            seed: "mean".into(),
            episodes: reports.iter().map(|r| r.episodes.len()).sum(),
            rmse_m: reports.iter().map(|r| r.rmse_m).sum::<f64>() / n,
            mean_error_m: reports.iter().map(|r| r.mean_error_m).sum::<f64>() / n,
        });
    }
    rows
}

/// Writes `eval.csv` and `eval_summary.csv`.
pub fn write_eval(out_dir: &Path, reports: &[EvalReport]) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let rows: Vec<EvalRow> = reports
        .iter()
        .flat_map(|r| {
            r.episodes.iter().map(|e| EvalRow {
                policy: r.policy.clone(),
                seed: r.seed,
                episode: e.episode,
                final_error_m: e.final_error_m,
                mean_error_m: e.mean_error_m,
                penalties: e.penalties,
            })
        })
        .collect();
    write_rows(&out_dir.join(EVAL_FILE), &rows)?;
    write_rows(&out_dir.join(EVAL_SUMMARY_FILE), &summary_rows(reports))
}

/// `base, base+1, ...`.
pub fn seed_list(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct BenchRow {
    pub episode: usize,
    pub train_episode_s: f64,
    pub train_step_s: f64,
    pub inference_step_s: f64,
}

/// Times each training episode and the greedy forward pass of the network as
/// it stands at the end of that episode.
pub fn run_bench(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let codebook = std::sync::Arc::new(codebook_for(cfg)?);
    let mut probe_env = BeamEnv::new(cfg.env_spec(), codebook)?;
    let probe = probe_env.reset(cfg.seed)?;
    let steps = cfg.env.steps_per_episode;
    let mut rows = Vec::with_capacity(cfg.agent.episodes);
    let mut start = Instant::now();
    agent::train(&cfg.env_spec(), &cfg.codebook, &cfg.agent, cfg.seed, &mut |ev| {
        if let TrainEvent::EpisodeEnd { metrics, net } = ev {
            let train_s = start.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let mut sink = 0usize;
            for _ in 0..steps {
                if let Ok(q) = net.forward(probe.as_slice()) {
                    sink = sink.wrapping_add(agent::argmax(&q));
                }
            }
            std::hint::black_box(sink);
            let infer_s = t0.elapsed().as_secs_f64() / steps as f64;
            rows.push(BenchRow {
                episode: metrics.episode,
                train_episode_s: train_s,
                train_step_s: train_s / steps as f64,
                inference_step_s: infer_s,
            });
            start = Instant::now();
        }
    })?;
    write_rows(&out_dir.join(BENCH_FILE), &rows)?;
    Ok(rows)
}

/// Writes the action table as `index, w0..w{M-1}`.
pub fn run_codebook(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ActionCodebook> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let cb = codebook_for(cfg)?;
    let mut w = csv::Writer::from_path(out_dir.join(CODEBOOK_FILE))?;
    let mut header = vec!["index".to_string()];
    header.extend((0..cb.m).map(|i| format!("w{i}")));
    w.write_record(&header)?;
    for (i, a) in cb.actions.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(a.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(cb)
}
