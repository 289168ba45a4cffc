//! `beamloc`: train, evaluate, time and inspect the beam-weighting agent.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamloc_core::agent::TrainEvent;
use beamloc_core::baselines::BaselineKind;
use beamloc_core::config::ExperimentConfig;
use beamloc_core::experiment::{self, PolicySource};
use beamloc_core::par::Execution;
use beamloc_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "beamloc", version, about = "Multi-beam LEO positioning lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Steps per episode.
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a DQN and write metrics.csv, a checkpoint and the resolved config.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a checkpoint or a baseline; writes eval.csv and eval_summary.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Trained network to roll out greedily.
        #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        /// uniform, sinr_proportional, inverse_variance_oracle, geometry_intersection or random.
        #[arg(long)]
        baseline: Option<String>,
        /// Evaluation episodes per seed.
        #[arg(long)]
        episodes: Option<usize>,
        /// Number of consecutive seeds starting at --seed.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Time training episodes and greedy inference; writes bench.csv.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Dump the action codebook to codebook.csv.
    Codebook {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownBaseline { .. } | Error::Checkpoint(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("{}: {io}", p.display())),
            other => Failure::from(other),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.steps {
        cfg.env.steps_per_episode = t;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn validated(cfg: ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { common, episodes } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = episodes {
                cfg.agent.episodes = e;
            }
            let cfg = validated(cfg)?;
            let total = cfg.agent.episodes;
            let out = cfg.output_dir.clone();
            let art = experiment::run_train(&cfg, &out, &mut |ev| {
                if let TrainEvent::EpisodeEnd { metrics, .. } = ev {
                    if metrics.episode % 50 == 0 || metrics.episode == total {
                        eprintln!(
                            "episode {:>5}/{total}  mean error {:>10.3} m  eps {:.3}  loss {:.4}",
                            metrics.episode, metrics.mean_error_m, metrics.epsilon, metrics.mean_loss
                        );
                    }
                }
            })?;
            println!("metrics: {}", art.metrics_path.display());
            println!("checkpoint: {}", art.checkpoint_path.display());
            println!("config: {}", art.config_path.display());
        }
        Command::Eval {
            common,
            checkpoint,
            baseline,
            episodes,
            seeds,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = episodes {
                cfg.eval.episodes = e;
            }
            if let Some(s) = seeds {
                cfg.eval.seeds = s;
            }
            let cfg = validated(cfg)?;
            let source = match (checkpoint, baseline) {
                (Some(p), _) => PolicySource::Checkpoint(p),
                (None, Some(b)) => PolicySource::Baseline(b.parse::<BaselineKind>()?),
                (None, None) => return Err(Failure::Usage("need --checkpoint or --baseline".into())),
            };
            let seeds = experiment::seed_list(cfg.seed, cfg.eval.seeds);
            let reports = experiment::eval_seeds(&cfg, &source, cfg.eval.episodes, &seeds, Execution::Parallel)?;
            experiment::write_eval(&cfg.output_dir, &reports)?;
            for row in experiment::summary_rows(&reports) {
                println!(
                    "{:<24} seed {:>6}  episodes {:>5}  rmse {:>12.4} m  mean {:>12.4} m",
                    row.policy, row.seed, row.episodes, row.rmse_m, row.mean_error_m
                );
            }
            println!("written: {}", out_path(&cfg.output_dir, experiment::EVAL_SUMMARY_FILE));
        }
        Command::Bench { common, episodes } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = episodes {
                cfg.agent.episodes = e;
            }
            let cfg = validated(cfg)?;
            let rows = experiment::run_bench(&cfg, &cfg.output_dir)?;
            let n = rows.len() as f64;
            let train: f64 = rows.iter().map(|r| r.train_episode_s).sum::<f64>() / n;
            let infer: f64 = rows.iter().map(|r| r.inference_step_s).sum::<f64>() / n;
            println!("mean train episode {train:.4} s, mean inference step {infer:.3e} s");
            println!("written: {}", out_path(&cfg.output_dir, experiment::BENCH_FILE));
        }
        Command::Codebook { common } => {
            let cfg = validated(load_config(&common)?)?;
            let cb = experiment::run_codebook(&cfg, &cfg.output_dir)?;
            println!("{} actions over {} beams", cb.len(), cb.m);
            println!("written: {}", out_path(&cfg.output_dir, experiment::CODEBOOK_FILE));
        }
    }
    Ok(())
}

fn out_path(dir: &Path, file: &str) -> String {
    dir.join(file).display().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("runtime failure: {m}");
            ExitCode::from(2)
        }
    }
}
