//! Multi-beam LEO positioning laboratory.
//!
//! The pipeline simulates a quasi-static multi-beam geometry, derives per-beam
//! SINR from a uniform planar array channel model, synthesizes pseudorange-like
//! observations whose noise tracks link quality, and estimates the user
//! terminal position and clock bias with an augmented ridge-regularized WLS
//! solver. A deep Q-network written from scratch picks beam weights out of a
//! discrete codebook; non-learning baselines and a Cramér–Rao bound provide
//! the yardsticks.
//!
//! Module map:
//!
//! * [`geometry`]: scenario generation, line-of-sight vectors, bearings
//! * [`channel`]: UPA steering, path gain, SINR and its normalization
//! * [`measurement`]: SINR-dependent noise, observation synthesis, linearization
//! * [`estimator`]: augmented WLS, Gauss–Newton refinement, CRLB
//! * [`codebook`]: discrete beam-weight action set
//! * [`env`]: the beam-weighting MDP
//! * [`neural`]: dense Q-network, backprop, Adam, Huber loss, checkpoints
//! * [`agent`]: replay buffer, ε-greedy, TD targets, training and evaluation
//! * [`baselines`]: fixed weighting rules and the footprint-centroid stand-in
//! * [`config`] / [`experiment`]: experiment files and the command drivers

pub mod agent;
pub mod baselines;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod env;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod measurement;
pub mod neural;
pub mod par;
pub mod seed;

pub use error::{Error, Result};
