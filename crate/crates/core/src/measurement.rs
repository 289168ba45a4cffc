//! Pseudorange synthesis and linearization.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, los_unit_vector, Scenario};
use crate::seed;

/// Affine link-quality → ranging-noise map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// σ at normalized SINR 1.
    pub sigma_min_m: f64,
    /// σ at normalized SINR 0.
    pub sigma_max_m: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_min_m: 0.5,
            sigma_max_m: 50.0,
        }
    }
}

impl NoiseConfig {
    /// Both bounds zero gives a noiseless simulator.
    pub fn noiseless() -> Self {
        Self {
            sigma_min_m: 0.0,
            sigma_max_m: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min_m >= 0.0 && self.sigma_max_m >= self.sigma_min_m) {
            return Err(Error::Config(
                "noise: need 0 <= sigma_min_m <= sigma_max_m".into(),
            ));
        }
        Ok(())
    }
}

/// `σ(q) = σ_max − (σ_max − σ_min)·q`, with `q` clamped to `[0, 1]`.
pub fn noise_sigma(sinr_norm: f64, cfg: &NoiseConfig) -> f64 {
    let q = sinr_norm.clamp(0.0, 1.0);
    cfg.sigma_max_m - (cfg.sigma_max_m - cfg.sigma_min_m) * q
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pseudoranges: Vec<f64>,
    /// True per-beam noise std; simulator-side only.
    pub sigmas: Vec<f64>,
    pub sinr_norm: Vec<f64>,
}

/// Stacked `[h_iᵀ, 1]` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl GeometryMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// `z_i = ‖x − c_i‖ + b + n_i` with independent `n_i ~ N(0, σ_i²)`.
/// Draws one standard normal per beam, in beam order.
pub fn synthesize_with<R: Rng + ?Sized>(
    scenario: &Scenario,
    sinr_norm: &[f64],
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<Observation> {
    if sinr_norm.len() != scenario.m_beams {
        return Err(Error::DimensionMismatch {
            expected: scenario.m_beams,
            got: sinr_norm.len(),
        });
    }
    let sigmas: Vec<f64> = sinr_norm.iter().map(|&q| noise_sigma(q, cfg)).collect();
    let pseudoranges = scenario
        .beam_centers
        .iter()
        .zip(&sigmas)
        .map(|(c, &s)| {
            let n: f64 = rng.sample(StandardNormal);
            distance(&scenario.ut_true, c) + scenario.clock_bias_m + s * n
        })
        .collect();
    Ok(Observation {
        pseudoranges,
        sigmas,
        sinr_norm: sinr_norm.to_vec(),
    })
}

pub fn synthesize(
    scenario: &Scenario,
    sinr_norm: &[f64],
    cfg: &NoiseConfig,
    seed: u64,
) -> Result<Observation> {
    synthesize_with(scenario, sinr_norm, cfg, &mut seed::rng_from(seed))
}

/// Row `i` is `[h_i(x0)ᵀ, 1]`.
pub fn linearize<P: AsRef<[f64]>>(x0: &[f64], centers: &[P]) -> Result<GeometryMatrix> {
    let rows = centers
        .iter()
        .map(|c| {
            let mut row = los_unit_vector(x0, c.as_ref())?.into_inner();
            row.push(1.0);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GeometryMatrix { rows })
}
