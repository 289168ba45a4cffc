//! Non-learning reference policies.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Decision, Policy};
use crate::env::{BeamEnv, StateVector};
use crate::error::{Error, Result};
use crate::estimator::WeightVector;
use crate::geometry::{distance, Scenario};
use crate::seed::SimRng;

pub fn uniform_weights(m: usize) -> WeightVector {
    WeightVector::uniform(m)
}

/// `w_i = q_i / Σq`; all-zero input falls back to uniform.
pub fn sinr_proportional_weights(sinr_norm: &[f64]) -> WeightVector {
    let clean: Vec<f64> = sinr_norm.iter().map(|q| q.max(0.0)).collect();
    WeightVector::normalized(&clean).unwrap_or_else(|_| WeightVector::uniform(sinr_norm.len()))
}

/// `w_i ∝ 1/σ_i²`.
pub fn inverse_variance_weights(sigmas: &[f64]) -> Result<WeightVector> {
    if sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidWeights("inverse-variance weights need positive sigmas".into()));
    }
    let raw: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
    WeightVector::normalized(&raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryBaselineConfig {
    pub footprint_radius_m: f64,
    /// Minimum normalized SINR for a beam to count as heard.
    pub sinr_threshold: f64,
}

impl Default for GeometryBaselineConfig {
    fn default() -> Self {
        Self {
            footprint_radius_m: 150.0,
            sinr_threshold: 0.5,
        }
    }
}

/// Centroid of the beam centers whose footprint disc contains the UT and whose
/// normalized SINR clears the threshold; the scene center if none qualifies.
pub fn geometry_intersection_estimate(
    scenario: &Scenario,
    sinr_norm: &[f64],
    cfg: &GeometryBaselineConfig,
) -> [f64; 2] {
    let picked: Vec<&[f64; 2]> = scenario
        .beam_centers
        .iter()
        .zip(sinr_norm)
        .filter(|(c, q)| distance(&scenario.ut_true, *c) <= cfg.footprint_radius_m && **q >= cfg.sinr_threshold)
        .map(|(c, _)| c)
        .collect();
    if picked.is_empty() {
        return scenario.scene_center();
    }
    let n = picked.len() as f64;
    [
        picked.iter().map(|c| c[0]).sum::<f64>() / n,
        picked.iter().map(|c| c[1]).sum::<f64>() / n,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Uniform,
    SinrProportional,
    InverseVarianceOracle,
    GeometryIntersection,
    Random,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Uniform,
        BaselineKind::SinrProportional,
        BaselineKind::InverseVarianceOracle,
        BaselineKind::GeometryIntersection,
        BaselineKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Uniform => "uniform",
            BaselineKind::SinrProportional => "sinr_proportional",
            BaselineKind::InverseVarianceOracle => "inverse_variance_oracle",
            BaselineKind::GeometryIntersection => "geometry_intersection",
            BaselineKind::Random => "random",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownBaseline {
                name: s.to_string(),
                valid: Self::ALL.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePolicy {
    pub kind: BaselineKind,
    pub geometry: GeometryBaselineConfig,
}

impl BaselinePolicy {
    pub fn new(kind: BaselineKind) -> Self {
        Self {
            kind,
            geometry: GeometryBaselineConfig::default(),
        }
    }
}

impl Policy for BaselinePolicy {
    fn name(&self) -> String {
        self.kind.as_str().into()
    }

    fn decide(&self, env: &BeamEnv, _state: &StateVector, rng: &mut SimRng) -> Result<Decision> {
        let view = env.oracle()?;
        let q = &view.channel.sinr_norm;
        Ok(match self.kind {
            BaselineKind::Uniform => Decision::Weights(uniform_weights(q.len())),
            BaselineKind::SinrProportional => Decision::Weights(sinr_proportional_weights(q)),
            BaselineKind::InverseVarianceOracle => {
                Decision::Weights(inverse_variance_weights(&view.observation.sigmas)?)
            }
            BaselineKind::GeometryIntersection => {
                Decision::Position(geometry_intersection_estimate(view.scenario, q, &self.geometry))
            }
            BaselineKind::Random => Decision::Action(rng.random_range(0..env.n_actions())),
        })
    }
}
