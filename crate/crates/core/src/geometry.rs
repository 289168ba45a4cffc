//! Beam geometry: scenario generation and line-of-sight primitives.
//!
//! Positioning is planar (d = 2) inside a square `[0, side]²` box. Satellites
//! live in 3-D above that box and only feed the channel model; pseudoranges are
//! taken from the ground-projected beam centers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::linearize;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub m_beams: usize,
    pub area_side_m: f64,
    /// Minimum pairwise beam-center separation.
    pub min_separation_m: f64,
    /// Clock bias is uniform in `[-r, r]` (range-equivalent meters).
    pub clock_bias_range_m: f64,
    pub satellite_altitude_m: f64,
    /// Each serving satellite sits at a uniform elevation in `[mask, 90°]`
    /// as seen from its beam center.
    pub min_elevation_deg: f64,
    /// Upper bound on cond(H̃ᵀH̃) at the true UT position.
    pub max_geometry_condition: f64,
    pub max_attempts: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            m_beams: 10,
            area_side_m: 1000.0,
            min_separation_m: 50.0,
            clock_bias_range_m: 100.0,
            satellite_altitude_m: 550e3,
            min_elevation_deg: 20.0,
            max_geometry_condition: 1e4,
            max_attempts: 200,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scenario: {m}")));
        if self.m_beams < 3 {
            return bad("m_beams must be at least 3 (d + 1)");
        }
        if !(self.area_side_m > 0.0 && self.area_side_m.is_finite()) {
            return bad("area_side_m must be positive");
        }
        if self.min_separation_m < 0.0 || self.clock_bias_range_m < 0.0 {
            return bad("min_separation_m and clock_bias_range_m must be non-negative");
        }
        if self.satellite_altitude_m <= 0.0 {
            return bad("satellite_altitude_m must be positive");
        }
        if !(0.0..90.0).contains(&self.min_elevation_deg) || self.min_elevation_deg <= 0.0 {
            return bad("min_elevation_deg must lie in (0, 90)");
        }
        if self.max_geometry_condition <= 1.0 {
            return bad("max_geometry_condition must exceed 1");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub beam_centers: Vec<[f64; 2]>,
    pub satellite_positions: Vec<[f64; 3]>,
    pub ut_true: [f64; 2],
    pub clock_bias_m: f64,
    pub area_side_m: f64,
    pub m_beams: usize,
}

impl Scenario {
    pub fn scene_center(&self) -> [f64; 2] {
        [self.area_side_m / 2.0, self.area_side_m / 2.0]
    }

    pub fn diagonal_m(&self) -> f64 {
        self.area_side_m * std::f64::consts::SQRT_2
    }

    pub fn true_ranges(&self) -> Vec<f64> {
        self.beam_centers
            .iter()
            .map(|c| distance(&self.ut_true, c))
            .collect()
    }
}

/// Unit direction from a beam center toward the UT.
#[derive(Debug, Clone, PartialEq)]
pub struct LosVector(Vec<f64>);

impl LosVector {
    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// `(x − c) / ‖x − c‖`.
pub fn los_unit_vector(x: &[f64], c: &[f64]) -> Result<LosVector> {
    if x.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: c.len(),
        });
    }
    let r = distance(x, c);
    if !r.is_finite() {
        return Err(Error::NonFinite("line-of-sight endpoints"));
    }
    if r == 0.0 {
        return Err(Error::DegenerateGeometry(
            "UT coincides with a beam center".into(),
        ));
    }
    Ok(LosVector(x.iter().zip(c).map(|(u, v)| (u - v) / r).collect()))
}

/// `(sin φ, cos φ)` of the planar bearing of `x` seen from `c`, with φ measured
/// counter-clockwise from the +x (east) axis.
pub fn bearing_features(x: &[f64], c: &[f64]) -> Result<(f64, f64)> {
    if x.len() != 2 || c.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: x.len().max(c.len()),
        });
    }
    let h = los_unit_vector(x, c)?;
    let h = h.components();
    Ok((h[1], h[0]))
}

/// Draws a scenario from `seed`.
///
/// Draw order per attempt: beam centers (rejection sampled against the
/// separation rule), UT position, clock bias, then one (elevation, azimuth)
/// pair per satellite. Attempts that violate the conditioning bound or put the
/// UT on a beam center are discarded.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = seed::rng_from(seed);
    let side = cfg.area_side_m;
    let per_center_tries = 100;

    'attempt: for _ in 0..cfg.max_attempts {
        let mut centers: Vec<[f64; 2]> = Vec::with_capacity(cfg.m_beams);
        for _ in 0..cfg.m_beams {
            let mut placed = false;
            for _ in 0..per_center_tries {
                let cand = [rng.random_range(0.0..side), rng.random_range(0.0..side)];
                if centers
                    .iter()
                    .all(|c| distance(c, &cand) >= cfg.min_separation_m)
                {
                    centers.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'attempt;
            }
        }
        let ut = [rng.random_range(0.0..side), rng.random_range(0.0..side)];
        let bias = if cfg.clock_bias_range_m > 0.0 {
            rng.random_range(-cfg.clock_bias_range_m..=cfg.clock_bias_range_m)
        } else {
            0.0
        };
        let min_el = cfg.min_elevation_deg.to_radians();
        let sats: Vec<[f64; 3]> = centers
            .iter()
            .map(|c| {
                let el = rng.random_range(min_el..=PI / 2.0);
                let az = rng.random_range(0.0..2.0 * PI);
                let horizontal = cfg.satellite_altitude_m * el.cos() / el.sin();
                [
                    c[0] + horizontal * az.cos(),
                    c[1] + horizontal * az.sin(),
                    cfg.satellite_altitude_m,
                ]
            })
            .collect();

        let Ok(h) = linearize(&ut, &centers) else {
            continue;
        };
        if geometry_condition(&h.rows) > cfg.max_geometry_condition {
            continue;
        }
        return Ok(Scenario {
            beam_centers: centers,
            satellite_positions: sats,
            ut_true: ut,
            clock_bias_m: bias,
            area_side_m: side,
            m_beams: cfg.m_beams,
        });
    }
    Err(Error::RetryBudgetExhausted(cfg.max_attempts))
}

/// cond(H̃ᵀH̃) for stacked augmented rows.
pub fn geometry_condition(rows: &[Vec<f64>]) -> f64 {
    let n = rows.first().map_or(0, Vec::len);
    let mut gram = linalg::zeros(n, n);
    for r in rows {
        for i in 0..n {
            for j in 0..n {
                gram[i][j] += r[i] * r[j];
            }
        }
    }
    linalg::symmetric_condition(&gram)
}
