//! Narrowband LoS channel with a uniform planar array at each satellite.
//!
//! Beam `i` has channel `g_i = β_i e^{jφ_i} a(θx, θy)` toward the UT, where
//! the direction cosines are the east/north components of the unit vector
//! from satellite `i` to the UT (arrays lie in the horizontal plane). The
//! beamformer of beam `k` is the matched steering vector from satellite `k`
//! toward its own footprint center `c_k`, and every beam shares the band, so
//! the others leak into beam `i` through `g_iᴴ f_k`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Scenario;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpaConfig {
    pub n_x: usize,
    pub n_y: usize,
    pub carrier_hz: f64,
    pub gain_tx: f64,
    pub gain_rx: f64,
    /// Receiver noise power σ² in watts.
    pub noise_power: f64,
}

impl Default for UpaConfig {
    fn default() -> Self {
        Self {
            n_x: 8,
            n_y: 8,
            carrier_hz: 2e9,
            gain_tx: 1e3,
            gain_rx: 1.0,
            noise_power: 1e-15,
        }
    }
}

impl UpaConfig {
    pub fn elements(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(Error::Config("channel.upa: element counts must be >= 1".into()));
        }
        if !(self.carrier_hz > 0.0) || !(self.noise_power > 0.0) {
            return Err(Error::Config(
                "channel.upa: carrier_hz and noise_power must be positive".into(),
            ));
        }
        if !(self.gain_tx > 0.0) || !(self.gain_rx > 0.0) {
            return Err(Error::Config("channel.upa: antenna gains must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub upa: UpaConfig,
    /// SINR (dB) mapped to 0 by [`normalize_sinr`].
    pub sinr_lo_db: f64,
    /// SINR (dB) mapped to 1.
    pub sinr_hi_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            upa: UpaConfig::default(),
            sinr_lo_db: -10.0,
            sinr_hi_db: 30.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        self.upa.validate()?;
        if !(self.sinr_hi_db > self.sinr_lo_db) {
            return Err(Error::Config(
                "channel: sinr_hi_db must exceed sinr_lo_db".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamChannel {
    /// `β_i e^{jφ_i}`.
    pub gain: Complex64,
    /// Array response toward the UT, unit norm.
    pub steering: Vec<Complex64>,
    /// Transmit beamformer `f_i`, unit norm.
    pub beamformer: Vec<Complex64>,
}

impl BeamChannel {
    pub fn channel_vector(&self) -> Vec<Complex64> {
        self.steering.iter().map(|a| self.gain * a).collect()
    }
}

/// `k`-th entry `e^{−jπkθ}/√n`.
pub fn steering_1d(theta: f64, n: usize) -> Vec<Complex64> {
    let norm = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| Complex64::from_polar(norm, -PI * k as f64 * theta))
        .collect()
}

/// `a_x(θx) ⊗ a_y(θy)`; entry `ix·n_y + iy`.
pub fn upa_steering(theta_x: f64, theta_y: f64, cfg: &UpaConfig) -> Vec<Complex64> {
    let ax = steering_1d(theta_x, cfg.n_x);
    let ay = steering_1d(theta_y, cfg.n_y);
    ax.iter()
        .flat_map(|x| ay.iter().map(move |y| x * y))
        .collect()
}

/// Free-space amplitude gain `β = √(G_t G_r / L)`, `L = (4π f_c d / c)²`.
pub fn path_gain(cfg: &UpaConfig, slant_range_m: f64) -> Result<f64> {
    if !(slant_range_m > 0.0) || !slant_range_m.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "slant range must be positive, got {slant_range_m}"
        )));
    }
    let loss = (4.0 * PI * cfg.carrier_hz * slant_range_m / SPEED_OF_LIGHT).powi(2);
    Ok((cfg.gain_tx * cfg.gain_rx / loss).sqrt())
}

/// `gᴴ f`.
pub fn hermitian_inner(g: &[Complex64], f: &[Complex64]) -> Complex64 {
    g.iter().zip(f).map(|(a, b)| a.conj() * b).sum()
}

/// `|gᴴ f_own|² / (Σ_k |gᴴ f_k|² + σ²)`.
pub fn sinr<F: AsRef<[Complex64]>>(
    g: &[Complex64],
    f_own: &[Complex64],
    f_others: &[F],
    noise_power: f64,
) -> Result<f64> {
    let n = g.len();
    let check = |len: usize| {
        if len == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: n, got: len })
        }
    };
    check(f_own.len())?;
    for f in f_others {
        check(f.as_ref().len())?;
    }
    let signal = hermitian_inner(g, f_own).norm_sqr();
    let interference: f64 = f_others
        .iter()
        .map(|f| hermitian_inner(g, f.as_ref()).norm_sqr())
        .sum();
    Ok(signal / (interference + noise_power))
}

/// Clips `10·log10(sinr)` to `[lo_db, hi_db]` and maps it affinely onto `[0, 1]`.
pub fn normalize_sinr(sinr_linear: f64, lo_db: f64, hi_db: f64) -> f64 {
    if !(sinr_linear > 0.0) {
        return 0.0;
    }
    let db = 10.0 * sinr_linear.log10();
    ((db - lo_db) / (hi_db - lo_db)).clamp(0.0, 1.0)
}

/// East/north components of the unit vector from `from` to the ground point.
pub fn direction_cosines(from: &[f64; 3], ground: &[f64; 2]) -> (f64, f64) {
    let d = [ground[0] - from[0], ground[1] - from[1], -from[2]];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    (d[0] / r, d[1] / r)
}

/// One per-episode channel draw.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub beams: Vec<BeamChannel>,
    pub sinr: Vec<f64>,
    pub sinr_norm: Vec<f64>,
}

/// Builds every beam's channel and SINR for the scenario. Consumes one phase
/// draw per beam from `rng`, in beam order.
pub fn realize<R: Rng + ?Sized>(
    scenario: &Scenario,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    let upa = &cfg.upa;
    let ut3 = [scenario.ut_true[0], scenario.ut_true[1], 0.0];
    let beamformers: Vec<Vec<Complex64>> = scenario
        .satellite_positions
        .iter()
        .zip(&scenario.beam_centers)
        .map(|(s, c)| {
            let (tx, ty) = direction_cosines(s, c);
            upa_steering(tx, ty, upa)
        })
        .collect();

    let mut beams = Vec::with_capacity(scenario.m_beams);
    for (i, s) in scenario.satellite_positions.iter().enumerate() {
        let slant = crate::geometry::distance(&ut3, s);
        let beta = path_gain(upa, slant)?;
        let phase = rng.random_range(0.0..2.0 * PI);
        let (tx, ty) = direction_cosines(s, &scenario.ut_true);
        beams.push(BeamChannel {
            gain: Complex64::from_polar(beta, phase),
            steering: upa_steering(tx, ty, upa),
            beamformer: beamformers[i].clone(),
        });
    }

    let mut sinrs = Vec::with_capacity(beams.len());
    for (i, beam) in beams.iter().enumerate() {
        let g = beam.channel_vector();
        let others: Vec<&[Complex64]> = beamformers
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, f)| f.as_slice())
            .collect();
        sinrs.push(sinr(&g, &beam.beamformer, &others, upa.noise_power)?);
    }
    let sinr_norm = sinrs
        .iter()
        .map(|&s| normalize_sinr(s, cfg.sinr_lo_db, cfg.sinr_hi_db))
        .collect();
    Ok(ChannelRealization {
        beams,
        sinr: sinrs,
        sinr_norm,
    })
}
