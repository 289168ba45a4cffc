//! Augmented weighted least squares for position and receiver clock bias.
//!
//! The unknown is `x̃ = [x; b]`. Each Gauss–Newton step linearizes the ranges
//! at the current estimate, forms `H̃ = [H 1]` and solves
//!
//! ```text
//! (H̃ᵀ W H̃ + λ I) Δ = H̃ᵀ W δz,    δz_i = z_i − ‖x0 − c_i‖ − b0
//! ```
//!
//! so the ridge only damps the update and the noiseless fixed point stays
//! exact. Rank is judged on the unregularized `H̃ᵀ W H̃`: a weight vector that
//! only sees fewer than d+1 independent rows is rejected even when λ > 0.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::geometry::distance;
use crate::linalg::{self, Matrix};
use crate::measurement::linearize;

/// Relative eigenvalue floor used for the numerical rank of `H̃ᵀWH̃`.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub ridge: f64,
    pub max_iter: usize,
    /// Stop once the update norm drops below this (meters).
    pub tol_m: f64,
    /// An update larger than this counts as divergence.
    pub divergence_limit_m: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            max_iter: 10,
            tol_m: 1e-6,
            divergence_limit_m: 1e4,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || self.max_iter == 0 || !(self.tol_m > 0.0) {
            return Err(Error::Config(
                "estimator: need ridge >= 0, max_iter >= 1, tol_m > 0".into(),
            ));
        }
        if !(self.divergence_limit_m > 0.0) {
            return Err(Error::Config("estimator: divergence_limit_m must be positive".into()));
        }
        Ok(())
    }
}

/// Beam weights on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub const SUM_TOL: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidWeights(format!("entry {w} outside [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidWeights(format!("sum {sum} != 1")));
        }
        Ok(Self(weights))
    }

    /// ℓ1-normalizes non-negative raw weights.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights("negative or non-finite raw weight".into()));
        }
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidWeights("raw weights sum to zero".into()));
        }
        Ok(Self(raw.iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Result of one linearized solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsStep {
    pub position: Vec<f64>,
    pub clock_bias: f64,
    /// `Δ = [Δx; Δb]`.
    pub update: Vec<f64>,
    /// `H̃ᵀWH̃ + λI` as solved.
    pub normal_matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    pub position: Vec<f64>,
    pub clock_bias: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub condition_estimate: f64,
    pub converged: bool,
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Weighted normal equations `(H̃ᵀWH̃, H̃ᵀWδz)` at `(x0, b0)`.
pub fn normal_equations<P: AsRef<[f64]>>(
    z: &[f64],
    centers: &[P],
    weights: &[f64],
    x0: &[f64],
    b0: f64,
) -> Result<(Matrix, Vec<f64>)> {
    let m = centers.len();
    for len in [z.len(), weights.len()] {
        if len != m {
            return Err(Error::DimensionMismatch { expected: m, got: len });
        }
    }
    check_finite(z, "pseudoranges")?;
    check_finite(weights, "weights")?;
    check_finite(x0, "linearization point")?;
    if !b0.is_finite() {
        return Err(Error::NonFinite("clock bias"));
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidWeights("negative weight".into()));
    }
    let h = linearize(x0, centers)?;
    let n = x0.len() + 1;
    let mut a = linalg::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for (i, row) in h.rows.iter().enumerate() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let dz = z[i] - distance(x0, centers[i].as_ref()) - b0;
        for r in 0..n {
            rhs[r] += w * row[r] * dz;
            for c in 0..n {
                a[r][c] += w * row[r] * row[c];
            }
        }
    }
    Ok((a, rhs))
}

/// One ridge-regularized Gauss–Newton step about `(x0, b0)`.
pub fn wls_step<P: AsRef<[f64]>>(
    z: &[f64],
    centers: &[P],
    weights: &[f64],
    x0: &[f64],
    b0: f64,
    ridge: f64,
) -> Result<WlsStep> {
    if !(ridge >= 0.0) {
        return Err(Error::Config(format!("ridge must be >= 0, got {ridge}")));
    }
    let (mut a, rhs) = normal_equations(z, centers, weights, x0, b0)?;
    let n = a.len();
    let rank = linalg::symmetric_rank(&a, RANK_TOL);
    if rank < n {
        return Err(Error::RankDeficient { rank, required: n });
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let update = linalg::solve(&a, &rhs).ok_or(Error::RankDeficient {
        rank: n - 1,
        required: n,
    })?;
    let d = x0.len();
    let position = x0.iter().zip(&update).map(|(x, u)| x + u).collect();
    Ok(WlsStep {
        position,
        clock_bias: b0 + update[d],
        update,
        normal_matrix: a,
    })
}

/// Iterated WLS from `x_init` with the clock bias started at zero.
pub fn wls_solve<P: AsRef<[f64]>>(
    z: &[f64],
    centers: &[P],
    weights: &[f64],
    x_init: &[f64],
    cfg: &EstimatorConfig,
) -> Result<WlsSolution> {
    cfg.validate()?;
    let mut x = x_init.to_vec();
    let mut b = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut normal = None;
    while iterations < cfg.max_iter {
        let step = wls_step(z, centers, weights, &x, b, cfg.ridge)?;
        iterations += 1;
        let norm = step.update.iter().map(|u| u * u).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > cfg.divergence_limit_m {
            return Err(Error::Divergence {
                norm,
                limit: cfg.divergence_limit_m,
            });
        }
        x = step.position;
        b = step.clock_bias;
        normal = Some(step.normal_matrix);
        if norm < cfg.tol_m {
            converged = true;
            break;
        }
    }
    let residuals = z
        .iter()
        .zip(centers)
        .map(|(zi, c)| zi - distance(&x, c.as_ref()) - b)
        .collect();
    let condition_estimate = normal.as_deref().map_or(f64::INFINITY, linalg::symmetric_condition);
    Ok(WlsSolution {
        position: x,
        clock_bias: b,
        residuals,
        iterations,
        condition_estimate,
        converged,
    })
}

/// `‖x̂ − x_true‖₂`.
pub fn positioning_error(estimate: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(estimate.len(), truth.len(), "dimension mismatch");
    distance(estimate, truth)
}

/// Trace of the position block of `(H̃ᵀ R⁻¹ H̃)⁻¹`, `R = diag(σ²)`, evaluated at
/// the true position (m²).
pub fn crlb_position<P: AsRef<[f64]>>(centers: &[P], x_true: &[f64], sigmas: &[f64]) -> Result<f64> {
    if sigmas.len() != centers.len() {
        return Err(Error::DimensionMismatch {
            expected: centers.len(),
            got: sigmas.len(),
        });
    }
    if sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Config("crlb: sigmas must be positive".into()));
    }
    let h = linearize(x_true, centers)?;
    let n = x_true.len() + 1;
    let mut fisher = linalg::zeros(n, n);
    for (row, s) in h.rows.iter().zip(sigmas) {
        let w = 1.0 / (s * s);
        for r in 0..n {
            for c in 0..n {
                fisher[r][c] += w * row[r] * row[c];
            }
        }
    }
    if linalg::symmetric_rank(&fisher, RANK_TOL) < n {
        return Err(Error::DegenerateGeometry("singular Fisher information".into()));
    }
    let inv = linalg::invert(&fisher)
        .ok_or_else(|| Error::DegenerateGeometry("singular Fisher information".into()))?;
    Ok((0..x_true.len()).map(|i| inv[i][i]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_centers() -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [1000.0, 0.0], [1000.0, 1000.0], [0.0, 1000.0], [500.0, 900.0]]
    }

    fn noiseless_z(centers: &[[f64; 2]], x: &[f64; 2], b: f64) -> Vec<f64> {
        centers.iter().map(|c| distance(x, c) + b).collect()
    }

    #[test]
    fn fixed_point_at_truth() {
        let centers = square_centers();
        let x = [420.0, 310.0];
        let z = noiseless_z(&centers, &x, 37.5);
        let step = wls_step(&z, &centers, &[0.2; 5], &x, 37.5, 0.0).unwrap();
        assert!(step.update.iter().all(|u| u.abs() < 1e-12));
    }

    #[test]
    fn weight_scale_cancels() {
        let centers = square_centers();
        let z = vec![700.0, 650.0, 810.0, 720.0, 640.0];
        let w = [0.1, 0.3, 0.2, 0.15, 0.25];
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let a = wls_step(&z, &centers, &w, &[500.0, 500.0], 0.0, 0.0).unwrap();
        let b = wls_step(&z, &centers, &w2, &[500.0, 500.0], 0.0, 0.0).unwrap();
        for (u, v) in a.update.iter().zip(&b.update) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }

    #[test]
    fn noiseless_solve_recovers_truth() {
        let centers = square_centers();
        let x = [137.0, 802.0];
        let z = noiseless_z(&centers, &x, -64.0);
        let sol = wls_solve(&z, &centers, &WeightVector::uniform(5), &[500.0, 500.0], &EstimatorConfig::default()).unwrap();
        assert!(distance(&sol.position, &x) < 1e-6);
        assert!((sol.clock_bias + 64.0).abs() < 1e-6);
        assert!(sol.iterations <= 10 && sol.converged);
        assert!(sol.residuals.iter().all(|r| r.abs() < 1e-6));
    }

    #[test]
    fn minimal_geometry_is_exact() {
        let centers = vec![[0.0, 0.0], [1000.0, 100.0], [300.0, 900.0]];
        let x = [400.0, 350.0];
        let z = noiseless_z(&centers, &x, 12.0);
        let sol = wls_solve(&z, &centers, &[0.5, 0.25, 0.25], &[500.0, 500.0], &EstimatorConfig::default()).unwrap();
        assert!(distance(&sol.position, &x) < 1e-6);
        assert!((sol.clock_bias - 12.0).abs() < 1e-6);
    }

    #[test]
    fn collinear_centers_are_rank_deficient() {
        let centers: Vec<[f64; 2]> = (0..5).map(|i| [100.0 * i as f64, 0.0]).collect();
        let z = vec![500.0; 5];
        let cfg = EstimatorConfig {
            ridge: 0.0,
            ..Default::default()
        };
        // off the line: LoS rows are not collinear, but on the line they are
        let r = wls_solve(&z, &centers, &[0.2; 5], &[1000.0, 0.0], &cfg);
        assert!(matches!(r, Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn single_beam_is_rank_deficient_even_with_ridge() {
        let centers = square_centers();
        let z = vec![700.0; 5];
        let r = wls_step(&z, &centers, &[1.0, 0.0, 0.0, 0.0, 0.0], &[500.0, 400.0], 0.0, 1e-6);
        assert!(matches!(r, Err(Error::RankDeficient { rank: 1, required: 3 })));
    }

    #[test]
    fn bad_inputs() {
        let centers = square_centers();
        let mut z = vec![700.0; 5];
        z[2] = f64::NAN;
        assert!(matches!(
            wls_step(&z, &centers, &[0.2; 5], &[500.0, 400.0], 0.0, 0.0),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            wls_step(&[1.0; 4], &centers, &[0.2; 5], &[500.0, 400.0], 0.0, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn error_metric() {
        assert_eq!(positioning_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(positioning_error(&[4.0, 6.0], &[1.0, 2.0]), 5.0);
    }

    #[test]
    fn weight_vector_invariants() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.6, 0.5]).is_err());
        assert!(WeightVector::new(vec![1.2, -0.2]).is_err());
        let w = WeightVector::normalized(&[2.0, 6.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
        assert!(WeightVector::normalized(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn crlb_scaling_and_monotonicity() {
        let centers = square_centers();
        let x = [430.0, 520.0];
        let sig = [1.0, 2.0, 1.5, 3.0, 0.7];
        let base = crlb_position(&centers, &x, &sig).unwrap();
        let scaled: Vec<f64> = sig.iter().map(|s| 3.0 * s).collect();
        let c = crlb_position(&centers, &x, &scaled).unwrap();
        assert!((c / base - 9.0).abs() < 1e-10);

        let mut more = centers.clone();
        more.push([200.0, 300.0]);
        let mut sig6 = sig.to_vec();
        sig6.push(5.0);
        assert!(crlb_position(&more, &x, &sig6).unwrap() <= base);

        let line: Vec<[f64; 2]> = (0..4).map(|i| [100.0 * i as f64, 0.0]).collect();
        assert!(crlb_position(&line, &[1000.0, 0.0], &[1.0; 4]).is_err());
    }

    #[test]
    fn crlb_symmetric_cross_by_hand() {
        // UT at the origin, four beams on the axes: H̃ rows (±1,0,1), (0,±1,1).
        // With σ = 2: J = (1/4)·diag(2, 2, 4) (off-diagonals cancel), so the
        // position block of J⁻¹ is diag(2, 2) and the trace is 4.
        let centers = vec![[-10.0, 0.0], [10.0, 0.0], [0.0, -10.0], [0.0, 10.0]];
        let v = crlb_position(&centers, &[0.0, 0.0], &[2.0; 4]).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_never_worsens_conditioning() {
        let centers = square_centers();
        let z = vec![700.0, 650.0, 810.0, 720.0, 640.0];
        let w = [0.1, 0.3, 0.2, 0.15, 0.25];
        let mut last = f64::INFINITY;
        for ridge in [0.0, 1e-6, 1e-3, 1e-1, 1.0, 10.0] {
            let s = wls_step(&z, &centers, &w, &[480.0, 530.0], 0.0, ridge).unwrap();
            let c = linalg::symmetric_condition(&s.normal_matrix);
            assert!(c <= last * (1.0 + 1e-12));
            last = c;
        }
    }
}
