//! Discrete action set of beam-weight vectors.
//!
//! Positions in an action vector are SINR ranks, not beam ids: the
//! environment sorts beams by normalized SINR at reset and action position j
//! addresses the j-th strongest beam. The set is built as
//!
//! 1. the M one-hot vectors;
//! 2. for each prefix support {0..s-1}, s = 2..=k, every non-increasing level
//!    sequence that starts at the top level, in lexicographic order of level
//!    indices;
//!
//! each ℓ1-normalized and kept only if its cosine similarity to every kept
//! action stays below the pruning threshold. Generation stops at the cap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::WeightVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    /// Largest support size.
    pub k: usize,
    /// Non-zero weight levels before normalization.
    pub levels: Vec<f64>,
    pub prune_threshold: f64,
    pub cap: usize,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            k: 10,
            levels: vec![0.25, 0.5, 0.75, 1.0],
            prune_threshold: 0.98,
            cap: 128,
        }
    }
}

impl CodebookConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if m == 0 || self.k == 0 || self.k > m {
            return Err(Error::Config(format!("codebook: need 1 <= k <= m, got k={} m={m}", self.k)));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("codebook: levels must not be empty".into()));
        }
        if self.levels.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
            return Err(Error::Config("codebook: levels must lie in (0, 1]".into()));
        }
        if !(self.prune_threshold > 0.0 && self.prune_threshold <= 1.0) {
            return Err(Error::Config("codebook: prune_threshold must lie in (0, 1]".into()));
        }
        if self.cap < m {
            return Err(Error::Config(format!("codebook: cap {} < m {m}", self.cap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionCodebook {
    pub actions: Vec<WeightVector>,
    pub m: usize,
    pub built_from: CodebookConfig,
}

impl ActionCodebook {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn decode(&self, index: usize) -> Result<&WeightVector> {
        self.actions.get(index).ok_or(Error::ActionOutOfRange {
            index,
            len: self.actions.len(),
        })
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Places `pattern` on `support` in an M-vector and ℓ1-normalizes it.
pub fn apply_pattern(m: usize, support: &[usize], pattern: &[f64]) -> Result<WeightVector> {
    if support.len() != pattern.len() {
        return Err(Error::DimensionMismatch {
            expected: support.len(),
            got: pattern.len(),
        });
    }
    let mut raw = vec![0.0; m];
    for (&i, &p) in support.iter().zip(pattern) {
        if i >= m {
            return Err(Error::ActionOutOfRange { index: i, len: m });
        }
        raw[i] = p;
    }
    WeightVector::normalized(&raw)
}

/// Calls `f` with each non-decreasing index sequence of length `len` over
/// `0..n`, lexicographically.
fn for_each_multiset(n: usize, len: usize, f: &mut dyn FnMut(&[usize])) {
    let mut seq = vec![0usize; len];
    loop {
        f(&seq);
        let Some(pos) = (0..len).rev().find(|&i| seq[i] + 1 < n) else {
            return;
        };
        let v = seq[pos] + 1;
        seq[pos..].iter_mut().for_each(|s| *s = v);
    }
}

pub fn build_codebook(m: usize, cfg: &CodebookConfig) -> Result<ActionCodebook> {
    cfg.validate(m)?;
    let mut levels = cfg.levels.clone();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();

    let mut kept: Vec<WeightVector> = Vec::new();
    let offer = |w: WeightVector, kept: &mut Vec<WeightVector>| {
        if kept.len() < cfg.cap && kept.iter().all(|a| cosine(a, &w) < cfg.prune_threshold) {
            kept.push(w);
        }
    };

    for i in 0..m {
        offer(apply_pattern(m, &[i], &[1.0])?, &mut kept);
    }
    for s in 2..=cfg.k {
        let support: Vec<usize> = (0..s).collect();
        let mut candidates = Vec::new();
        for_each_multiset(levels.len(), s - 1, &mut |seq| {
            let pattern: Vec<f64> = std::iter::once(levels[0])
                .chain(seq.iter().map(|&j| levels[j]))
                .collect();
            candidates.push(pattern);
        });
        for pattern in candidates {
            offer(apply_pattern(m, &support, &pattern)?, &mut kept);
        }
        if kept.len() >= cfg.cap {
            break;
        }
    }
    Ok(ActionCodebook {
        actions: kept,
        m,
        built_from: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_supports_only() {
        let cb = build_codebook(10, &CodebookConfig { k: 1, ..Default::default() }).unwrap();
        assert_eq!(cb.len(), 10);
        for (i, a) in cb.actions.iter().enumerate() {
            assert_eq!(a[i], 1.0);
            assert_eq!(a.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn pattern_normalization() {
        let w = apply_pattern(10, &[2, 5, 7], &[1.0, 0.5, 0.5]).unwrap();
        let mut expect = vec![0.0; 10];
        expect[2] = 0.5;
        expect[5] = 0.25;
        expect[7] = 0.25;
        assert_eq!(w.as_slice(), expect.as_slice());
    }

    #[test]
    fn multiset_enumeration() {
        let mut seen = Vec::new();
        for_each_multiset(3, 2, &mut |s| seen.push(s.to_vec()));
        assert_eq!(seen, vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 1], vec![1, 2], vec![2, 2]]);
    }

    #[test]
    fn decode_bounds() {
        let cb = build_codebook(4, &CodebookConfig { k: 3, ..Default::default() }).unwrap();
        assert_eq!(cb.decode(0).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(cb.decode(cb.len()), Err(Error::ActionOutOfRange { .. })));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_codebook(3, &CodebookConfig { k: 4, ..Default::default() }).is_err());
        assert!(build_codebook(3, &CodebookConfig { levels: vec![], ..Default::default() }).is_err());
        assert!(build_codebook(3, &CodebookConfig { k: 2, levels: vec![0.0, 1.0], ..Default::default() }).is_err());
        assert!(build_codebook(10, &CodebookConfig { cap: 5, ..Default::default() }).is_err());
    }

    #[test]
    fn cap_is_respected() {
        let cb = build_codebook(10, &CodebookConfig { cap: 20, ..Default::default() }).unwrap();
        assert_eq!(cb.len(), 20);
    }
}
