//! Dense probability distributions over a token vocabulary.
//!
//! `ProbDist` is the carrier for the draft, companion, and target
//! distributions at a single decoding position. Vocabularies here are
//! desk-scale (tens to a few thousand tokens), so a dense vector keeps
//! overlap and divergence computations O(V) and trivially correct.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvError};

const SUM_TOL: f64 = 1e-9;

/// A dense probability vector: non-negative entries summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbDist {
    probs: Vec<f64>,
}

impl ProbDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(SvError::InvalidDist(format!(
                "need at least 2 entries, got {}",
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(SvError::InvalidDist(format!("bad entry {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(SvError::InvalidDist(format!("sums to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Normalize non-negative weights into a distribution.
    /// Errors if the weights sum to zero.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(SvError::InvalidDist(format!("weight sum {sum}")));
        }
        let probs = weights.into_iter().map(|w| w / sum).collect();
        Self::new(probs)
    }

    pub fn uniform(v: usize) -> Self {
        assert!(v >= 2);
        Self {
            probs: vec![1.0 / v as f64; v],
        }
    }

    pub fn one_hot(v: usize, token: u32) -> Self {
        assert!(v >= 2 && (token as usize) < v);
        let mut probs = vec![0.0; v];
        probs[token as usize] = 1.0;
        Self { probs }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn prob(&self, token: u32) -> f64 {
        self.probs[token as usize]
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Inverse-CDF sampling. Deterministic given the RNG state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_nonzero = 0u32;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_nonzero = i as u32;
                if u < acc {
                    return i as u32;
                }
            }
        }
        // u landed in the rounding slack at the top of the CDF.
        last_nonzero
    }

    /// Total variation distance: half the L1 distance.
    pub fn total_variation(&self, other: &ProbDist) -> f64 {
        assert_eq!(self.len(), other.len());
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for ProbDist {
    type Error = SvError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbDist::new(v)
    }
}

impl From<ProbDist> for Vec<f64> {
    fn from(d: ProbDist) -> Vec<f64> {
        d.probs
    }
}
