//! Temperature / top-k / top-p filtering of token distributions.
//!
//! Filters are applied in a fixed order: temperature, then top-k, then
//! top-p, then a final renormalization. The same filtered distribution is
//! used for drafting, for the acceptance ratio during verification, and
//! for the alignment indicators, so every comparison happens in the space
//! the models actually sample from.

use serde::{Deserialize, Serialize};

use crate::dist::ProbDist;
use crate::error::{Result, SvError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Softmax temperature applied as `p^(1/T)` followed by renormalization.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Keep only the `k` highest-probability tokens.
    #[serde(default)]
    pub top_k: Option<usize>,
    /// Keep the smallest prefix (by descending probability) whose cumulative
    /// mass reaches `top_p`. The argmax always survives.
    #[serde(default)]
    pub top_p: Option<f64>,
}

fn default_temperature() -> f64 {
    1.0
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self::identity()
    }
}

impl SamplingConfig {
    pub fn identity() -> Self {
        SamplingConfig {
            temperature: 1.0,
            top_k: None,
            top_p: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(SvError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if let Some(k) = self.top_k {
            if k == 0 {
                return Err(SvError::Config("top_k must be >= 1".into()));
            }
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(SvError::Config(format!("top_p must be in (0,1], got {p}")));
            }
        }
        Ok(())
    }

    /// Apply temperature -> top_k -> top_p and renormalize.
    pub fn apply(&self, dist: &ProbDist) -> ProbDist {
        let v = dist.len();
        let mut probs: Vec<f64> = dist.probs().to_vec();

        if self.temperature != 1.0 {
            let inv_t = 1.0 / self.temperature;
            for p in probs.iter_mut() {
                *p = if *p > 0.0 { p.powf(inv_t) } else { 0.0 };
            }
            let sum: f64 = probs.iter().sum();
            if sum > 0.0 && sum.is_finite() {
                for p in probs.iter_mut() {
                    *p /= sum;
                }
            } else {
                // Extreme temperature underflowed everything: collapse to argmax.
                let argmax = argmax_index(dist.probs());
                probs = vec![0.0; v];
                probs[argmax] = 1.0;
            }
        }

        // Token order sorted by (probability desc, id asc); deterministic ties.
        let mut order: Vec<usize> = (0..v).collect();
        order.sort_by(|&i, &j| {
            probs[j]
                .partial_cmp(&probs[i])
                .unwrap()
                .then(i.cmp(&j))
        });

        let mut keep = vec![true; v];
        if let Some(k) = self.top_k {
            for &i in order.iter().skip(k) {
                keep[i] = false;
            }
        }
        if let Some(top_p) = self.top_p {
            let mut cum = 0.0;
            let mut reached = false;
            for &i in &order {
                if !keep[i] {
                    continue;
                }
                if reached {
                    keep[i] = false;
                } else {
                    cum += probs[i];
                    if cum >= top_p - 1e-12 {
                        reached = true;
                    }
                }
            }
        }

        let mut sum = 0.0;
        for i in 0..v {
            if !keep[i] {
                probs[i] = 0.0;
            }
            sum += probs[i];
        }
        assert!(sum > 0.0, "sampling filters removed all probability mass");
        for p in probs.iter_mut() {
            *p /= sum;
        }
        ProbDist::new(probs).expect("filtered distribution is valid")
    }
}

fn argmax_index(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}
