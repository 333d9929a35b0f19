//! Synthetic acceptance-probability scenarios for model-free validation of
//! the scheduler and the profile predictor.
//!
//! A scenario draws, per (query, step), a "type" from a finite mixture of
//! acceptance probabilities; every drafted position in that step shares the
//! type's probability. Indicator observations `(S, A)` pass through a
//! configurable noise channel, which controls how much information they
//! carry about the true probability. Generation is a pure function of
//! `(seed, query, step)`, so runs are reproducible across worker counts.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvError};
use crate::profiler::ProfileRecord;
use crate::rngutil::substream;

/// Noise channel from the true acceptance probability to the observed
/// indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum NoiseChannel {
    /// `(s, a) = (p, p)` exactly.
    Noiseless,
    /// Gaussian perturbation, clamped to `[0, 1]`.
    Gaussian { sigma: f64 },
    /// `(s, a)` uniform and independent of `p`: zero mutual information.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleScenario {
    /// Mixture atoms of the per-step true acceptance probability.
    pub p_values: Vec<f64>,
    /// Mixture weights; normalized internally.
    pub weights: Vec<f64>,
    pub noise: NoiseChannel,
    pub seed: u64,
    pub draft_len: usize,
}

/// One synthetic drafted position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleDraw {
    pub true_p: f64,
    pub s: f64,
    pub a: f64,
}

impl OracleScenario {
    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty() || self.p_values.len() != self.weights.len() {
            return Err(SvError::Config(
                "oracle scenario needs matching, non-empty p_values and weights".into(),
            ));
        }
        for &p in &self.p_values {
            if !(0.0..=1.0).contains(&p) {
                return Err(SvError::Config(format!("oracle p {p} outside [0,1]")));
            }
        }
        let total: f64 = self.weights.iter().sum();
        if !total.is_finite() || total <= 0.0 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(SvError::Config("oracle weights must be non-negative with positive sum".into()));
        }
        if self.draft_len == 0 {
            return Err(SvError::Config("oracle draft_len must be >= 1".into()));
        }
        if let NoiseChannel::Gaussian { sigma } = self.noise {
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(SvError::Config(format!("oracle noise sigma {sigma} invalid")));
            }
        }
        Ok(())
    }

    /// Deterministic draws for one (query, step): `draft_len` positions
    /// sharing the step's mixture type.
    pub fn draw_step(&self, query: u64, step: u64) -> Vec<OracleDraw> {
        let mut rng = substream(self.seed ^ 0x6f72_6163, query, step);
        let p = self.sample_type(&mut rng);
        (0..self.draft_len)
            .map(|_| {
                let (s, a) = self.observe(p, &mut rng);
                OracleDraw { true_p: p, s, a }
            })
            .collect()
    }

    fn sample_type<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let mut u: f64 = rng.gen::<f64>() * total;
        for (&p, &w) in self.p_values.iter().zip(&self.weights) {
            if u < w {
                return p;
            }
            u -= w;
        }
        *self.p_values.last().unwrap()
    }

    fn observe<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> (f64, f64) {
        match self.noise {
            NoiseChannel::Noiseless => (p, p),
            NoiseChannel::Gaussian { sigma } => {
                if sigma == 0.0 {
                    return (p, p);
                }
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                let s = (p + normal.sample(rng)).clamp(0.0, 1.0);
                let a = (p + normal.sample(rng)).clamp(0.0, 1.0);
                (s, a)
            }
            NoiseChannel::Independent => (rng.gen(), rng.gen()),
        }
    }

    /// Profiling stream: `n_steps` synthetic steps for one query, with
    /// realized accept/reject outcomes.
    pub fn profiling_records(&self, n_steps: usize) -> Vec<ProfileRecord> {
        let mut out = Vec::with_capacity(n_steps * self.draft_len);
        for step in 0..n_steps {
            let draws = self.draw_step(0, step as u64);
            let mut rng = substream(self.seed ^ 0x7072_6f66, 0, step as u64);
            for d in draws {
                out.push(ProfileRecord {
                    s: d.s,
                    a: d.a,
                    true_accept_prob: d.true_p,
                    accepted: rng.gen::<f64>() < d.true_p,
                });
            }
        }
        out
    }
}
