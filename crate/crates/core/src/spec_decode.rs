//! Standard speculative decoding: drafting, rejection-sampling verification
//! with residual correction, and the moving-average accuracy baseline.
//!
//! Verification preserves the target distribution exactly: token `i` is
//! accepted with probability `min(1, P_t(t_i)/P_d(t_i))`; on the first
//! rejection a replacement is drawn from `normalize(max(0, P_t - P_d))`,
//! and if the whole prefix is accepted a bonus token is drawn from `P_t`
//! at the next position. Both sides of the ratio are post-filter
//! distributions, so the verified target distribution is exactly the one
//! target decoding would sample from.

use rand::Rng;

use crate::dist::ProbDist;
use crate::error::{Result, SvError};
use crate::ngram::NGramModel;
use crate::sampling::SamplingConfig;

/// A drafted token together with the (post-filter) distribution it was
/// sampled from.
#[derive(Debug, Clone)]
pub struct DraftedToken {
    pub token_id: u32,
    pub draft_prob: f64,
    pub draft_dist: ProbDist,
    /// 1-based index within the draft run.
    pub position: usize,
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    /// Number of drafted tokens accepted, in `[0, gamma]`.
    pub accepted_count: usize,
    /// Residual-sampled replacement on rejection, or the bonus token when the
    /// whole prefix was accepted. Always present: every step emits >= 1 token.
    pub correction_token: u32,
    /// Oracle `min(1, P_t(t_i)/P_d(t_i))` for every verified position,
    /// including positions after the first rejection (teacher-forced).
    pub per_position_accept_prob: Vec<f64>,
}

impl VerifyOutcome {
    /// Tokens this step contributes to the output stream.
    pub fn emitted(&self, drafted: &[DraftedToken]) -> Vec<u32> {
        let mut out: Vec<u32> = drafted[..self.accepted_count]
            .iter()
            .map(|d| d.token_id)
            .collect();
        out.push(self.correction_token);
        out
    }
}

/// Autoregressively sample `draft_len` tokens from the filtered draft model.
pub fn draft_tokens<R: Rng + ?Sized>(
    draft_model: &NGramModel,
    context: &[u32],
    draft_len: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Vec<DraftedToken> {
    assert!(draft_len >= 1);
    let mut ctx = context.to_vec();
    let mut out = Vec::with_capacity(draft_len);
    for position in 1..=draft_len {
        let dist = cfg.apply(&draft_model.next_dist(&ctx));
        let token_id = dist.sample(rng);
        ctx.push(token_id);
        out.push(DraftedToken {
            token_id,
            draft_prob: dist.prob(token_id),
            draft_dist: dist,
            position,
        });
    }
    out
}

/// `normalize(max(0, P_t - P_d))`. Errors when the difference is identically
/// zero, which is only reachable when `P_t = P_d` elementwise.
pub fn residual_distribution(target: &ProbDist, draft: &ProbDist) -> Result<ProbDist> {
    let weights: Vec<f64> = target
        .probs()
        .iter()
        .zip(draft.probs())
        .map(|(t, d)| (t - d).max(0.0))
        .collect();
    ProbDist::from_weights(weights)
        .map_err(|_| SvError::InvalidDist("residual distribution is identically zero".into()))
}

/// Verify a drafted prefix against precomputed (filtered) target
/// distributions. `target_dists` holds `gamma + 1` entries: one per verified
/// position, teacher-forced on the drafted prefix, plus the bonus position.
pub fn verify_prefix<R: Rng + ?Sized>(
    target_dists: &[ProbDist],
    drafted: &[DraftedToken],
    rng: &mut R,
) -> VerifyOutcome {
    let gamma = target_dists.len() - 1;
    assert!(gamma <= drafted.len());

    let per_position_accept_prob: Vec<f64> = (0..gamma)
        .map(|i| {
            let d = &drafted[i];
            (target_dists[i].prob(d.token_id) / d.draft_prob).min(1.0)
        })
        .collect();

    for i in 0..gamma {
        let u: f64 = rng.gen();
        if u >= per_position_accept_prob[i] {
            let residual = residual_distribution(&target_dists[i], &drafted[i].draft_dist)
                .expect("rejection implies a nonzero residual");
            return VerifyOutcome {
                accepted_count: i,
                correction_token: residual.sample(rng),
                per_position_accept_prob,
            };
        }
    }
    VerifyOutcome {
        accepted_count: gamma,
        correction_token: target_dists[gamma].sample(rng),
        per_position_accept_prob,
    }
}

/// Teacher-forced filtered target distributions for positions `1..=gamma+1`.
pub fn target_dists_for_prefix(
    target_model: &NGramModel,
    context: &[u32],
    drafted: &[DraftedToken],
    gamma: usize,
    cfg: &SamplingConfig,
) -> Vec<ProbDist> {
    let mut ctx = context.to_vec();
    let mut dists = Vec::with_capacity(gamma + 1);
    for d in drafted.iter().take(gamma) {
        dists.push(cfg.apply(&target_model.next_dist(&ctx)));
        ctx.push(d.token_id);
    }
    dists.push(cfg.apply(&target_model.next_dist(&ctx)));
    dists
}

/// Full verification step against a target model. `gamma = 0` degenerates to
/// plain target decoding of one token.
pub fn verify_and_correct<R: Rng + ?Sized>(
    target_model: &NGramModel,
    context: &[u32],
    drafted: &[DraftedToken],
    gamma: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> VerifyOutcome {
    assert!(gamma <= drafted.len());
    let dists = target_dists_for_prefix(target_model, context, drafted, gamma, cfg);
    verify_prefix(&dists, drafted, rng)
}

/// Exponential moving average over observed accepted counts; the baseline
/// speculation-accuracy predictor.
#[derive(Debug, Clone, Copy)]
pub struct MovingAverageState {
    ema: f64,
    alpha: f64,
}

impl MovingAverageState {
    pub fn new(initial: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(SvError::Config(format!(
                "ema alpha must be in (0,1], got {alpha}"
            )));
        }
        Ok(MovingAverageState {
            ema: initial,
            alpha,
        })
    }

    /// Returns the prediction for the incoming observation (the current ema)
    /// and folds the observation in.
    pub fn predict_update(&mut self, observed: f64) -> f64 {
        let prediction = self.ema;
        self.ema = self.alpha * observed + (1.0 - self.alpha) * self.ema;
        prediction
    }

    pub fn value(&self) -> f64 {
        self.ema
    }
}
