//! Draft/companion alignment indicators.
//!
//! For each drafted token the companion model supplies two signals:
//! `S`, the distribution overlap `sum_i min(P_d(i), P_c(i))`, and `A`, the
//! token's acceptance probability under the rejection-sampling rule applied
//! with the companion, `min(1, P_c(t_d) / P_d(t_d))`. Both lie in `[0, 1]`
//! and together condition the acceptance-probability profile.

use crate::dist::ProbDist;
use crate::error::{Result, SvError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorPair {
    pub s: f64,
    pub a: f64,
}

/// Compute `(S, A)` for a drafted token. `P_d(t_d)` must be positive, since
/// the token was sampled from the draft distribution.
pub fn compute_indicators(
    draft: &ProbDist,
    companion: &ProbDist,
    drafted_token: u32,
) -> Result<IndicatorPair> {
    let p_d = draft.prob(drafted_token);
    if p_d <= 0.0 {
        return Err(SvError::Data(format!(
            "drafted token {drafted_token} has zero draft probability"
        )));
    }
    let s = overlap(draft, companion);
    let a = (companion.prob(drafted_token) / p_d).min(1.0);
    Ok(IndicatorPair { s, a })
}

fn overlap(p: &ProbDist, q: &ProbDist) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different vocabularies");
    p.probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| a.min(*b))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Divergence `1 - sum_i min(P(i), Q(i))`, which equals half the L1 distance.
/// Symmetric, zero iff `P = Q`, one for disjoint supports.
pub fn divergence(p: &ProbDist, q: &ProbDist) -> f64 {
    1.0 - overlap(p, q)
}
