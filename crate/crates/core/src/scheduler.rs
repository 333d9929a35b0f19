//! Goodput-optimal verification-length selection.
//!
//! Given a chain of predicted per-position acceptance probabilities, the
//! number of accepted tokens `N` under verification length `gamma` follows
//!
//! ```text
//! P_gamma(N=n) = (1 - p_{n+1}) * prod_{i<=n} p_i    for n < gamma
//! P_gamma(N=gamma) = prod_{i<=gamma} p_i
//! ```
//!
//! so `E(N|gamma) = sum_{k<=gamma} prod_{i<=k} p_i`. Goodput is accepted
//! tokens per unit time under a profiled latency model; the single-query
//! search increases `gamma` until goodput first declines, and the batch
//! scheduler greedily grows per-query prefixes by marginal expected gain
//! while goodput keeps strictly improving.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvError};

/// Step latency as a function of total verified token positions.
///
/// The parametric form is flat up to `knee` positions (under-utilized
/// hardware) and linear beyond it. A measured table interpolates linearly
/// between points, is constant below the smallest `n`, and extrapolates the
/// last segment's slope above the largest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SerLatency", into = "SerLatency")]
pub enum LatencyModel {
    Parametric { base: f64, knee: usize, slope: f64 },
    Table { table: BTreeMap<usize, f64> },
}

/// JSON bridge: keys of a JSON object are strings, and untagged enums do not
/// coerce them back to integers, so the table form round-trips through
/// string keys.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SerLatency {
    Parametric { base: f64, knee: usize, slope: f64 },
    Table { table: BTreeMap<String, f64> },
}

impl From<LatencyModel> for SerLatency {
    fn from(m: LatencyModel) -> Self {
        match m {
            LatencyModel::Parametric { base, knee, slope } => {
                SerLatency::Parametric { base, knee, slope }
            }
            LatencyModel::Table { table } => SerLatency::Table {
                table: table.into_iter().map(|(n, l)| (n.to_string(), l)).collect(),
            },
        }
    }
}

impl TryFrom<SerLatency> for LatencyModel {
    type Error = SvError;
    fn try_from(s: SerLatency) -> Result<Self> {
        match s {
            SerLatency::Parametric { base, knee, slope } => {
                Ok(LatencyModel::Parametric { base, knee, slope })
            }
            SerLatency::Table { table } => {
                let table = table
                    .into_iter()
                    .map(|(n, l)| {
                        n.parse::<usize>()
                            .map(|n| (n, l))
                            .map_err(|_| SvError::Config(format!("bad latency table key {n:?}")))
                    })
                    .collect::<Result<BTreeMap<usize, f64>>>()?;
                Ok(LatencyModel::Table { table })
            }
        }
    }
}

impl Default for LatencyModel {
    /// Flat up to 128 verified positions, then one time unit per position:
    /// a mid-size under-utilized region ahead of the linear regime.
    fn default() -> Self {
        LatencyModel::Parametric {
            base: 4.0,
            knee: 128,
            slope: 1.0,
        }
    }
}

impl LatencyModel {
    pub fn parametric(base: f64, knee: usize, slope: f64) -> Result<Self> {
        let m = LatencyModel::Parametric { base, knee, slope };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LatencyModel::Parametric { base, knee: _, slope } => {
                if !base.is_finite() || *base <= 0.0 {
                    return Err(SvError::Config(format!("latency base must be > 0, got {base}")));
                }
                if !slope.is_finite() || *slope < 0.0 {
                    return Err(SvError::Config(format!("latency slope must be >= 0, got {slope}")));
                }
            }
            LatencyModel::Table { table } => {
                if table.is_empty() {
                    return Err(SvError::Config("latency table is empty".into()));
                }
                let mut prev = f64::NEG_INFINITY;
                for (&n, &lat) in table {
                    if !lat.is_finite() || lat <= 0.0 {
                        return Err(SvError::Config(format!("latency at n={n} must be > 0")));
                    }
                    if lat < prev {
                        return Err(SvError::Config(
                            "latency table must be non-decreasing".into(),
                        ));
                    }
                    prev = lat;
                }
            }
        }
        Ok(())
    }

    pub fn latency(&self, positions: usize) -> f64 {
        match self {
            LatencyModel::Parametric { base, knee, slope } => {
                if positions <= *knee {
                    *base
                } else {
                    base + slope * (positions - knee) as f64
                }
            }
            LatencyModel::Table { table } => {
                let n = positions as f64;
                let first = table.iter().next().expect("validated non-empty");
                let last = table.iter().next_back().expect("validated non-empty");
                if positions <= *first.0 {
                    return *first.1;
                }
                if positions >= *last.0 {
                    // Extrapolate the final segment's slope.
                    let mut iter = table.iter().rev();
                    let (n1, l1) = iter.next().unwrap();
                    if let Some((n0, l0)) = iter.next() {
                        let slope = (l1 - l0) / (*n1 - *n0) as f64;
                        return l1 + slope * (n - *n1 as f64);
                    }
                    return *l1;
                }
                let (n0, l0) = table.range(..=positions).next_back().unwrap();
                if *n0 == positions {
                    return *l0;
                }
                let (n1, l1) = table.range(positions..).next().unwrap();
                l0 + (l1 - l0) * (n - *n0 as f64) / (*n1 - *n0) as f64
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let m: LatencyModel = serde_json::from_reader(BufReader::new(file))?;
        m.validate()?;
        Ok(m)
    }
}

/// Predicted acceptance probabilities for one query's drafted positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceChain {
    probs: Vec<f64>,
}

impl AcceptanceChain {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        for &p in &probs {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(SvError::Config(format!(
                    "acceptance probability {p} outside [0,1]"
                )));
            }
        }
        Ok(AcceptanceChain { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `prod_{i<=k} p_i` for `k = 0..=len` (`k=0` is the empty product 1).
    fn prefix_products(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.probs.len() + 1);
        let mut acc = 1.0;
        out.push(acc);
        for &p in &self.probs {
            acc *= p;
            out.push(acc);
        }
        out
    }
}

/// `P_gamma(N = n)`: exact evaluation of the piecewise formula.
pub fn p_gamma_n(chain: &AcceptanceChain, gamma: usize, n: usize) -> Result<f64> {
    if gamma > chain.len() {
        return Err(SvError::Config(format!(
            "gamma {gamma} exceeds chain length {}",
            chain.len()
        )));
    }
    if n > gamma {
        return Err(SvError::Config(format!("n {n} exceeds gamma {gamma}")));
    }
    let prefix: f64 = chain.probs[..n].iter().product();
    if n == gamma {
        Ok(prefix)
    } else {
        Ok((1.0 - chain.probs[n]) * prefix)
    }
}

/// `E(N|gamma) = sum_{k=1..gamma} prod_{i<=k} p_i`.
pub fn expected_accepted(chain: &AcceptanceChain, gamma: usize) -> f64 {
    assert!(gamma <= chain.len());
    let mut acc = 1.0;
    let mut sum = 0.0;
    for &p in &chain.probs[..gamma] {
        acc *= p;
        sum += acc;
    }
    sum
}

/// Goodput for verifying a `gamma`-token prefix. With `bonus` (the default
/// convention) the guaranteed correction/bonus token counts in the
/// numerator; the `gamma + 1` in the denominator is the target position that
/// produces it either way.
pub fn goodput(chain: &AcceptanceChain, gamma: usize, lat: &LatencyModel, bonus: bool) -> f64 {
    let expected = expected_accepted(chain, gamma) + if bonus { 1.0 } else { 0.0 };
    expected / lat.latency(gamma + 1)
}

/// First-decline search: grow `gamma` while goodput improves; on the first
/// strict decline revert to the running best. Ties keep scanning without
/// moving the best, so equal-goodput plateaus resolve to the smaller `gamma`.
pub fn optimal_gamma(chain: &AcceptanceChain, lat: &LatencyModel) -> (usize, f64) {
    let mut best_gamma = 0;
    let mut best = goodput(chain, 0, lat, true);
    for gamma in 1..=chain.len() {
        let g = goodput(chain, gamma, lat, true);
        if g > best {
            best = g;
            best_gamma = gamma;
        } else if g < best {
            break;
        }
    }
    (best_gamma, best)
}

/// Per-query verification lengths chosen for one batch step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    pub verify_lens: Vec<usize>,
    /// `sum_q E(N_q | gamma_q)`, drafted-token acceptances only.
    pub expected_accepted: f64,
    pub latency: f64,
    /// `(expected_accepted + corrections) / latency`.
    pub goodput: f64,
}

/// Greedy batch scheduling. Starts from empty prefixes (`gamma_q = 0`,
/// every query still emits its correction token) and repeatedly extends the
/// query whose next token has the largest marginal expected gain -- its
/// prefix product -- breaking ties toward the lower query id. The latency
/// argument is the batch's total target-side positions `sum_q (gamma_q + 1)`.
/// Stops when the best extension would not strictly increase goodput.
pub fn batch_schedule(chains: &[AcceptanceChain], lat: &LatencyModel) -> ScheduleDecision {
    assert!(!chains.is_empty());
    let prefixes: Vec<Vec<f64>> = chains.iter().map(|c| c.prefix_products()).collect();
    let mut lens = vec![0usize; chains.len()];
    let mut expected = 0.0;
    let mut numerator = chains.len() as f64;
    let mut positions = chains.len();

    loop {
        let mut best: Option<(usize, f64)> = None;
        for (q, chain) in chains.iter().enumerate() {
            if lens[q] < chain.len() {
                let gain = prefixes[q][lens[q] + 1];
                let better = match best {
                    None => true,
                    Some((_, g)) => gain > g,
                };
                if better {
                    best = Some((q, gain));
                }
            }
        }
        let Some((q, gain)) = best else { break };
        let current_goodput = numerator / lat.latency(positions);
        let next_goodput = (numerator + gain) / lat.latency(positions + 1);
        if next_goodput <= current_goodput {
            break;
        }
        lens[q] += 1;
        expected += gain;
        numerator += gain;
        positions += 1;
    }

    let latency = lat.latency(positions);
    ScheduleDecision {
        verify_lens: lens,
        expected_accepted: expected,
        latency,
        goodput: numerator / latency,
    }
}
