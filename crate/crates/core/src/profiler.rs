//! Acceptance-probability profiling over the (S, A) indicator plane.
//!
//! A profiling run of speculative decoding records, per drafted token, the
//! indicators `(S, A)` and the oracle acceptance probability
//! `min(1, P_t(t_d)/P_d(t_d))`. Both indicator axes are discretized with
//! equal-frequency (adaptive) binning and each cell stores the mean recorded
//! acceptance probability, which decode-time lookups then use as the
//! predicted per-position acceptance. The same records feed the
//! entropy/information-gain report and the divergence-correlation analysis.
//!
//! The profile persists counts and sums rather than means, so profiles with
//! identical edges merge associatively.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvError};

/// One profiling observation for a drafted token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub s: f64,
    pub a: f64,
    /// Oracle `min(1, P_t(t_d)/P_d(t_d))` recorded during profiling.
    pub true_accept_prob: f64,
    /// Realized accept/reject outcome.
    pub accepted: bool,
}

/// Equal-frequency bin boundaries.
///
/// Interior edges sit at midpoints between the order statistics flanking
/// each quantile cut, so repeated values (point masses) stay in one bin and
/// distinct values separated by a cut land in different bins. Duplicate
/// edges collapse, so the effective bin count can be below `n_bins`;
/// constant samples collapse to a single bin.
pub fn adaptive_edges(samples: &[f64], n_bins: usize) -> Vec<f64> {
    assert!(!samples.is_empty() && n_bins >= 1);
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let len = sorted.len();

    let mut edges = vec![sorted[0]];
    for j in 1..n_bins {
        let mut k = j * len / n_bins;
        if k == 0 || k >= len {
            continue;
        }
        // Slide forward off a point mass to the next value change.
        while k < len && sorted[k] == sorted[k - 1] {
            k += 1;
        }
        if k < len {
            let cut = 0.5 * (sorted[k - 1] + sorted[k]);
            if cut > *edges.last().unwrap() {
                edges.push(cut);
            }
        }
    }
    if sorted[len - 1] > *edges.last().unwrap() {
        edges.push(sorted[len - 1]);
    }
    edges
}

/// Bin index for `v` given ascending edges; out-of-range values clamp to the
/// boundary bins.
fn bin_index(edges: &[f64], v: f64) -> usize {
    let n_bins = (edges.len() - 1).max(1);
    if edges.len() <= 2 {
        return 0;
    }
    // Interior edges are edges[1..len-1]; bin i spans [e_i, e_{i+1}).
    let interior = &edges[1..edges.len() - 1];
    let idx = interior.partition_point(|e| *e <= v);
    idx.min(n_bins - 1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Cell {
    count: u64,
    sum: f64,
}

/// 2-D binned table mapping `(S, A)` cells to mean acceptance probability.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceProfile {
    s_edges: Vec<f64>,
    a_edges: Vec<f64>,
    cells: HashMap<(usize, usize), Cell>,
    n_records: u64,
    sum_records: f64,
    meta: ProfileMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    #[serde(default)]
    pub models: String,
    #[serde(default)]
    pub corpus: String,
    #[serde(default)]
    pub n_records: u64,
}

impl AcceptanceProfile {
    /// Build from profiling records. Edges come from independent adaptive
    /// binning of the S and A sample sets.
    pub fn build(records: &[ProfileRecord], n_s_bins: usize, n_a_bins: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(SvError::Data("cannot build a profile from 0 records".into()));
        }
        let s_samples: Vec<f64> = records.iter().map(|r| r.s).collect();
        let a_samples: Vec<f64> = records.iter().map(|r| r.a).collect();
        let s_edges = adaptive_edges(&s_samples, n_s_bins);
        let a_edges = adaptive_edges(&a_samples, n_a_bins);
        let mut profile = AcceptanceProfile {
            s_edges,
            a_edges,
            cells: HashMap::new(),
            n_records: 0,
            sum_records: 0.0,
            meta: ProfileMeta::default(),
        };
        for r in records {
            profile.add(r);
        }
        profile.recompute_totals();
        Ok(profile)
    }

    /// Totals are always recomputed from the cells in sorted key order, so
    /// build, merge, and load agree bit-for-bit.
    fn recompute_totals(&mut self) {
        let mut keys: Vec<(usize, usize)> = self.cells.keys().copied().collect();
        keys.sort_unstable();
        self.n_records = 0;
        self.sum_records = 0.0;
        for k in keys {
            let c = &self.cells[&k];
            self.n_records += c.count;
            self.sum_records += c.sum;
        }
        self.meta.n_records = self.n_records;
    }

    fn add(&mut self, r: &ProfileRecord) {
        let si = bin_index(&self.s_edges, r.s);
        let ai = bin_index(&self.a_edges, r.a);
        let cell = self.cells.entry((si, ai)).or_default();
        cell.count += 1;
        cell.sum += r.true_accept_prob;
        self.n_records += 1;
        self.sum_records += r.true_accept_prob;
    }

    /// Merge another profile built with identical edges. Associative.
    pub fn merge(&mut self, other: &AcceptanceProfile) -> Result<()> {
        if self.s_edges != other.s_edges || self.a_edges != other.a_edges {
            return Err(SvError::Data("cannot merge profiles with different edges".into()));
        }
        for (&key, cell) in &other.cells {
            let mine = self.cells.entry(key).or_default();
            mine.count += cell.count;
            mine.sum += cell.sum;
        }
        self.recompute_totals();
        Ok(())
    }

    pub fn n_s_bins(&self) -> usize {
        (self.s_edges.len() - 1).max(1)
    }

    pub fn n_a_bins(&self) -> usize {
        (self.a_edges.len() - 1).max(1)
    }

    pub fn n_records(&self) -> u64 {
        self.n_records
    }

    pub fn global_mean(&self) -> f64 {
        self.sum_records / self.n_records as f64
    }

    pub fn set_meta(&mut self, models: String, corpus: String) {
        self.meta.models = models;
        self.meta.corpus = corpus;
    }

    /// Predicted acceptance probability for an `(s, a)` observation.
    /// Out-of-range values clamp to the boundary bins; an empty cell falls
    /// back to the marginal mean of its S-row, then the global mean.
    pub fn lookup_acceptance(&self, s: f64, a: f64) -> f64 {
        let si = bin_index(&self.s_edges, s);
        let ai = bin_index(&self.a_edges, a);
        if let Some(cell) = self.cells.get(&(si, ai)) {
            if cell.count > 0 {
                return cell.sum / cell.count as f64;
            }
        }
        // S-row marginal.
        let mut count = 0u64;
        let mut sum = 0.0;
        for aj in 0..self.n_a_bins() {
            if let Some(cell) = self.cells.get(&(si, aj)) {
                count += cell.count;
                sum += cell.sum;
            }
        }
        if count > 0 {
            sum / count as f64
        } else {
            self.global_mean()
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &SerProfile::from(self))?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let ser: SerProfile = serde_json::from_reader(BufReader::new(file))?;
        ser.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct SerCell {
    si: usize,
    ai: usize,
    count: u64,
    sum: f64,
}

#[derive(Serialize, Deserialize)]
struct SerProfile {
    s_edges: Vec<f64>,
    a_edges: Vec<f64>,
    cells: Vec<SerCell>,
    meta: ProfileMeta,
}

impl From<&AcceptanceProfile> for SerProfile {
    fn from(p: &AcceptanceProfile) -> Self {
        let mut cells: Vec<SerCell> = p
            .cells
            .iter()
            .map(|(&(si, ai), c)| SerCell {
                si,
                ai,
                count: c.count,
                sum: c.sum,
            })
            .collect();
        cells.sort_by_key(|c| (c.si, c.ai));
        SerProfile {
            s_edges: p.s_edges.clone(),
            a_edges: p.a_edges.clone(),
            cells,
            meta: p.meta.clone(),
        }
    }
}

impl TryFrom<SerProfile> for AcceptanceProfile {
    type Error = SvError;
    fn try_from(s: SerProfile) -> Result<Self> {
        if s.s_edges.is_empty() || s.a_edges.is_empty() {
            return Err(SvError::Data("profile has empty edge lists".into()));
        }
        let mut cells = HashMap::new();
        for c in s.cells {
            cells.insert((c.si, c.ai), Cell { count: c.count, sum: c.sum });
        }
        let mut p = AcceptanceProfile {
            s_edges: s.s_edges,
            a_edges: s.a_edges,
            cells,
            n_records: 0,
            sum_records: 0.0,
            meta: s.meta,
        };
        p.recompute_totals();
        if p.n_records == 0 {
            return Err(SvError::Data("profile has no records".into()));
        }
        Ok(p)
    }
}

// ---------------------------------------------------------------------------
// Information-gain analysis
// ---------------------------------------------------------------------------

/// How the (S, A) plane is discretized for the entropy report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    /// `n x n` equal-width bins on `[0, 1]` for both S and A.
    Fixed(usize),
    /// Equal-frequency binning with the requested bin counts.
    Adaptive { s_bins: usize, a_bins: usize },
}

/// Plug-in entropy estimates in bits for the acceptance probability `X`
/// conditioned on the discretized indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoGainReport {
    pub resolution: String,
    /// Non-empty (S, A) cells actually observed.
    pub effective_cells: usize,
    pub h_x: f64,
    pub h_x_given_s: f64,
    pub h_x_given_a: f64,
    pub h_x_given_sa: f64,
    pub i_x_sa: f64,
}

fn entropy_bits(counts: &HashMap<usize, u64>, total: u64, miller_madow: bool) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let mut h = 0.0;
    let mut nonempty = 0u64;
    for &c in counts.values() {
        if c > 0 {
            nonempty += 1;
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    if miller_madow && nonempty > 0 {
        h += (nonempty - 1) as f64 / (2.0 * n * std::f64::consts::LN_2);
    }
    h
}

fn conditional_entropy_bits<K: std::hash::Hash + Eq>(
    joint: &HashMap<K, HashMap<usize, u64>>,
    total: u64,
    miller_madow: bool,
) -> f64 {
    let n = total as f64;
    joint
        .values()
        .map(|x_counts| {
            let ny: u64 = x_counts.values().sum();
            (ny as f64 / n) * entropy_bits(x_counts, ny, miller_madow)
        })
        .sum()
}

fn x_bin(p: f64, x_bins: usize) -> usize {
    ((p * x_bins as f64) as usize).min(x_bins - 1)
}

fn fixed_bin(v: f64, n: usize) -> usize {
    ((v.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1)
}

/// Plug-in entropy / conditional entropy / information gain of the
/// acceptance probability `X` given the discretized indicators.
///
/// `X` is discretized into `x_bins` equal-width bins on `[0, 1]` over
/// `true_accept_prob`; conditional entropies are weighted by bin mass.
pub fn info_gain_report(
    records: &[ProfileRecord],
    x_bins: usize,
    resolution: Resolution,
    miller_madow: bool,
) -> Result<InfoGainReport> {
    if records.len() < 2 {
        return Err(SvError::Data("need >= 2 records for an info-gain report".into()));
    }
    if x_bins == 0 {
        return Err(SvError::Config("x_bins must be >= 1".into()));
    }

    type BinFn = Box<dyn Fn(f64) -> usize>;
    let (s_bin, a_bin, label): (BinFn, BinFn, String) =
        match resolution {
            Resolution::Fixed(n) => {
                if n == 0 {
                    return Err(SvError::Config("resolution must be >= 1".into()));
                }
                (
                    Box::new(move |v| fixed_bin(v, n)),
                    Box::new(move |v| fixed_bin(v, n)),
                    format!("{n}"),
                )
            }
            Resolution::Adaptive { s_bins, a_bins } => {
                let s_samples: Vec<f64> = records.iter().map(|r| r.s).collect();
                let a_samples: Vec<f64> = records.iter().map(|r| r.a).collect();
                let s_edges = adaptive_edges(&s_samples, s_bins);
                let a_edges = adaptive_edges(&a_samples, a_bins);
                let eff = ((s_edges.len() - 1).max(1)) * ((a_edges.len() - 1).max(1));
                (
                    Box::new(move |v| bin_index(&s_edges, v)),
                    Box::new(move |v| bin_index(&a_edges, v)),
                    format!("adaptive({eff})"),
                )
            }
        };

    let total = records.len() as u64;
    let mut x_counts: HashMap<usize, u64> = HashMap::new();
    let mut by_s: HashMap<usize, HashMap<usize, u64>> = HashMap::new();
    let mut by_a: HashMap<usize, HashMap<usize, u64>> = HashMap::new();
    let mut by_sa: HashMap<(usize, usize), HashMap<usize, u64>> = HashMap::new();
    for r in records {
        let x = x_bin(r.true_accept_prob, x_bins);
        let si = s_bin(r.s);
        let ai = a_bin(r.a);
        *x_counts.entry(x).or_insert(0) += 1;
        *by_s.entry(si).or_default().entry(x).or_insert(0) += 1;
        *by_a.entry(ai).or_default().entry(x).or_insert(0) += 1;
        *by_sa.entry((si, ai)).or_default().entry(x).or_insert(0) += 1;
    }

    let h_x = entropy_bits(&x_counts, total, miller_madow);
    let h_x_given_s = conditional_entropy_bits(&by_s, total, miller_madow);
    let h_x_given_a = conditional_entropy_bits(&by_a, total, miller_madow);
    let h_x_given_sa = conditional_entropy_bits(&by_sa, total, miller_madow);

    Ok(InfoGainReport {
        resolution: label,
        effective_cells: by_sa.len(),
        h_x,
        h_x_given_s,
        h_x_given_a,
        h_x_given_sa,
        i_x_sa: h_x - h_x_given_sa,
    })
}

/// The standard report rows: fixed 5 / 10 / 20 resolutions plus adaptive
/// binning at the profile's default bin counts.
pub fn info_gain_table(
    records: &[ProfileRecord],
    x_bins: usize,
    s_bins: usize,
    a_bins: usize,
) -> Result<Vec<InfoGainReport>> {
    let mut rows = Vec::with_capacity(4);
    for n in [5, 10, 20] {
        rows.push(info_gain_report(records, x_bins, Resolution::Fixed(n), false)?);
    }
    rows.push(info_gain_report(
        records,
        x_bins,
        Resolution::Adaptive { s_bins, a_bins },
        false,
    )?);
    Ok(rows)
}

/// CSV layout: `resolution,h_x,h_x_s,h_x_a,h_x_sa,i_x_sa`.
pub fn write_info_gain_csv<W: Write>(rows: &[InfoGainReport], mut w: W) -> Result<()> {
    writeln!(w, "resolution,h_x,h_x_s,h_x_a,h_x_sa,i_x_sa")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.resolution, r.h_x, r.h_x_given_s, r.h_x_given_a, r.h_x_given_sa, r.i_x_sa
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Correlation analysis
// ---------------------------------------------------------------------------

/// Pearson and Spearman correlations between paired divergence samples.
/// Errors on fewer than 3 pairs or zero variance on either side.
pub fn correlation_report(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.len() < 3 {
        return Err(SvError::Data(format!(
            "need >= 3 pairs for correlation, got {}",
            pairs.len()
        )));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let r = pearson(&xs, &ys)?;
    let rho = pearson(&ranks(&xs), &ranks(&ys))?;
    Ok((r, rho))
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(SvError::Data("zero variance: correlation undefined".into()));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Average ranks for ties.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}
