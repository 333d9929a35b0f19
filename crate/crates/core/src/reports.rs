//! Post-hoc trace analyses: per-query verification-length fairness and
//! wasted-verification accounting.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Result, SvError};
use crate::scheduler::LatencyModel;
use crate::sim::StepRecord;

/// Per-query verification-length statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryFairness {
    pub query_id: usize,
    pub steps: usize,
    pub avg_gamma: f64,
    /// Histogram over gamma = 0..=draft_len.
    pub hist: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub draft_len: usize,
    pub overall_avg: f64,
    pub per_query: Vec<QueryFairness>,
    /// Queries with the smallest average verification lengths (up to 5).
    pub bottom5: Vec<usize>,
    /// Queries with the largest average verification lengths (up to 5).
    pub top5: Vec<usize>,
}

/// Per-query average chosen verification length and gamma histogram, plus
/// the worst/best-case extracts.
pub fn fairness_report(trace: &[StepRecord], draft_len: usize) -> Result<FairnessReport> {
    if trace.is_empty() {
        return Err(SvError::Data("empty trace".into()));
    }
    let mut by_query: BTreeMap<usize, (usize, usize, Vec<usize>)> = BTreeMap::new();
    let mut total_gamma = 0usize;
    for r in trace {
        if r.gamma > draft_len {
            return Err(SvError::Data(format!(
                "trace gamma {} exceeds draft_len {draft_len}",
                r.gamma
            )));
        }
        let entry = by_query
            .entry(r.query_id)
            .or_insert_with(|| (0, 0, vec![0; draft_len + 1]));
        entry.0 += 1;
        entry.1 += r.gamma;
        entry.2[r.gamma] += 1;
        total_gamma += r.gamma;
    }
    let per_query: Vec<QueryFairness> = by_query
        .into_iter()
        .map(|(query_id, (steps, gamma_sum, hist))| QueryFairness {
            query_id,
            steps,
            avg_gamma: gamma_sum as f64 / steps as f64,
            hist,
        })
        .collect();

    let mut order: Vec<usize> = (0..per_query.len()).collect();
    order.sort_by(|&a, &b| {
        per_query[a]
            .avg_gamma
            .partial_cmp(&per_query[b].avg_gamma)
            .unwrap()
            .then(per_query[a].query_id.cmp(&per_query[b].query_id))
    });
    let take = order.len().min(5);
    let bottom5: Vec<usize> = order[..take].iter().map(|&i| per_query[i].query_id).collect();
    let top5: Vec<usize> = order[order.len() - take..]
        .iter()
        .rev()
        .map(|&i| per_query[i].query_id)
        .collect();

    Ok(FairnessReport {
        draft_len,
        overall_avg: total_gamma as f64 / trace.len() as f64,
        per_query,
        bottom5,
        top5,
    })
}

/// CSV in the worst/best-case table layout: one row per query with its
/// average verification length and the number of steps at each gamma.
pub fn write_fairness_csv<W: Write>(report: &FairnessReport, mut w: W) -> Result<()> {
    let mut header = String::from("case,query_id,avg_verify_len,steps");
    for g in 0..=report.draft_len {
        header.push_str(&format!(",gamma_{g}"));
    }
    writeln!(w, "{header}")?;
    writeln!(w, "overall,,{},{}", report.overall_avg, report.per_query.len())?;

    let mut write_row = |case: &str, q: &QueryFairness| -> Result<()> {
        let mut line = format!("{case},{},{},{}", q.query_id, q.avg_gamma, q.steps);
        for &c in &q.hist {
            line.push_str(&format!(",{c}"));
        }
        writeln!(w, "{line}")?;
        Ok(())
    };
    for &id in &report.bottom5 {
        let q = report.per_query.iter().find(|q| q.query_id == id).unwrap();
        write_row("worst", q)?;
    }
    for &id in &report.top5 {
        let q = report.per_query.iter().find(|q| q.query_id == id).unwrap();
        write_row("best", q)?;
    }
    for q in &report.per_query {
        write_row("all", q)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WasteReport {
    /// Fraction of verified positions that were rejected.
    pub rejected_fraction: f64,
    /// Fraction of steps whose modeled per-token cost exceeded target
    /// decoding's per-token cost at the same live batch size.
    pub steps_costlier_than_target: f64,
    pub steps: usize,
}

/// Wasted-verification accounting over an SD or SV trace.
pub fn waste_report(trace: &[StepRecord], latency: &LatencyModel) -> Result<WasteReport> {
    if trace.is_empty() {
        return Err(SvError::Data("empty trace".into()));
    }
    let mut total_gamma = 0usize;
    let mut total_accepted = 0usize;
    // step -> (emitted tokens, live queries, step latency)
    let mut steps: BTreeMap<usize, (usize, usize, f64)> = BTreeMap::new();
    for r in trace {
        total_gamma += r.gamma;
        total_accepted += r.accepted;
        let e = steps.entry(r.step).or_insert((0, 0, r.latency));
        e.0 += r.accepted + 1;
        e.1 += 1;
    }
    let costlier = steps
        .values()
        .filter(|(emitted, live, lat)| {
            let per_token = lat / *emitted as f64;
            let target_per_token = latency.latency(*live) / *live as f64;
            per_token > target_per_token
        })
        .count();
    Ok(WasteReport {
        rejected_fraction: if total_gamma > 0 {
            (total_gamma - total_accepted) as f64 / total_gamma as f64
        } else {
            0.0
        },
        steps_costlier_than_target: costlier as f64 / steps.len() as f64,
        steps: steps.len(),
    })
}
