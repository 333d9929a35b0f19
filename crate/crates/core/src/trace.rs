//! Trace CSV serialization.
//!
//! Columns: `step,query_id,mode,gamma,accepted,latency_model_s,s_1..s_k,a_1..a_k`
//! with `k` the run's draft length; positions without indicators are empty.
//! Floats are written in shortest round-trip form, so identical traces are
//! byte-identical files.

use std::io::{BufRead, Write};

use crate::error::{Result, SvError};
use crate::sim::{Mode, StepRecord};

pub fn write_trace_csv<W: Write>(trace: &[StepRecord], draft_len: usize, mut w: W) -> Result<()> {
    let mut header = String::from("step,query_id,mode,gamma,accepted,latency_model_s");
    for i in 1..=draft_len {
        header.push_str(&format!(",s_{i}"));
    }
    for i in 1..=draft_len {
        header.push_str(&format!(",a_{i}"));
    }
    writeln!(w, "{header}")?;

    for r in trace {
        let mut line = format!(
            "{},{},{},{},{},{}",
            r.step, r.query_id, r.mode, r.gamma, r.accepted, r.latency
        );
        for i in 0..draft_len {
            line.push(',');
            if let Some(v) = r.s.get(i) {
                line.push_str(&v.to_string());
            }
        }
        for i in 0..draft_len {
            line.push(',');
            if let Some(v) = r.a.get(i) {
                line.push_str(&v.to_string());
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Parse a trace CSV; returns the records and the draft length implied by
/// the header.
pub fn read_trace_csv<R: BufRead>(r: R) -> Result<(Vec<StepRecord>, usize)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| SvError::Data("empty trace file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 6 || cols[..6] != ["step", "query_id", "mode", "gamma", "accepted", "latency_model_s"]
    {
        return Err(SvError::Data("unrecognized trace header".into()));
    }
    let indicator_cols = cols.len() - 6;
    if !indicator_cols.is_multiple_of(2) {
        return Err(SvError::Data("malformed trace header: unpaired indicator columns".into()));
    }
    let draft_len = indicator_cols / 2;

    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(SvError::Data(format!(
                "trace line {}: expected {} fields, got {}",
                lineno + 2,
                cols.len(),
                fields.len()
            )));
        }
        let parse_err = |what: &str| SvError::Data(format!("trace line {}: bad {what}", lineno + 2));
        let mut s = Vec::new();
        let mut a = Vec::new();
        for i in 0..draft_len {
            let sv = fields[6 + i];
            let av = fields[6 + draft_len + i];
            if !sv.is_empty() {
                s.push(sv.parse::<f64>().map_err(|_| parse_err("s value"))?);
            }
            if !av.is_empty() {
                a.push(av.parse::<f64>().map_err(|_| parse_err("a value"))?);
            }
        }
        out.push(StepRecord {
            step: fields[0].parse().map_err(|_| parse_err("step"))?,
            query_id: fields[1].parse().map_err(|_| parse_err("query_id"))?,
            mode: fields[2].parse::<Mode>()?,
            gamma: fields[3].parse().map_err(|_| parse_err("gamma"))?,
            accepted: fields[4].parse().map_err(|_| parse_err("accepted"))?,
            latency: fields[5].parse().map_err(|_| parse_err("latency"))?,
            s,
            a,
        });
    }
    Ok((out, draft_len))
}
