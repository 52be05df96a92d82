//! Metrics CSV: one row per evaluation.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub const HEADER: &str = "step,eval_mean,eval_std,k,sigma_nsn_mean,sigma_sn_mean,episodes_done,wall_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub k: f64,
    pub sigma_nsn_mean: f64,
    pub sigma_sn_mean: f64,
    pub episodes_done: usize,
    pub wall_ms: u64,
}

/// Header plus one line per row. Floats use the shortest round-trip form.
pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step, r.eval_mean, r.eval_std, r.k, r.sigma_nsn_mean, r.sigma_sn_mean, r.episodes_done, r.wall_ms
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    std::fs::write(path, to_csv(rows))?;
    Ok(())
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("metrics line {line}: {}", reason.into()))
}

/// Parses metrics CSV text. A missing or wrong header, a row with the wrong
/// number of fields or an unparsable value is an error; so is a file with
/// no data rows.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == HEADER => {}
        _ => return Err(malformed(1, "expected header `".to_string() + HEADER + "`")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 8 {
            return Err(malformed(n, format!("expected 8 fields, found {}", f.len())));
        }
        let float = |j: usize| {
            f[j].parse::<f64>()
                .map_err(|_| malformed(n, format!("bad number `{}`", f[j])))
        };
        let int = |j: usize| {
            f[j].parse::<u64>()
                .map_err(|_| malformed(n, format!("bad integer `{}`", f[j])))
        };
        rows.push(MetricsRow {
            step: int(0)? as usize,
            eval_mean: float(1)?,
            eval_std: float(2)?,
            k: float(3)?,
            sigma_nsn_mean: float(4)?,
            sigma_sn_mean: float(5)?,
            episodes_done: int(6)? as usize,
            wall_ms: int(7)?,
        });
    }
    if rows.is_empty() {
        return Err(malformed(2, "no data rows"));
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    parse_csv(&std::fs::read_to_string(path)?)
}
