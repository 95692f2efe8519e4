//! Point files (CSV) and update traces (JSON lines).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

/// Parses comma-separated rows of reals; blank lines and `#` lines are
/// skipped.
pub fn parse_points(text: &str, path: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let row = content
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Parse { path: path.into(), line, message: format!("row {line}: {e}") })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::Parse {
                    path: path.into(),
                    line,
                    message: format!("row {line} has {} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Parse { path: path.into(), line, message: format!("row {line}: non-finite value") });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    parse_points(&read(path)?, &path.display().to_string())
}

pub fn format_points(points: &[Vec<f64>]) -> String {
    let mut out = String::new();
    let d = points.first().map_or(0, |p| p.len());
    let _ = writeln!(out, "# dim={d} n={}", points.len());
    for p in points {
        let row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum TraceOp {
    Move { i: usize, z: Vec<f64> },
    Mulv { nz: Vec<(usize, f64)> },
    Solveb { nz: Vec<(usize, f64)> },
}

impl TraceOp {
    pub fn name(&self) -> &'static str {
        match self {
            TraceOp::Move { .. } => "move",
            TraceOp::Mulv { .. } => "mulv",
            TraceOp::Solveb { .. } => "solveb",
        }
    }
}

/// `(line number, op)` for every non-blank line.
pub fn parse_trace(text: &str, path: &str) -> Result<Vec<(usize, TraceOp)>, CliError> {
    let mut ops = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let op = serde_json::from_str(raw).map_err(|e| CliError::Parse { path: path.into(), line, message: e.to_string() })?;
        ops.push((line, op));
    }
    Ok(ops)
}

pub fn read_trace(path: &Path) -> Result<Vec<(usize, TraceOp)>, CliError> {
    parse_trace(&read(path)?, &path.display().to_string())
}

pub fn format_trace(ops: &[TraceOp]) -> String {
    ops.iter().map(|op| serde_json::to_string(op).expect("trace ops serialize") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_round_trip() {
        let pts = vec![vec![0.5, -1.25], vec![3.0, 1e-3]];
        assert_eq!(parse_points(&format_points(&pts), "x").unwrap(), pts);
    }

    #[test]
    fn malformed_row_is_named() {
        let err = parse_points("1,2\n3,oops\n", "pts.csv").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }));
        assert!(err.to_string().contains("row 2"));
        assert!(matches!(parse_points("1,2\n3\n", "p").unwrap_err(), CliError::Parse { line: 2, .. }));
    }

    #[test]
    fn trace_ops() {
        let text = "{\"op\":\"move\",\"i\":3,\"z\":[0.1,0.2]}\n\n{\"op\":\"mulv\",\"nz\":[[1,0.5]]}\n";
        let ops = parse_trace(text, "t").unwrap();
        assert_eq!(ops[0], (1, TraceOp::Move { i: 3, z: vec![0.1, 0.2] }));
        assert_eq!(ops[1], (3, TraceOp::Mulv { nz: vec![(1, 0.5)] }));
        assert!(matches!(parse_trace("{\"op\":\"jump\"}", "t").unwrap_err(), CliError::Parse { line: 1, .. }));
        let back = parse_trace(&format_trace(&[ops[0].1.clone()]), "t").unwrap();
        assert_eq!(back[0].1, ops[0].1);
    }
}
