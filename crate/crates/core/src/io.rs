//! Small CSV helpers for the two-column files the tools exchange.

use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// Parse a two-column numeric CSV with a one-line header.
pub fn read_two_column_csv<R: BufRead>(r: R, origin: &Path) -> Result<Vec<(f64, f64)>> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut rows = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if idx == 0 || trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(err(
                idx + 1,
                format!("expected 2 fields, got {}", fields.len()),
            ));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(idx + 1, format!("not a number: {s:?}")))
        };
        rows.push((parse(fields[0])?, parse(fields[1])?));
    }
    Ok(rows)
}

/// Render a float for CSV output with full round-trip precision.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}
