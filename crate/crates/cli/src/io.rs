//! Plain-text matrix and sequence files: one row per line, values
//! separated by whitespace or commas, `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lowrank_lar::{Matrix, Sequence};

fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .with_context(|| format!("line {}: bad number {t:?}", lineno + 1))
            })
            .collect::<Result<_>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let rows = parse_rows(text)?;
    if rows.is_empty() {
        bail!("no data rows");
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        bail!("rows have inconsistent lengths");
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// A sequence file may put values on one line or several; all values are
/// read in row-major order.
pub fn parse_sequence(text: &str) -> Result<Sequence> {
    let rows = parse_rows(text)?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    if flat.is_empty() {
        bail!("no data values");
    }
    Ok(Sequence::from_vec(flat))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_matrix(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_sequence(path: &Path) -> Result<Sequence> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_sequence(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn format_matrix(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn format_sequence(s: &Sequence) -> String {
    let mut out = String::new();
    for v in s.iter() {
        let _ = writeln!(out, "{v:.16e}");
    }
    out
}
