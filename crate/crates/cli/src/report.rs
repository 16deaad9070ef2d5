//! Result serialization: one CSV row per (trial, method) and a JSON
//! summary with per-method quantiles and pairwise median-error reductions.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::harness::TrialRecord;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub trials: usize,
    pub failures: usize,
    pub median_error: Option<f64>,
    pub q1_error: Option<f64>,
    pub q3_error: Option<f64>,
    pub mean_seconds: f64,
}

/// Median-error reduction of `method` relative to `baseline`, in percent.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Reduction {
    pub method: String,
    pub baseline: String,
    pub percent: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentSummary {
    pub methods: Vec<MethodSummary>,
    pub reductions: Vec<Reduction>,
}

/// Interpolated quantile of a sorted slice (type-7, the spreadsheet
/// default).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(quantile(&v, 0.5))
}

pub fn summarize(records: &[TrialRecord]) -> Result<ExperimentSummary> {
    if records.is_empty() {
        bail!("no records to summarize");
    }
    let mut order: Vec<String> = Vec::new();
    for r in records {
        if !order.contains(&r.method) {
            order.push(r.method.clone());
        }
    }
    let mut methods = Vec::new();
    for name in &order {
        let rows: Vec<&TrialRecord> = records.iter().filter(|r| &r.method == name).collect();
        let mut errors: Vec<f64> = rows.iter().filter_map(|r| r.error).collect();
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let stat = |q: f64| {
            if errors.is_empty() {
                None
            } else {
                Some(quantile(&errors, q))
            }
        };
        methods.push(MethodSummary {
            method: name.clone(),
            trials: rows.len(),
            failures: rows.iter().filter(|r| r.error.is_none()).count(),
            median_error: stat(0.5),
            q1_error: stat(0.25),
            q3_error: stat(0.75),
            mean_seconds: rows.iter().map(|r| r.seconds).sum::<f64>() / rows.len() as f64,
        });
    }
    let mut reductions = Vec::new();
    for a in &methods {
        for b in &methods {
            if a.method == b.method {
                continue;
            }
            if let (Some(ma), Some(mb)) = (a.median_error, b.median_error) {
                if mb > 0.0 {
                    reductions.push(Reduction {
                        method: a.method.clone(),
                        baseline: b.method.clone(),
                        percent: (1.0 - ma / mb) * 100.0,
                    });
                }
            }
        }
    }
    Ok(ExperimentSummary {
        methods,
        reductions,
    })
}

pub fn write_records_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    if records.is_empty() {
        bail!("no records to write");
    }
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .map(|row| row.map_err(Into::into))
        .collect()
}

pub fn write_summary_json(path: &Path, summary: &ExperimentSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Plain-text table for terminal output.
pub fn render_summary(summary: &ExperimentSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>7} {:>9} {:>13} {:>13} {:>13} {:>11}\n",
        "method", "trials", "failures", "q1", "median", "q3", "mean time"
    ));
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
    for m in &summary.methods {
        out.push_str(&format!(
            "{:<10} {:>7} {:>9} {:>13} {:>13} {:>13} {:>9.3}s\n",
            m.method,
            m.trials,
            m.failures,
            fmt(m.q1_error),
            fmt(m.median_error),
            fmt(m.q3_error),
            m.mean_seconds
        ));
    }
    for r in &summary.reductions {
        if r.percent > 0.0 {
            out.push_str(&format!(
                "median error of {} is {:.1}% lower than {}\n",
                r.method, r.percent, r.baseline
            ));
        }
    }
    out
}
