//! CSV report writing. Floats are formatted with the shortest
//! round-trip representation, so every aggregate is exactly
//! recomputable from the files it was derived from.

use std::path::Path;

use probpit::error::Result;
use probpit::metrics::KdeCurve;

use crate::corpus::write_atomic;

/// Formats one CSV cell.
pub fn cell(v: f64) -> String {
    format!("{v}")
}

/// Writes rows under a header, atomically.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Two-column grid/density CSV for a KDE curve.
pub fn write_kde_csv(path: &Path, curve: &KdeCurve) -> Result<()> {
    let rows: Vec<String> = curve
        .grid
        .iter()
        .zip(&curve.density)
        .map(|(g, d)| format!("{},{}", cell(*g), cell(*d)))
        .collect();
    write_csv(path, "grid,density", &rows)
}

/// Linear-interpolated quantile of unsorted data (p in [0, 1]).
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
