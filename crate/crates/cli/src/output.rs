//! Atomic file output and CSV layouts for curve estimates.

use std::io::Write;
use std::path::{Path, PathBuf};

use ssanova::{CurveEstimate, RegionSet};

use crate::error::CliError;

/// Write `bytes` to `path` through a temporary file in the same directory,
/// renamed into place so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| CliError::io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Lowercase alphanumerics, everything else collapsed to `_`.
pub fn slug(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_owned()
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).map_err(|e| CliError::io(e.to_string()))?;
    for row in rows {
        wtr.write_record(&row).map_err(|e| CliError::io(e.to_string()))?;
    }
    wtr.into_inner().map_err(|e| CliError::io(e.to_string()))
}

fn stats_cells(c: &CurveEstimate, i: usize) -> [String; 4] {
    [c.value[i], c.se[i], c.lower[i], c.upper[i]].map(|v| v.to_string())
}

/// `grid_minute,value,se,lower,upper`, optionally led by one column of
/// labels per curve (e.g. the group level).
pub fn curves_csv(curves: &[(Vec<String>, &CurveEstimate)], label_columns: &[String]) -> Result<Vec<u8>, CliError> {
    let mut header = label_columns.to_vec();
    header.extend(["grid_minute", "value", "se", "lower", "upper"].map(String::from));
    let rows = curves.iter().flat_map(|(labels, c)| {
        (0..c.len()).map(move |i| {
            let mut row = labels.clone();
            row.push(c.grid[i].to_string());
            row.extend(stats_cells(c, i));
            row
        })
    });
    csv_bytes(&header, rows)
}

/// A nominal main effect: one row per level.
pub fn levels_csv(curve: &CurveEstimate, factor: &str) -> Result<Vec<u8>, CliError> {
    let header: Vec<String> = [factor, "value", "se", "lower", "upper"].map(String::from).to_vec();
    let labels = curve.labels.clone().unwrap_or_default();
    let rows = (0..curve.len()).map(|i| {
        let mut row = vec![labels.get(i).cloned().unwrap_or_else(|| curve.grid[i].to_string())];
        row.extend(stats_cells(curve, i));
        row
    });
    csv_bytes(&header, rows)
}

pub fn regions_json(regions: &RegionSet) -> Result<Vec<u8>, CliError> {
    let mut text = serde_json::to_string_pretty(&regions.intervals)?;
    text.push('\n');
    Ok(text.into_bytes())
}
