//! CSV and manifest writers. Numbers are printed at six significant digits
//! with a plain decimal point so files are byte-stable across platforms.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::engine::{CycleMean, Summary};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("row {row} has {got} fields, header has {expected}")]
    RowWidth { row: usize, got: usize, expected: usize },
}

/// Formats `v` with six significant digits, trailing zeros removed.
pub fn format_sig6(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = 5 - magnitude;
    let mut s = if decimals >= 0 {
        format!("{:.*}", decimals as usize, v)
    } else {
        let p = 10f64.powi(-decimals);
        format!("{:.0}", (v / p).round() * p)
    };
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Writes a header plus rows, LF-terminated.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), OutputError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| OutputError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    for (row, r) in rows.iter().enumerate() {
        if r.len() != header.len() {
            return Err(OutputError::RowWidth {
                row,
                got: r.len(),
                expected: header.len(),
            });
        }
    }
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const CYCLES_HEADER: [&str; 5] = ["cycle_index", "lte_mbps", "wlan_mbps", "spared_count", "gamma"];

pub fn cycle_rows(cycles: &[CycleMean]) -> Vec<Vec<String>> {
    cycles
        .iter()
        .map(|c| {
            vec![
                c.cycle_index.to_string(),
                format_sig6(c.lte_mbps),
                format_sig6(c.wlan_mbps),
                format_sig6(c.spared_count),
                format_sig6(c.gamma),
            ]
        })
        .collect()
}

pub fn write_cycles_csv(path: &Path, summary: &Summary) -> Result<(), OutputError> {
    write_csv(path, &CYCLES_HEADER, &cycle_rows(&summary.cycles))
}

pub const SUMMARY_HEADER: [&str; 6] = [
    "lambda_l",
    "run_kind",
    "mean_lte_mbps",
    "mean_wlan_mbps",
    "loss_lte_pct",
    "loss_wlan_pct",
];

/// Reproducibility sidecar written next to every experiment's CSVs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed_base: u64,
    pub drops: usize,
    pub duration_ms: u64,
    pub tool_version: String,
    pub files: Vec<String>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}
