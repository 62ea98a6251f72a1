//! File formats shared by the library and the command line: headerless
//! CSV for sample matrices and first rows, two-column CSV for density
//! samples, JSON for provenance records and simulation scenarios.
//!
//! Numbers are written with the shortest representation that parses back
//! to the identical bits, so every format round-trips exactly.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::SpectralDensityEstimate;
use crate::simulation::{McReport, ScenarioSpec};
use crate::SampleMatrix;

fn parse_field(text: &str, line: usize, field: usize) -> Result<f64> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::Parse {
            line,
            field,
            reason: "empty field".into(),
        });
    }
    trimmed.parse::<f64>().map_err(|e| Error::Parse {
        line,
        field,
        reason: format!("{e}: {trimmed:?}"),
    })
}

/// Reads a headerless CSV of decimals, one sample per row, into an n x p
/// matrix. Blank lines are ignored; every remaining line must have the
/// same number of comma-separated fields. Line and field numbers in
/// errors are 1-based.
pub fn read_sample_matrix(path: impl AsRef<Path>) -> Result<SampleMatrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(width);
        for (j, cell) in raw.split(',').enumerate() {
            row.push(parse_field(cell, i + 1, j + 1)?);
        }
        if rows.is_empty() {
            width = row.len();
        } else if row.len() != width {
            return Err(Error::Parse {
                line: i + 1,
                field: row.len(),
                reason: format!("expected {width} fields, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::DegenerateData("input CSV holds no rows".into()));
    }
    let (n, p) = (rows.len(), width);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    SampleMatrix::from_shape_vec((n, p), flat).map_err(|e| Error::InvalidArgument {
        name: "csv",
        reason: e.to_string(),
    })
}

/// Writes a sample matrix as headerless CSV, one row per line.
pub fn write_sample_matrix(path: impl AsRef<Path>, y: &SampleMatrix) -> Result<()> {
    let mut out = String::new();
    for row in y.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a Toeplitz first row as a single CSV line.
pub fn write_first_row(path: impl AsRef<Path>, row: &[f64]) -> Result<()> {
    let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
    fs::write(path, format!("{}\n", line.join(",")))?;
    Ok(())
}

/// Reads a Toeplitz first row written by `write_first_row`.
pub fn read_first_row(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let y = read_sample_matrix(path)?;
    if y.dim().0 != 1 {
        return Err(Error::Parse {
            line: 2,
            field: 1,
            reason: format!("expected a single CSV line, found {} rows", y.dim().0),
        });
    }
    Ok(y.row(0).to_vec())
}

/// Writes density samples as two-column CSV `omega,value` with omega on a
/// uniform grid over [0, pi], endpoints included.
pub fn write_density_csv(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument {
            name: "samples",
            reason: "need at least two density samples".into(),
        });
    }
    let g = samples.len() - 1;
    let mut out = String::new();
    for (i, v) in samples.iter().enumerate() {
        out.push_str(&format!("{},{v}\n", PI * i as f64 / g as f64));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes QQ pairs as two-column CSV `theoretical,empirical`.
pub fn write_qq_csv(path: impl AsRef<Path>, pairs: &[(f64, f64)]) -> Result<()> {
    let mut out = String::new();
    for (theo, emp) in pairs {
        out.push_str(&format!("{theo},{emp}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// How an estimate was produced: enough to rerun the fit exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    /// Bins in the stabilized regression.
    pub t: usize,
    /// Energies aggregated per bin.
    pub m: usize,
    /// Penalty order of the spline.
    pub q: usize,
    pub selector: String,
    /// Bandwidth the selector settled on.
    pub h: f64,
    /// Effective degrees of freedom of the fit.
    pub edf: f64,
    /// Transform frequencies dropped because p is not a bin-count multiple.
    pub discarded: usize,
}

impl Provenance {
    pub fn of(est: &SpectralDensityEstimate) -> Self {
        Provenance {
            t: est.bins(),
            m: est.aggregation(),
            q: est.order(),
            selector: est.selector().to_string(),
            h: est.bandwidth(),
            edf: est.edf(),
            discarded: est.discarded(),
        }
    }
}

/// Writes the provenance record as pretty JSON.
pub fn write_provenance(path: impl AsRef<Path>, prov: &Provenance) -> Result<()> {
    let text = serde_json::to_string_pretty(prov).expect("provenance serialization cannot fail");
    fs::write(path, text)?;
    Ok(())
}

/// Loads a scenario description from JSON and validates it.
pub fn read_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path)?;
    let spec: ScenarioSpec =
        serde_json::from_str(&text).map_err(|e| Error::Scenario(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Writes a Monte Carlo report as pretty JSON.
pub fn write_report_json(path: impl AsRef<Path>, report: &McReport) -> Result<()> {
    fs::write(path, report.to_json())?;
    Ok(())
}

/// Writes the report's summary table as CSV.
pub fn write_report_csv(path: impl AsRef<Path>, report: &McReport) -> Result<()> {
    fs::write(path, report.to_csv())?;
    Ok(())
}
