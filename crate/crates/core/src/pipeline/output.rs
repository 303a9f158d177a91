//! Files written by a run. Floats are printed with 17 significant digits so
//! they parse back bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::config::{Format, RunConfig};
use super::sweep::{SweepRow, SweepTable};
use crate::bounds::BoundsReport;
use crate::eigensolve::FieldSamples;

pub const EIGENCURVES_HEADER: [&str; 4] = ["epsilon", "index", "E", "residual"];
pub const BOUNDS_HEADER: [&str; 8] =
    ["epsilon", "i_plus", "i_minus", "g_plus", "g_minus", "h", "threshold_plus", "threshold_minus"];
pub const FIELD_HEADER: [&str; 3] = ["x", "y", "abs_psi"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes `header` and `records` as CSV with `\n` line endings.
pub fn write_records<W, I>(out: W, header: &[&str], records: I) -> csv::Result<()>
where
    W: std::io::Write,
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv<I>(path: &Path, header: &[&str], records: I) -> Result<(), OutputError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = fs::File::create(path).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })?;
    write_records(std::io::BufWriter::new(file), header, records)
        .map_err(|source| OutputError::Csv { path: path.to_path_buf(), source })
}

pub fn eigencurve_records(rows: &[SweepRow]) -> impl Iterator<Item = Vec<String>> + '_ {
    rows.iter().map(|r| vec![fmt_f64(r.epsilon), r.index.to_string(), fmt_f64(r.energy), fmt_f64(r.residual)])
}

pub fn bounds_records(reports: &[BoundsReport]) -> impl Iterator<Item = Vec<String>> + '_ {
    reports.iter().map(|b| {
        vec![
            fmt_f64(b.epsilon),
            fmt_f64(b.i_plus),
            fmt_f64(b.i_minus),
            fmt_opt(b.g_plus),
            fmt_opt(b.g_minus),
            fmt_opt(b.envelope_h),
            fmt_opt(b.threshold_plus),
            fmt_opt(b.threshold_minus),
        ]
    })
}

pub fn write_eigencurves(path: &Path, rows: &[SweepRow]) -> Result<(), OutputError> {
    write_csv(path, &EIGENCURVES_HEADER, eigencurve_records(rows))
}

pub fn write_bounds(path: &Path, reports: &[BoundsReport]) -> Result<(), OutputError> {
    write_csv(path, &BOUNDS_HEADER, bounds_records(reports))
}

pub fn write_field(path: &Path, samples: &FieldSamples) -> Result<(), OutputError> {
    write_csv(
        path,
        &FIELD_HEADER,
        samples.points.iter().zip(&samples.values).map(|(p, v)| vec![fmt_f64(p.x), fmt_f64(p.y), fmt_f64(*v)]),
    )
}

fn read_records(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, OutputError> {
    let err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    if r.headers().map_err(err)?.iter().ne(header.iter().copied()) {
        return Err(OutputError::Parse { path: path.to_path_buf(), message: "unexpected header".into() });
    }
    r.records().collect::<Result<_, _>>().map_err(err)
}

fn parse_cell<T: std::str::FromStr>(path: &Path, cell: &str) -> Result<T, OutputError> {
    cell.parse().map_err(|_| OutputError::Parse { path: path.to_path_buf(), message: format!("bad value `{cell}`") })
}

pub fn read_eigencurves(path: &Path) -> Result<Vec<SweepRow>, OutputError> {
    read_records(path, &EIGENCURVES_HEADER)?
        .iter()
        .map(|r| {
            Ok(SweepRow {
                epsilon: parse_cell(path, &r[0])?,
                index: parse_cell(path, &r[1])?,
                energy: parse_cell(path, &r[2])?,
                residual: parse_cell(path, &r[3])?,
            })
        })
        .collect()
}

/// Rows of `bounds.csv` with empty cells as `None`.
pub fn read_bounds(path: &Path) -> Result<Vec<[Option<f64>; 8]>, OutputError> {
    read_records(path, &BOUNDS_HEADER)?
        .iter()
        .map(|r| {
            let mut row = [None; 8];
            for (k, cell) in r.iter().enumerate().take(8) {
                if !cell.is_empty() {
                    row[k] = Some(parse_cell(path, cell)?);
                }
            }
            Ok(row)
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    fs::write(path, text).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    provenance: &'a super::sweep::Provenance,
    failures: &'a [super::sweep::SweepFailure],
    files: Vec<String>,
}

pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Eigencurves E(eps) in blue with the envelopes +-h(eps) in red."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent


def read(name):
    with open(here / name, newline="") as f:
        return list(csv.DictReader(f))


curves = read("eigencurves.csv")
bounds = read("bounds.csv")

fig, ax = plt.subplots(figsize=(6, 4))
ax.plot([float(r["epsilon"]) for r in curves], [float(r["E"]) for r in curves], "o", color="tab:blue", ms=3)
env = [(float(r["epsilon"]), float(r["h"])) for r in bounds if r["h"]]
if env:
    eps, h = zip(*env)
    ax.plot(eps, h, "-", color="tab:red")
    ax.plot(eps, [-v for v in h], "-", color="tab:red")
ax.set_xlabel("epsilon")
ax.set_ylabel("E")
fig.tight_layout()
fig.savefig(here / "eigencurves.png", dpi=150)
"#;

/// Writes the sweep into `dir` and returns the paths written.
pub fn write_outputs(table: &SweepTable, config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
    let mut files = Vec::new();
    if config.output.formats.contains(&Format::Csv) {
        let p = dir.join("eigencurves.csv");
        write_eigencurves(&p, &table.rows)?;
        files.push(p);
        let p = dir.join("bounds.csv");
        write_bounds(&p, &table.bounds)?;
        files.push(p);
        let p = dir.join("plot_eigencurves.py");
        write_text(&p, PLOT_SCRIPT)?;
        files.push(p);
    }
    if config.output.formats.contains(&Format::Json) {
        let p = dir.join("sweep.json");
        write_text(&p, &serde_json::to_string_pretty(table).expect("table serializes"))?;
        files.push(p);
    }
    let manifest_path = dir.join("manifest.json");
    let manifest = Manifest {
        config,
        provenance: &table.provenance,
        failures: &table.failures,
        files: files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
    };
    write_text(&manifest_path, &serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    files.push(manifest_path);
    Ok(files)
}
