//! Report files, plot dumps and the run manifest.

use crate::config::{Format, RunConfig};
use plap_core::verifier::EstimateReport;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("PLAP_VERSION");

/// A report together with the inputs it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub series_id: String,
    /// Refinement levels of the solutions behind the report.
    pub grid_levels: Vec<u32>,
    /// Regularization parameters of the solutions behind the report.
    pub epsilons: Vec<f64>,
    pub report: EstimateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRecord {
    pub level: u32,
    pub epsilon: f64,
    pub nx: Vec<usize>,
    pub nt: usize,
    pub h: Vec<f64>,
    pub dt: f64,
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub version: &'a str,
    pub command: &'a str,
    pub status: &'a str,
    pub config: &'a RunConfig,
    pub grids: &'a [GridRecord],
    pub timings: &'a [Timing],
    pub reports: Vec<ReportIndex<'a>>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportIndex<'a> {
    pub series_id: &'a str,
    pub name: &'a str,
    pub pass: bool,
    pub grid_levels: &'a [u32],
    pub epsilons: &'a [f64],
}

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    series_id: &'a str,
    report: &'a str,
    comparison: String,
    lhs: f64,
    rhs: f64,
    margin: f64,
    tolerance: f64,
    pass: bool,
    p: Option<f64>,
    epsilon: Option<f64>,
    h: Option<f64>,
    dt: Option<f64>,
    cutoff: Option<&'a str>,
    level: Option<usize>,
    abscissa_name: Option<&'a str>,
    abscissa: Option<f64>,
    value: Option<f64>,
}

fn comparison_name(report: &EstimateReport) -> String {
    serde_json::to_value(report.comparison)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Writes the reports as one JSON array or as CSV with one row per
/// (report, level); reports without history get a single row.
pub fn write_reports<W: Write>(
    entries: &[Entry],
    format: Format,
    writer: W,
) -> Result<(), OutputError> {
    match format {
        Format::Json => {
            let reports: Vec<&EstimateReport> = entries.iter().map(|e| &e.report).collect();
            let mut w = writer;
            serde_json::to_writer_pretty(&mut w, &reports)?;
            w.write_all(b"\n").map_err(|source| OutputError::Io {
                path: PathBuf::from("<report stream>"),
                source,
            })?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            if entries.is_empty() {
                // header only
                w.write_record([
                    "series_id",
                    "report",
                    "comparison",
                    "lhs",
                    "rhs",
                    "margin",
                    "tolerance",
                    "pass",
                    "p",
                    "epsilon",
                    "h",
                    "dt",
                    "cutoff",
                    "level",
                    "abscissa_name",
                    "abscissa",
                    "value",
                ])?;
            }
            for e in entries {
                let r = &e.report;
                let base = CsvRow {
                    series_id: &e.series_id,
                    report: &r.name,
                    comparison: comparison_name(r),
                    lhs: r.lhs,
                    rhs: r.rhs,
                    margin: r.margin,
                    tolerance: r.tolerance,
                    pass: r.pass,
                    p: r.context.p,
                    epsilon: r.context.epsilon,
                    h: r.context.h,
                    dt: r.context.dt,
                    cutoff: r.context.cutoff.as_deref(),
                    level: None,
                    abscissa_name: None,
                    abscissa: None,
                    value: None,
                };
                if r.history.is_empty() {
                    w.serialize(&base)?;
                }
                for l in &r.history {
                    w.serialize(CsvRow {
                        comparison: base.comparison.clone(),
                        level: Some(l.level),
                        abscissa_name: Some(&l.abscissa_name),
                        abscissa: Some(l.abscissa),
                        value: Some(l.value),
                        ..base
                    })?;
                }
            }
            w.flush().map_err(|source| OutputError::Io {
                path: PathBuf::from("<report stream>"),
                source,
            })?;
        }
    }
    Ok(())
}

/// Two-column `abscissa value` dump of a report history, with the ratio to
/// the previous value as a third column.
pub fn plot_dump(report: &EstimateReport) -> Option<String> {
    if report.history.is_empty() {
        return None;
    }
    let name = &report.history[0].abscissa_name;
    let mut out = format!("# {} {name} value ratio\n", report.name);
    let mut prev: Option<f64> = None;
    for l in &report.history {
        let ratio = prev.map_or(f64::NAN, |p| p / l.value);
        out.push_str(&format!("{} {} {}\n", l.abscissa, l.value, ratio));
        prev = Some(l.value);
    }
    Some(out)
}

pub struct RunRecord<'a> {
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub entries: &'a [Entry],
    pub grids: &'a [GridRecord],
    pub timings: &'a [Timing],
    pub status: &'a str,
    /// Extra text files (name, contents) such as solution dumps.
    pub extra: &'a [(String, String)],
}

/// Writes `reports.{json,csv}`, one `.dat` per report history, any extra
/// files, and `manifest.json` into `dir`. Returns the written paths.
pub fn write_run(dir: &Path, format: Format, run: &RunRecord) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let ext = match format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    let path = dir.join(format!("reports.{ext}"));
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    write_reports(run.entries, format, std::io::BufWriter::new(file))?;
    written.push(path);

    for e in run.entries {
        if let Some(text) = plot_dump(&e.report) {
            let path = dir.join(format!("{}.dat", e.series_id));
            fs::write(&path, text).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    for (name, text) in run.extra {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
    }

    let manifest = Manifest {
        version: VERSION,
        command: run.command,
        status: run.status,
        config: run.config,
        grids: run.grids,
        timings: run.timings,
        reports: run
            .entries
            .iter()
            .map(|e| ReportIndex {
                series_id: &e.series_id,
                name: &e.report.name,
                pass: e.report.pass,
                grid_levels: &e.grid_levels,
                epsilons: &e.epsilons,
            })
            .collect(),
        files: written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}
