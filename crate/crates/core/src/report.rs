//! Convergence tables and their CSV and markdown serialisations.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::GradingMode;

/// Which study a report belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Flux,
    Control,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Flux => "flux",
            Experiment::Control => "control",
        }
    }

    /// CSV header columns.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Experiment::Flux => &[
                "level",
                "h",
                "n_elem",
                "n_dof",
                "err_classical",
                "eoc_classical",
                "err_variational",
                "eoc_variational",
            ],
            Experiment::Control => &[
                "level",
                "h",
                "n_elem",
                "n_dof_total",
                "n_dof_boundary",
                "err_u",
                "eoc_u",
                "err_y",
                "eoc_y",
                "gmres_iters",
            ],
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flux" => Ok(Experiment::Flux),
            "control" => Ok(Experiment::Control),
            _ => Err(Error::InvalidParameter(format!("unknown experiment `{s}`"))),
        }
    }
}

/// One level of a convergence table. For flux studies the two error pairs
/// are (classical, variational); for control studies they are (u, y).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub level: u32,
    pub h: f64,
    pub n_elem: usize,
    pub n_dof: usize,
    pub n_dof_boundary: usize,
    pub err_a: Option<f64>,
    pub eoc_a: Option<f64>,
    pub err_b: Option<f64>,
    pub eoc_b: Option<f64>,
    pub gmres_iters: Option<usize>,
}

/// Per-level information that is not part of the table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelDiagnostics {
    pub level: u32,
    pub failure: Option<String>,
    pub seconds: f64,
    pub grading_violations: usize,
    pub conforming: bool,
    /// Relative defect of the flux compatibility identity.
    pub compatibility_defect: Option<f64>,
    /// Largest relative residual of the optimality system.
    pub optimality_residual: Option<f64>,
    pub gmres_residual: Option<f64>,
}

/// Run parameters recorded alongside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportMetadata {
    pub omega_degrees: f64,
    pub lambda_bar: f64,
    pub grading: GradingMode,
    pub alpha: Option<f64>,
    /// Seconds since the Unix epoch at the start of the run.
    pub started_unix: u64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub metadata: ReportMetadata,
    pub rows: Vec<LevelRow>,
    pub diagnostics: Vec<LevelDiagnostics>,
}

impl ExperimentReport {
    pub fn has_failures(&self) -> bool {
        self.diagnostics.iter().any(|d| d.failure.is_some())
    }

    /// Last row with both EOC columns present.
    pub fn finest_eoc(&self) -> Option<(f64, f64)> {
        self.rows.iter().rev().find_map(|r| Some((r.eoc_a?, r.eoc_b?)))
    }
}

/// `log(e_prev / e) / log(h_prev / h)`, which is `log₂(e_prev / e)` when `h` halves.
pub fn eoc(e_prev: f64, e: f64, h_prev: f64, h: f64) -> f64 {
    (e_prev / e).ln() / (h_prev / h).ln()
}

/// Fills the EOC columns from consecutive rows. A row following a failed
/// level gets no EOC.
pub fn fill_eocs(rows: &mut [LevelRow]) {
    for i in 0..rows.len() {
        if i == 0 {
            rows[i].eoc_a = None;
            rows[i].eoc_b = None;
            continue;
        }
        let (prev, cur) = (rows[i - 1].clone(), &mut rows[i]);
        let pair = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some(eoc(a, b, prev.h, cur.h)),
            _ => None,
        };
        cur.eoc_a = pair(prev.err_a, cur.err_a);
        cur.eoc_b = pair(prev.err_b, cur.err_b);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidParameter(format!("unknown report format `{s}`"))),
        }
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn fields(experiment: Experiment, r: &LevelRow) -> Vec<String> {
    let mut f = vec![
        r.level.to_string(),
        r.h.to_string(),
        r.n_elem.to_string(),
        r.n_dof.to_string(),
    ];
    if experiment == Experiment::Control {
        f.push(r.n_dof_boundary.to_string());
    }
    f.extend([opt(r.err_a), opt(r.eoc_a), opt(r.err_b), opt(r.eoc_b)]);
    if experiment == Experiment::Control {
        f.push(opt(r.gmres_iters));
    }
    f
}

/// Writes the table as CSV. Floats use the shortest exact representation.
pub fn write_csv<W: Write>(experiment: Experiment, rows: &[LevelRow], mut w: W) -> Result<()> {
    writeln!(w, "{}", experiment.columns().join(","))?;
    for r in rows {
        writeln!(w, "{}", fields(experiment, r).join(","))?;
    }
    Ok(())
}

fn sci(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3e}"))
}

fn fixed(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.2}"))
}

/// Writes the report as a markdown document with a metadata list and one table.
pub fn write_markdown<W: Write>(report: &ExperimentReport, mut w: W) -> Result<()> {
    let m = &report.metadata;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# {} study, omega = {} deg\n",
        report.experiment.name(),
        m.omega_degrees
    );
    let _ = writeln!(s, "- lambda_bar: {:.6}", m.lambda_bar);
    let _ = writeln!(s, "- grading: {}", m.grading.name());
    if let Some(a) = m.alpha {
        let _ = writeln!(s, "- alpha: {a}");
    }
    let _ = writeln!(s, "- started (unix): {}", m.started_unix);
    let _ = writeln!(s, "- wall time: {:.2} s\n", m.total_seconds);
    let cols = report.experiment.columns();
    let _ = writeln!(s, "| {} |", cols.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(cols.len()));
    for r in &report.rows {
        let mut f = vec![
            r.level.to_string(),
            format!("{:.3e}", r.h),
            r.n_elem.to_string(),
            r.n_dof.to_string(),
        ];
        if report.experiment == Experiment::Control {
            f.push(r.n_dof_boundary.to_string());
        }
        f.extend([sci(r.err_a), fixed(r.eoc_a), sci(r.err_b), fixed(r.eoc_b)]);
        if report.experiment == Experiment::Control {
            f.push(opt(r.gmres_iters));
        }
        let _ = writeln!(s, "| {} |", f.join(" | "));
    }
    let failures: Vec<_> = report
        .diagnostics
        .iter()
        .filter_map(|d| Some((d.level, d.failure.as_ref()?)))
        .collect();
    if !failures.is_empty() {
        let _ = writeln!(s, "\nFailed levels:\n");
        for (level, msg) in failures {
            let _ = writeln!(s, "- level {level}: {msg}");
        }
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Writes `report` in the requested format.
pub fn emit_report<W: Write>(report: &ExperimentReport, format: ReportFormat, w: W) -> Result<()> {
    match format {
        ReportFormat::Csv => write_csv(report.experiment, &report.rows, w),
        ReportFormat::Markdown => write_markdown(report, w),
    }
}

fn parse_field<T: FromStr>(s: &str, line: usize, name: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {name} `{s}`"),
    })
}

fn parse_opt<T: FromStr>(s: &str, line: usize, name: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(s, line, name).map(Some)
    }
}

/// Parses a CSV table written by [`write_csv`].
pub fn parse_csv<R: BufRead>(reader: R) -> Result<(Experiment, Vec<LevelRow>)> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })??;
    let experiment = [Experiment::Flux, Experiment::Control]
        .into_iter()
        .find(|e| e.columns().join(",") == header.trim_end())
        .ok_or(Error::Parse {
            line: 1,
            message: format!("unrecognised header `{header}`"),
        })?;
    let ncols = experiment.columns().len();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let n = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != ncols {
            return Err(Error::Parse {
                line: n,
                message: format!("expected {ncols} fields, found {}", f.len()),
            });
        }
        let control = experiment == Experiment::Control;
        let o = if control { 1 } else { 0 };
        rows.push(LevelRow {
            level: parse_field(f[0], n, "level")?,
            h: parse_field(f[1], n, "h")?,
            n_elem: parse_field(f[2], n, "n_elem")?,
            n_dof: parse_field(f[3], n, "n_dof")?,
            n_dof_boundary: if control {
                parse_field(f[4], n, "n_dof_boundary")?
            } else {
                0
            },
            err_a: parse_opt(f[4 + o], n, "error")?,
            eoc_a: parse_opt(f[5 + o], n, "eoc")?,
            err_b: parse_opt(f[6 + o], n, "error")?,
            eoc_b: parse_opt(f[7 + o], n, "eoc")?,
            gmres_iters: if control {
                parse_opt(f[9], n, "gmres_iters")?
            } else {
                None
            },
        });
    }
    Ok((experiment, rows))
}
