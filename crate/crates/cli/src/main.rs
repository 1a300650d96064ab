//! Command-line driver for the flux and boundary control convergence studies.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fluxfem::report::emit_report;
use fluxfem::study::DEFAULT_MEMORY_GUARD;
use fluxfem::{Experiment, ExperimentConfig, GradingMode, ReportFormat, SolverKind};

#[derive(Parser, Debug)]
#[command(
    name = "fluxfem",
    version,
    about = "Convergence studies for boundary fluxes and Dirichlet boundary control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classical and variational flux errors on a sector domain.
    Flux(CommonArgs),
    /// Control and state errors of the boundary control benchmark.
    Control {
        #[command(flatten)]
        common: CommonArgs,
        /// Regularisation weight.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Grading {
    BoundaryConcentrated,
    QuasiUniform,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Solver {
    Cholesky,
    Cg,
    Dense,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Opening angle of the sector in degrees, in [90, 360).
    #[arg(long)]
    omega_degrees: f64,
    /// Inclusive level range `a..b` (h = 2^-level), or a single level.
    #[arg(long, value_parser = parse_levels)]
    levels: (u32, u32),
    #[arg(long, value_enum, default_value = "boundary-concentrated")]
    grading: Grading,
    /// Report destination.
    #[arg(long)]
    output: PathBuf,
    /// Report format; defaults to markdown for `.md` outputs and CSV otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write each level's mesh to this path (suffixed per level).
    #[arg(long)]
    dump_mesh: Option<PathBuf>,
    /// Write each level's stiffness matrix as `i j value` triplets.
    #[arg(long)]
    dump_matrix: Option<PathBuf>,
    /// Run the levels concurrently.
    #[arg(long)]
    parallel_levels: bool,
    #[arg(long, value_enum, default_value = "cholesky")]
    solver: Solver,
    /// Constant of the grading bound.
    #[arg(long, default_value_t = 1.0)]
    c_upper: f64,
    /// Largest admissible triangle count.
    #[arg(long, default_value_t = DEFAULT_MEMORY_GUARD)]
    memory_guard: usize,
    /// Suppress the table on standard output.
    #[arg(long)]
    quiet: bool,
}

fn parse_levels(s: &str) -> std::result::Result<(u32, u32), String> {
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("invalid level `{t}`"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let l = parse(s)?;
            (l, l)
        }
    };
    if a > b {
        return Err(format!("empty level range `{s}`"));
    }
    Ok((a, b))
}

fn config(experiment: Experiment, args: &CommonArgs, alpha: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(experiment, args.omega_degrees, args.levels.0, args.levels.1).with_alpha(alpha);
    c.grading = match args.grading {
        Grading::BoundaryConcentrated => GradingMode::BoundaryConcentrated,
        Grading::QuasiUniform => GradingMode::QuasiUniform,
    };
    c.solver = match args.solver {
        Solver::Cholesky => SolverKind::SparseCholesky,
        Solver::Cg => SolverKind::ConjugateGradient,
        Solver::Dense => SolverKind::Dense,
    };
    c.c_upper = args.c_upper;
    c.memory_guard = args.memory_guard;
    c.parallel_levels = args.parallel_levels;
    c.dump_mesh = args.dump_mesh.clone();
    c.dump_matrix = args.dump_matrix.clone();
    c
}

fn format_for(path: &Path, requested: Option<Format>) -> ReportFormat {
    match requested {
        Some(Format::Csv) => ReportFormat::Csv,
        Some(Format::Markdown) => ReportFormat::Markdown,
        None if path.extension().is_some_and(|e| e == "md") => ReportFormat::Markdown,
        None => ReportFormat::Csv,
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (experiment, args, alpha) = match &cli.command {
        Command::Flux(args) => (Experiment::Flux, args, 1.0),
        Command::Control { common, alpha } => (Experiment::Control, common, *alpha),
    };
    if alpha.is_nan() || alpha <= 0.0 {
        bail!("--alpha must be positive");
    }
    let cfg = config(experiment, args, alpha);
    cfg.validate().context("invalid configuration")?;
    let report = fluxfem::run_study(&cfg)?;

    let file = File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    emit_report(&report, format_for(&args.output, args.format), BufWriter::new(file))?;
    if !args.quiet {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        emit_report(&report, ReportFormat::Markdown, &mut lock)?;
        lock.flush()?;
    }
    for d in &report.diagnostics {
        if let Some(msg) = &d.failure {
            eprintln!("level {} failed: {msg}", d.level);
        }
    }
    Ok(!report.has_failures())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
