//! Convergence studies over a range of refinement levels.
//!
//! Level `N` uses the nominal mesh size `h = 2^-N`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::control::{control_errors, solve_control, ControlProblem};
use crate::domain::{Point, SectorDomain};
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_stiffness, PoissonSolver};
use crate::flux::{classical_flux, compatibility_defect, flux_error_l2, residual_scale, BoundaryMass};
use crate::manufactured::{ControlBenchmark, FluxBenchmark};
use crate::mesh::{GradingMode, GradingPolicy, Mesh};
use crate::quadrature::QuadratureScheme;
use crate::report::{fill_eocs, Experiment, ExperimentReport, LevelDiagnostics, LevelRow, ReportMetadata};
use crate::solver::{GmresConfig, SolverKind};

/// Default cap on the number of triangles of any mesh in a study.
pub const DEFAULT_MEMORY_GUARD: usize = 12_000_000;

/// Parameters of one convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub omega_degrees: f64,
    pub min_level: u32,
    pub max_level: u32,
    pub grading: GradingMode,
    pub alpha: f64,
    pub c_upper: f64,
    /// Largest admissible triangle count.
    pub memory_guard: usize,
    pub solver: SolverKind,
    pub gmres: GmresConfig,
    pub parallel_levels: bool,
    /// Mesh dump destination; one file per level.
    pub dump_mesh: Option<PathBuf>,
    /// Stiffness matrix dump destination; one file per level.
    pub dump_matrix: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, omega_degrees: f64, min_level: u32, max_level: u32) -> Self {
        Self {
            experiment,
            omega_degrees,
            min_level,
            max_level,
            grading: GradingMode::BoundaryConcentrated,
            alpha: 1.0,
            c_upper: 1.0,
            memory_guard: DEFAULT_MEMORY_GUARD,
            solver: SolverKind::default(),
            gmres: GmresConfig::default(),
            parallel_levels: false,
            dump_mesh: None,
            dump_matrix: None,
        }
    }

    pub fn with_grading(mut self, grading: GradingMode) -> Self {
        self.grading = grading;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<SectorDomain> {
        if self.min_level > self.max_level {
            return Err(Error::InvalidParameter(format!(
                "empty level range {}..{}",
                self.min_level, self.max_level
            )));
        }
        if self.max_level > 14 {
            return Err(Error::InvalidParameter(format!(
                "level {} is beyond any memory guard",
                self.max_level
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.c_upper > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "c_upper must be positive, got {}",
                self.c_upper
            )));
        }
        SectorDomain::from_degrees(self.omega_degrees)
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.min_level..=self.max_level
    }

    pub fn policy(&self, level: u32) -> Result<GradingPolicy> {
        Ok(GradingPolicy::new(self.grading, level_h(level))?
            .with_c_upper(self.c_upper)
            .with_max_elements(self.memory_guard))
    }
}

/// `h = 2^-level`.
pub fn level_h(level: u32) -> f64 {
    (-(level as f64)).exp2()
}

/// Mesh of `domain` at refinement `level` under `config`'s grading.
pub fn build_mesh(domain: &SectorDomain, config: &ExperimentConfig, level: u32) -> Result<Mesh> {
    Mesh::initial(domain)?.refine_graded(&config.policy(level)?)
}

/// `path` for a single-level run, otherwise `stem.L<level>.ext`.
pub fn level_path(path: &Path, level: u32, single: bool) -> PathBuf {
    if single {
        return path.to_path_buf();
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.L{level}.{}", ext.to_string_lossy()),
        None => format!("{stem}.L{level}"),
    };
    path.with_file_name(name)
}

fn write_dumps(config: &ExperimentConfig, level: u32, mesh: &Mesh) -> Result<()> {
    let single = config.min_level == config.max_level;
    if let Some(p) = &config.dump_mesh {
        mesh.write_dump(BufWriter::new(File::create(level_path(p, level, single))?))?;
    }
    if let Some(p) = &config.dump_matrix {
        assemble_stiffness(mesh)?.write_triplets(BufWriter::new(File::create(level_path(p, level, single))?))?;
    }
    Ok(())
}

fn base_row(level: u32, mesh: &Mesh) -> LevelRow {
    LevelRow {
        level,
        h: level_h(level),
        n_elem: mesh.n_triangles(),
        n_dof: mesh.n_vertices(),
        n_dof_boundary: mesh.n_boundary_vertices(),
        err_a: None,
        eoc_a: None,
        err_b: None,
        eoc_b: None,
        gmres_iters: None,
    }
}

fn failed_row(level: u32) -> LevelRow {
    LevelRow {
        level,
        h: level_h(level),
        n_elem: 0,
        n_dof: 0,
        n_dof_boundary: 0,
        err_a: None,
        eoc_a: None,
        err_b: None,
        eoc_b: None,
        gmres_iters: None,
    }
}

/// Flux errors on one level.
pub fn run_flux_level(
    config: &ExperimentConfig,
    bench: &FluxBenchmark,
    level: u32,
) -> Result<(LevelRow, LevelDiagnostics)> {
    let start = Instant::now();
    let mesh = build_mesh(bench.domain(), config, level)?;
    write_dumps(config, level, &mesh)?;
    // Mesh checks run before the solver allocations to keep the peak low.
    let grading_violations = mesh.grading_stats(&config.policy(level)?).violations;
    let conforming = mesh.is_conforming();
    let quad = QuadratureScheme::standard();
    let load = assemble_load(&mesh, |p| bench.f_rhs(p), &quad)?;
    let poisson = PoissonSolver::new(&mesh, config.solver)?;
    let u = poisson.solve(&load, &vec![0.0; mesh.n_boundary_vertices()])?;
    let exact = |p: Point, n: [f64; 2]| bench.flux_exact(p, n);

    let classical = classical_flux(&mesh, &u);
    let err_classical = flux_error_l2(&mesh, &classical, exact)?;

    let au = poisson.stiffness().mul_vec(u.coefficients());
    let scale = residual_scale(&au, &load);
    let residual: Vec<f64> = au.iter().zip(&load).map(|(a, b)| a - b).collect();
    let variational = BoundaryMass::new(&mesh)?.flux_from_residual(&mesh, &residual, scale)?;
    let err_variational = flux_error_l2(&mesh, &variational, exact)?;

    let mut row = base_row(level, &mesh);
    row.err_a = Some(err_classical);
    row.err_b = Some(err_variational);
    let diag = LevelDiagnostics {
        level,
        failure: None,
        seconds: start.elapsed().as_secs_f64(),
        grading_violations,
        conforming,
        compatibility_defect: Some(compatibility_defect(&mesh, &variational, &load)),
        optimality_residual: None,
        gmres_residual: None,
    };
    Ok((row, diag))
}

/// Control and state errors on one level.
pub fn run_control_level(
    config: &ExperimentConfig,
    bench: &ControlBenchmark,
    level: u32,
) -> Result<(LevelRow, LevelDiagnostics)> {
    let start = Instant::now();
    let mesh = build_mesh(bench.domain(), config, level)?;
    write_dumps(config, level, &mesh)?;
    // Mesh checks run before the solver allocations to keep the peak low.
    let grading_violations = mesh.grading_stats(&config.policy(level)?).violations;
    let conforming = mesh.is_conforming();
    let f = |p: Point| bench.f_state(p);
    let yd = |p: Point| bench.y_desired(p);
    let mut problem = ControlProblem::new(&mesh, bench.alpha(), &f, &yd)?;
    problem.solver = config.solver;
    problem.gmres = config.gmres;
    let sol = solve_control(&problem)?;
    let (err_u, err_y) = control_errors(&mesh, &sol, bench)?;
    let s = &sol.krylov_stats;

    let mut row = base_row(level, &mesh);
    row.err_a = Some(err_u);
    row.err_b = Some(err_y);
    row.gmres_iters = Some(s.iterations);
    let diag = LevelDiagnostics {
        level,
        failure: None,
        seconds: start.elapsed().as_secs_f64(),
        grading_violations,
        conforming,
        compatibility_defect: None,
        optimality_residual: Some(s.state_residual.max(s.adjoint_residual).max(s.optimality_residual)),
        gmres_residual: Some(s.residual),
    };
    Ok((row, diag))
}

fn collect(
    config: &ExperimentConfig,
    run: impl Fn(u32) -> Result<(LevelRow, LevelDiagnostics)> + Sync,
) -> Vec<(LevelRow, LevelDiagnostics)> {
    let finish = |level: u32, r: Result<(LevelRow, LevelDiagnostics)>| {
        r.unwrap_or_else(|e| {
            (
                failed_row(level),
                LevelDiagnostics {
                    level,
                    failure: Some(e.to_string()),
                    ..Default::default()
                },
            )
        })
    };
    if config.parallel_levels {
        std::thread::scope(|scope| {
            let handles: Vec<_> = config
                .levels()
                .map(|level| {
                    let run = &run;
                    (level, scope.spawn(move || run(level)))
                })
                .collect();
            handles
                .into_iter()
                .map(|(level, h)| {
                    let r = h
                        .join()
                        .unwrap_or_else(|_| Err(Error::InvalidParameter(format!("level {level} panicked"))));
                    finish(level, r)
                })
                .collect()
        })
    } else {
        config.levels().map(|level| finish(level, run(level))).collect()
    }
}

fn assemble_report(
    config: &ExperimentConfig,
    domain: &SectorDomain,
    results: Vec<(LevelRow, LevelDiagnostics)>,
    start: Instant,
    started_unix: u64,
) -> ExperimentReport {
    let (mut rows, diagnostics): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    fill_eocs(&mut rows);
    ExperimentReport {
        experiment: config.experiment,
        metadata: ReportMetadata {
            omega_degrees: config.omega_degrees,
            lambda_bar: domain.lambda_bar(),
            grading: config.grading,
            alpha: (config.experiment == Experiment::Control).then_some(config.alpha),
            started_unix,
            total_seconds: start.elapsed().as_secs_f64(),
        },
        rows,
        diagnostics,
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Flux study: classical and variational flux errors per level.
pub fn run_flux_study(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.experiment != Experiment::Flux {
        return Err(Error::InvalidParameter("configuration is not a flux study".into()));
    }
    let domain = config.validate()?;
    let (start, unix) = (Instant::now(), unix_now());
    let bench = FluxBenchmark::new(domain.clone());
    let results = collect(config, |level| run_flux_level(config, &bench, level));
    Ok(assemble_report(config, &domain, results, start, unix))
}

/// Control study: control and state errors per level.
pub fn run_control_study(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.experiment != Experiment::Control {
        return Err(Error::InvalidParameter("configuration is not a control study".into()));
    }
    let domain = config.validate()?;
    let (start, unix) = (Instant::now(), unix_now());
    let bench = ControlBenchmark::new(domain.clone(), config.alpha)?;
    let results = collect(config, |level| run_control_level(config, &bench, level));
    Ok(assemble_report(config, &domain, results, start, unix))
}

/// Runs the study selected by `config.experiment`.
pub fn run_study(config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.experiment {
        Experiment::Flux => run_flux_study(config),
        Experiment::Control => run_control_study(config),
    }
}
