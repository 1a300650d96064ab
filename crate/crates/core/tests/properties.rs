//! Invariants of meshing, assembly, fluxes, control and reporting.

mod common;

use common::ANGLES;
use fluxfem::control::{solve_control, ControlOperator};
use fluxfem::fem::{assemble_load, assemble_stiffness, galerkin_residual, l2_error, solve_dirichlet};
use fluxfem::report::{parse_csv, write_csv};
use fluxfem::study::build_mesh;
use fluxfem::{
    control_bench, flux_bench, run_flux_study, ControlProblem, CsrMatrix, Experiment, ExperimentConfig, FeFunction,
    GradingMode, GradingPolicy, LevelRow, Mesh, Point, PoissonSolver, QuadratureScheme, SectorDomain, SolverKind,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graded(omega: f64, level: u32) -> Mesh {
    let domain = SectorDomain::from_degrees(omega).unwrap();
    build_mesh(
        &domain,
        &ExperimentConfig::new(Experiment::Flux, omega, level, level),
        level,
    )
    .unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn angle() -> impl Strategy<Value = f64> {
    prop::sample::select(ANGLES.to_vec())
}

/// Extreme Ritz values of `k` Lanczos steps from a random start, with full
/// reorthogonalisation: (smallest, largest).
fn lanczos_extremes(a: &CsrMatrix, k: usize, seed: u64) -> (f64, f64) {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nq);
    let mut basis = vec![q];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for j in 0..k.min(n) {
        let mut w = a.mul_vec(&basis[j]);
        alpha.push(dot(&w, &basis[j]));
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nw = dot(&w, &w).sqrt();
        if nw < 1e-12 || j + 1 == k.min(n) {
            break;
        }
        beta.push(nw);
        basis.push(w.into_iter().map(|x| x / nw).collect());
    }
    // Eigenvalues of the tridiagonal matrix by bisection on Sturm counts.
    let m = alpha.len();
    let count_below = |x: f64| {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..m {
            let off = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
            d = alpha[i] - x - if i == 0 { 0.0 } else { off / d };
            if d == 0.0 {
                d = -1e-300;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let radius = alpha.iter().map(|a| a.abs()).sum::<f64>() + 2.0 * beta.iter().sum::<f64>();
    let eig = |idx: usize| {
        let (mut lo, mut hi) = (-radius, radius);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) > idx {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    (eig(0), eig(m - 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_bisection_keeps_conformity_and_area(omega in angle(), seed in any::<u64>(), rounds in 1usize..5) {
        let domain = SectorDomain::from_degrees(omega).unwrap();
        let mut mesh = Mesh::initial(&domain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..rounds {
            let marked: Vec<usize> = (0..mesh.n_triangles()).filter(|_| rng.gen_bool(0.4)).collect();
            let n = mesh.n_triangles();
            mesh = mesh.bisect(&marked).unwrap();
            prop_assert!(mesh.n_triangles() >= n + marked.len());
            prop_assert!(mesh.is_conforming());
            prop_assert!((mesh.total_area() - domain.area()).abs() <= 1e-12 * domain.area());
            prop_assert!((0..mesh.n_triangles()).all(|t| mesh.triangle_area(t) > 0.0));
        }
    }

    #[test]
    fn graded_meshes_satisfy_the_bound(omega in angle(), level in 1u32..5, c_upper in 0.5f64..4.0) {
        let domain = SectorDomain::from_degrees(omega).unwrap();
        let mut config = ExperimentConfig::new(Experiment::Flux, omega, level, level);
        config.c_upper = c_upper;
        let mesh = build_mesh(&domain, &config, level).unwrap();
        prop_assert!(mesh.is_conforming());
        prop_assert_eq!(mesh.grading_stats(&config.policy(level).unwrap()).violations, 0);
    }

    #[test]
    fn affine_data_is_reproduced(omega in angle(), a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let mesh = graded(omega, 2);
        let g = |p: Point| a + b * p[0] + c * p[1];
        let u = solve_dirichlet(&mesh, |_| 0.0, g).unwrap();
        for (v, p) in u.coefficients().iter().zip(mesh.vertices()) {
            prop_assert!((v - g(*p)).abs() <= 1e-11 * (1.0 + a.abs() + b.abs() + c.abs()));
        }
    }

    #[test]
    fn stiffness_is_positive_semidefinite(omega in angle(), seed in any::<u64>()) {
        let mesh = graded(omega, 2);
        let a = assemble_stiffness(&mesh).unwrap();
        let (lo, hi) = lanczos_extremes(&a, 20, seed);
        prop_assert!(hi > 0.0);
        prop_assert!(lo >= -1e-10 * hi, "smallest Ritz value {lo}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        prop_assert!(dot(&x, &a.mul_vec(&x)) >= -1e-12 * dot(&x, &x));
    }

    #[test]
    fn discrete_solution_minimises_energy(omega in angle(), seed in any::<u64>()) {
        let mesh = graded(omega, 2);
        let bench = flux_bench(omega.to_radians()).unwrap();
        let load = assemble_load(&mesh, |p| bench.f_rhs(p), &QuadratureScheme::standard()).unwrap();
        let solver = PoissonSolver::new(&mesh, SolverKind::SparseCholesky).unwrap();
        let u = solver.solve(&load, &vec![0.0; mesh.n_boundary_vertices()]).unwrap();
        let energy = |v: &[f64]| 0.5 * dot(v, &solver.stiffness().mul_vec(v)) - dot(&load, v);
        let e0 = energy(u.coefficients());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flags = mesh.boundary_vertex_flags();
        for _ in 0..5 {
            let eps = 10f64.powi(rng.gen_range(-4..0));
            let v: Vec<f64> = u
                .coefficients()
                .iter()
                .zip(flags)
                .map(|(c, &b)| if b { *c } else { c + eps * rng.gen_range(-1.0..1.0) })
                .collect();
            prop_assert!(energy(&v) >= e0 - 1e-14 * e0.abs().max(1.0));
        }
    }

    #[test]
    fn galerkin_orthogonality_holds(omega in angle()) {
        let mesh = graded(omega, 3);
        let bench = flux_bench(omega.to_radians()).unwrap();
        let load = assemble_load(&mesh, |p| bench.f_rhs(p), &QuadratureScheme::standard()).unwrap();
        let u = PoissonSolver::new(&mesh, SolverKind::SparseCholesky)
            .unwrap()
            .solve(&load, &vec![0.0; mesh.n_boundary_vertices()])
            .unwrap();
        prop_assert!(galerkin_residual(&mesh, &u, &load) <= 1e-10);
    }

    #[test]
    fn reduced_control_operator_is_linear(omega in angle(), s in -2.0f64..2.0, t in -2.0f64..2.0, seed in any::<u64>()) {
        let mesh = graded(omega, 2);
        let op = ControlOperator::new(&mesh, 0.7, SolverKind::SparseCholesky).unwrap();
        let nb = mesh.n_boundary_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..nb).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..nb).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let comb: Vec<f64> = u.iter().zip(&v).map(|(a, b)| s * a + t * b).collect();
        let lhs = op.apply_linear(&comb).unwrap();
        let (lu, lv) = (op.apply_linear(&u).unwrap(), op.apply_linear(&v).unwrap());
        let scale = lu.iter().chain(&lv).fold(0.0f64, |m, x| m.max(x.abs())) * (s.abs() + t.abs()).max(1.0);
        for i in 0..nb {
            prop_assert!((lhs[i] - (s * lu[i] + t * lv[i])).abs() <= 1e-10 * scale.max(1e-300));
        }
    }

    #[test]
    fn csv_round_trip(control in any::<bool>(), rows in prop::collection::vec(
        (0u32..15, 1usize..10_000_000, prop::option::of(1e-12f64..10.0), prop::option::of(-3.0f64..3.0), prop::option::of(1usize..200)),
        1..8,
    )) {
        let experiment = if control { Experiment::Control } else { Experiment::Flux };
        let rows: Vec<LevelRow> = rows
            .into_iter()
            .map(|(level, n, err, eoc, iters)| LevelRow {
                level,
                h: (-(level as f64)).exp2(),
                n_elem: n,
                n_dof: n / 2 + 1,
                // Flux tables carry no boundary-dof column.
                n_dof_boundary: if control { n / 100 + 3 } else { 0 },
                err_a: err,
                eoc_a: eoc,
                err_b: err.map(|e| e * 0.5),
                eoc_b: eoc.map(|e| -e),
                gmres_iters: if control { iters } else { None },
            })
            .collect();
        let mut buf = Vec::new();
        write_csv(experiment, &rows, &mut buf).unwrap();
        let (parsed_experiment, parsed) = parse_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(parsed_experiment, experiment);
        prop_assert_eq!(parsed, rows);
    }
}

#[test]
fn manufactured_solution_converges_in_l2_on_uniform_meshes() {
    // At 90° the manufactured solution is a polynomial, so the P1 L² error
    // decays like h² under uniform refinement.
    let omega = 90.0;
    let domain = SectorDomain::from_degrees(omega).unwrap();
    let bench = flux_bench(omega.to_radians()).unwrap();
    let quad = QuadratureScheme::error_norm();
    let mut errors = Vec::new();
    for level in 2..=5 {
        let policy = GradingPolicy::new(GradingMode::QuasiUniform, (-(level as f64)).exp2()).unwrap();
        let mesh = Mesh::initial(&domain).unwrap().refine_graded(&policy).unwrap();
        let u = solve_dirichlet(&mesh, |p| bench.f_rhs(p), |_| 0.0).unwrap();
        errors.push(l2_error(&mesh, &u, |p| bench.u_exact(p), &quad));
    }
    let finest = (errors[errors.len() - 2] / errors[errors.len() - 1]).log2();
    assert!((1.9..=2.1).contains(&finest), "L2 errors {errors:?}");
}

#[test]
fn convex_flux_study_converges_at_rate_two_and_is_deterministic() {
    let config = ExperimentConfig::new(Experiment::Flux, 90.0, 3, 5);
    let a = run_flux_study(&config).unwrap();
    let b = run_flux_study(&config).unwrap();
    assert_eq!(a.rows, b.rows);
    let (classical, variational) = a.finest_eoc().unwrap();
    assert!((1.85..=2.15).contains(&classical), "{:?}", a.rows);
    assert!((1.85..=2.15).contains(&variational), "{:?}", a.rows);
}

#[test]
fn element_count_follows_the_log_law() {
    for omega in [90.0, 270.0] {
        let scaled: Vec<f64> = (2..=6)
            .map(|level| {
                let h = (-(level as f64)).exp2();
                let mesh = graded(omega, level);
                mesh.n_triangles() as f64 * h * h / h.ln().abs()
            })
            .collect();
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min <= 4.0, "{omega}: {scaled:?}");
    }
}

#[test]
fn control_solution_satisfies_optimality_on_every_angle() {
    for omega in ANGLES {
        let mesh = graded(omega, 3);
        let bench = control_bench(omega.to_radians(), 1.0).unwrap();
        let f = |p: Point| bench.f_state(p);
        let yd = |p: Point| bench.y_desired(p);
        let problem = ControlProblem::new(&mesh, 1.0, &f, &yd).unwrap();
        let sol = solve_control(&problem).unwrap();
        let s = &sol.krylov_stats;
        assert!(
            s.state_residual <= 1e-9 && s.adjoint_residual <= 1e-9 && s.optimality_residual <= 1e-9,
            "{omega}: {s:?}"
        );
        // The state trace equals the control.
        let trace = sol.y_h.boundary_values(&mesh);
        for (a, b) in trace.iter().zip(sol.u_h.coefficients()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn interpolant_of_affine_function_has_exact_gradient() {
    let mesh = graded(225.0, 2);
    let u = FeFunction::interpolate(&mesh, |p| 2.0 * p[0] - 0.5 * p[1]);
    for t in 0..mesh.n_triangles() {
        let g = u.gradient(&mesh, t);
        assert!((g[0] - 2.0).abs() <= 1e-12 && (g[1] + 0.5).abs() <= 1e-12);
    }
}
