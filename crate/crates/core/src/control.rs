//! Dirichlet boundary control with `L²(Γ)` regularisation.
//!
//! The discrete optimality system couples the state `y_h` (with trace `u_h`),
//! the adjoint `p_h ∈ V_0h` and the control through `α u_h = ∂ₙʰp_h`. It is
//! reduced to the boundary unknowns and solved by restarted GMRES. One
//! operator application costs two Poisson solves with a cached factorisation.

use crate::domain::Point;
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_mass, assemble_stiffness, l2_error, FeFunction, PoissonSolver};
use crate::flux::{flux_error_l2, interior_defect, residual_scale, BoundaryFunction, BoundaryMass, INTERIOR_TOL};
use crate::manufactured::ControlBenchmark;
use crate::mesh::Mesh;
use crate::quadrature::QuadratureScheme;
use crate::solver::{gmres, GmresConfig, SolverKind};
use crate::sparse::{norm2, CsrMatrix};

/// Required relative residual of every equation of the optimality system.
pub const OPTIMALITY_TOL: f64 = 1e-9;

/// A scalar field usable from several threads.
pub type Field<'a> = &'a (dyn Fn(Point) -> f64 + Sync);

/// Data of one discrete control problem.
#[derive(Clone)]
pub struct ControlProblem<'a> {
    pub mesh: &'a Mesh,
    pub alpha: f64,
    pub f_state: Field<'a>,
    pub y_desired: Field<'a>,
    pub quad: QuadratureScheme,
    pub solver: SolverKind,
    pub gmres: GmresConfig,
}

impl<'a> ControlProblem<'a> {
    pub fn new(mesh: &'a Mesh, alpha: f64, f_state: Field<'a>, y_desired: Field<'a>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            mesh,
            alpha,
            f_state,
            y_desired,
            quad: QuadratureScheme::standard(),
            solver: SolverKind::default(),
            gmres: GmresConfig::default(),
        })
    }
}

impl std::fmt::Debug for ControlProblem<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("alpha", &self.alpha)
            .field("n_vertices", &self.mesh.n_vertices())
            .field("solver", &self.solver)
            .field("gmres", &self.gmres)
            .finish_non_exhaustive()
    }
}

/// Krylov statistics and residuals of the returned optimality triple.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
    /// Interior residual of the state equation.
    pub state_residual: f64,
    /// Interior residual of the adjoint equation.
    pub adjoint_residual: f64,
    /// `‖α M_Γ u_h - M_Γ ∂ₙʰp_h‖ / ‖M_Γ ∂ₙʰp_h‖`.
    pub optimality_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    pub u_h: BoundaryFunction,
    pub y_h: FeFunction,
    pub p_h: FeFunction,
    /// Adjoint variational flux `∂ₙʰp_h`.
    pub adjoint_flux: BoundaryFunction,
    pub krylov_stats: KrylovStats,
}

/// Factorised operators of one mesh, shared by all applications of the
/// reduced control map.
#[derive(Debug)]
pub struct ControlOperator<'m> {
    mesh: &'m Mesh,
    alpha: f64,
    poisson: PoissonSolver<'m>,
    mass: CsrMatrix,
    boundary_mass: BoundaryMass,
}

impl<'m> ControlOperator<'m> {
    pub fn new(mesh: &'m Mesh, alpha: f64, kind: SolverKind) -> Result<Self> {
        let poisson = PoissonSolver::with_stiffness(mesh, assemble_stiffness(mesh)?, kind)?;
        Ok(Self {
            mesh,
            alpha,
            poisson,
            mass: assemble_mass(mesh)?,
            boundary_mass: BoundaryMass::new(mesh)?,
        })
    }

    pub fn boundary_mass(&self) -> &BoundaryMass {
        &self.boundary_mass
    }

    pub fn poisson(&self) -> &PoissonSolver<'m> {
        &self.poisson
    }

    /// State for boundary values `u` and state load `load_f`.
    fn state(&self, u: &[f64], load_f: &[f64]) -> Result<FeFunction> {
        self.poisson.solve(load_f, u)
    }

    /// Load `(y_h - y_d, φ_i)` of the adjoint equation.
    fn adjoint_load(&self, y: &FeFunction, load_yd: Option<&[f64]>) -> Vec<f64> {
        let mut l = self.mass.mul_vec(y.coefficients());
        if let Some(ld) = load_yd {
            l.iter_mut().zip(ld).for_each(|(a, b)| *a -= b);
        }
        l
    }

    /// Adjoint state and the full residual `A p - (y - y_d, φ)`.
    fn adjoint(&self, load: &[f64]) -> Result<(FeFunction, Vec<f64>)> {
        let zero = vec![0.0; self.mesh.n_boundary_vertices()];
        let p = self.poisson.solve(load, &zero)?;
        let r = self.poisson.residual(&p, load);
        Ok((p, r))
    }

    fn boundary_rows(&self, r: &[f64]) -> Vec<f64> {
        self.mesh.boundary_vertices().iter().map(|&v| r[v]).collect()
    }

    /// Linear part of the reduced map, `u ↦ α M_Γ u - [A p - M y]_B` with
    /// `y` the discrete harmonic extension of `u`.
    pub fn apply_linear(&self, u: &[f64]) -> Result<Vec<f64>> {
        let zero_load = vec![0.0; self.mesh.n_vertices()];
        let y = self.state(u, &zero_load)?;
        let (_, r) = self.adjoint(&self.adjoint_load(&y, None))?;
        let rb = self.boundary_rows(&r);
        let mu = self.boundary_mass.apply(u);
        Ok(mu.iter().zip(&rb).map(|(m, r)| self.alpha * m - r).collect())
    }

    /// `M_Γ⁻¹` applied to [`Self::apply_linear`], i.e. `u ↦ α u - ∂ₙʰp_h(u)`.
    pub fn apply_preconditioned(&self, u: &[f64]) -> Result<Vec<f64>> {
        let lin = self.apply_linear(u)?;
        self.boundary_mass.solve(&lin)
    }
}

/// Discrete harmonic extension of `g` for the source `f`: the Galerkin
/// solution with trace `g`.
pub fn discrete_harmonic_extension(mesh: &Mesh, g: &BoundaryFunction, f: impl Fn(Point) -> f64) -> Result<FeFunction> {
    let load = assemble_load(mesh, f, &QuadratureScheme::standard())?;
    PoissonSolver::new(mesh, SolverKind::default())?.solve(&load, g.coefficients())
}

/// `L²(Γ)` projection of `v(x, n)` onto the trace space.
pub fn l2_boundary_projection(mesh: &Mesh, v: impl Fn(Point, [f64; 2]) -> f64) -> Result<BoundaryFunction> {
    BoundaryMass::new(mesh)?.project(mesh, v)
}

/// Adjoint variational flux defined by
/// `(∂ₙʰp_h, v_h)_Γ = (∇v_h, ∇p_h) - (y_h - y_d, v_h)` for all `v_h ∈ V_h`.
pub fn adjoint_flux(
    mesh: &Mesh,
    p_h: &FeFunction,
    y_h: &FeFunction,
    y_desired: impl Fn(Point) -> f64,
) -> Result<BoundaryFunction> {
    let mut load = assemble_mass(mesh)?.mul_vec(y_h.coefficients());
    let ld = assemble_load(mesh, y_desired, &QuadratureScheme::standard())?;
    load.iter_mut().zip(&ld).for_each(|(a, b)| *a -= b);
    let ap = assemble_stiffness(mesh)?.mul_vec(p_h.coefficients());
    let scale = residual_scale(&ap, &load);
    let r: Vec<f64> = ap.iter().zip(&load).map(|(a, b)| a - b).collect();
    BoundaryMass::new(mesh)?.flux_from_residual(mesh, &r, scale)
}

fn relative(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Solves the discrete optimality system.
pub fn solve_control(problem: &ControlProblem<'_>) -> Result<ControlSolution> {
    let op = ControlOperator::new(problem.mesh, problem.alpha, problem.solver)?;
    solve_with_operator(problem, &op)
}

/// Solves the optimality system with a prepared operator.
pub fn solve_with_operator(problem: &ControlProblem<'_>, op: &ControlOperator<'_>) -> Result<ControlSolution> {
    let mesh = problem.mesh;
    let nb = mesh.n_boundary_vertices();
    let load_f = assemble_load(mesh, problem.f_state, &problem.quad)?;
    let load_yd = assemble_load(mesh, problem.y_desired, &problem.quad)?;

    // Affine part: the reduced map at u = 0.
    let zero = vec![0.0; nb];
    let y0 = op.state(&zero, &load_f)?;
    let (_, r0) = op.adjoint(&op.adjoint_load(&y0, Some(&load_yd)))?;
    let rhs = op.boundary_mass.solve(&op.boundary_rows(&r0))?;

    let outcome = gmres(
        |x, out| {
            out.copy_from_slice(&op.apply_preconditioned(x)?);
            Ok(())
        },
        &rhs,
        &problem.gmres,
    )?;

    let u = outcome.x;
    let y = op.state(&u, &load_f)?;
    let state_res_full = op.poisson.residual(&y, &load_f);
    let state_scale = residual_scale(&op.poisson.stiffness().mul_vec(y.coefficients()), &load_f);
    let state_residual = interior_defect(mesh, &state_res_full, state_scale);

    let adj_load = op.adjoint_load(&y, Some(&load_yd));
    let (p, r) = op.adjoint(&adj_load)?;
    let adjoint_scale = residual_scale(&op.poisson.stiffness().mul_vec(p.coefficients()), &adj_load);
    let adjoint_residual = interior_defect(mesh, &r, adjoint_scale);
    let flux = op.boundary_mass.flux_from_residual(mesh, &r, adjoint_scale)?;

    let md = op.boundary_mass.apply(flux.coefficients());
    let mu = op.boundary_mass.apply(&u);
    let diff: Vec<f64> = mu.iter().zip(&md).map(|(a, b)| problem.alpha * a - b).collect();
    let optimality_residual = relative(norm2(&diff), norm2(&md));

    for residual in [state_residual, adjoint_residual, optimality_residual] {
        if residual > OPTIMALITY_TOL.max(INTERIOR_TOL) {
            return Err(Error::InteriorResidual {
                residual,
                tolerance: OPTIMALITY_TOL,
            });
        }
    }

    Ok(ControlSolution {
        u_h: BoundaryFunction::new(mesh, u)?,
        y_h: y,
        p_h: p,
        adjoint_flux: flux,
        krylov_stats: KrylovStats {
            iterations: outcome.iterations,
            residual: outcome.residual,
            history: outcome.history,
            state_residual,
            adjoint_residual,
            optimality_residual,
        },
    })
}

/// `(‖u - u_h‖_{L²(Γ)}, ‖y - y_h‖_{L²(Ω)})`.
pub fn control_errors(mesh: &Mesh, sol: &ControlSolution, bench: &ControlBenchmark) -> Result<(f64, f64)> {
    let err_u = flux_error_l2(mesh, &sol.u_h, |x, n| bench.u_exact(x, n))?;
    let err_y = l2_error(mesh, &sol.y_h, |x| bench.y_exact(x), &QuadratureScheme::error_norm());
    Ok((err_u, err_y))
}
