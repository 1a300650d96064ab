//! Normal derivatives of discrete solutions on the boundary.
//!
//! The classical flux takes `∇u_h·n` edge by edge. The variational flux is the
//! trace-space function defined through Green's formula: it is the boundary
//! part of the Galerkin residual `A u_h - b`, mapped back through the boundary
//! mass matrix.

use crate::domain::Point;
use crate::error::{Error, Result};
use crate::fem::{apply_stiffness, assemble_load, FeFunction};
use crate::mesh::Mesh;
use crate::quadrature::{EdgeRule, QuadratureScheme};
use crate::solver::{SolverKind, SpdSolver};
use crate::sparse::{norm2, CsrMatrix};

/// Largest admissible interior residual, relative to the residual scale.
pub const INTERIOR_TOL: f64 = 1e-9;

/// Gauss points per boundary edge.
pub const EDGE_POINTS: usize = 5;
/// Gauss points on the boundary edges touching the origin corner.
pub const CORNER_EDGE_POINTS: usize = 10;

/// Piecewise-constant flux, one value per boundary edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFlux {
    values: Vec<f64>,
}

impl EdgeFlux {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.boundary_edges().len() {
            return Err(Error::LengthMismatch {
                expected: mesh.boundary_edges().len(),
                actual: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Continuous piecewise-linear function on the boundary, one coefficient per
/// boundary vertex in boundary-dof order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFunction {
    coefficients: Vec<f64>,
}

impl BoundaryFunction {
    pub fn new(mesh: &Mesh, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != mesh.n_boundary_vertices() {
            return Err(Error::LengthMismatch {
                expected: mesh.n_boundary_vertices(),
                actual: coefficients.len(),
            });
        }
        Ok(Self { coefficients })
    }

    pub fn zero(mesh: &Mesh) -> Self {
        Self {
            coefficients: vec![0.0; mesh.n_boundary_vertices()],
        }
    }

    /// Nodal interpolant of `v` on the boundary vertices.
    pub fn interpolate(mesh: &Mesh, v: impl Fn(Point) -> f64) -> Self {
        Self {
            coefficients: mesh
                .boundary_vertices()
                .iter()
                .map(|&i| v(mesh.vertices()[i]))
                .collect(),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }
}

/// Anything that can be evaluated along a boundary edge.
pub trait BoundaryValues {
    /// Value on boundary edge `e` at parameter `t ∈ (0, 1)` from its first vertex.
    fn value_on_edge(&self, mesh: &Mesh, e: usize, t: f64) -> f64;
}

impl BoundaryValues for EdgeFlux {
    fn value_on_edge(&self, _mesh: &Mesh, e: usize, _t: f64) -> f64 {
        self.values[e]
    }
}

impl BoundaryValues for BoundaryFunction {
    fn value_on_edge(&self, mesh: &Mesh, e: usize, t: f64) -> f64 {
        let [a, b] = mesh.boundary_edges()[e].vertices;
        let ca = self.coefficients[mesh.boundary_dof(a).expect("edge vertex is on the boundary")];
        let cb = self.coefficients[mesh.boundary_dof(b).expect("edge vertex is on the boundary")];
        (1.0 - t) * ca + t * cb
    }
}

/// Per-edge `∇(u_h|_T)·n`.
pub fn classical_flux(mesh: &Mesh, u_h: &FeFunction) -> EdgeFlux {
    EdgeFlux {
        values: mesh
            .boundary_edges()
            .iter()
            .map(|e| {
                let g = u_h.gradient(mesh, e.triangle);
                g[0] * e.normal[0] + g[1] * e.normal[1]
            })
            .collect(),
    }
}

/// `M_Γ[i, j] = ∫_Γ ψ_i ψ_j` over the boundary dofs.
pub fn boundary_mass_matrix(mesh: &Mesh) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(4 * mesh.boundary_edges().len());
    for e in mesh.boundary_edges() {
        let i = mesh
            .boundary_dof(e.vertices[0])
            .expect("edge vertex is on the boundary");
        let j = mesh
            .boundary_dof(e.vertices[1])
            .expect("edge vertex is on the boundary");
        let d = e.length / 3.0;
        let o = e.length / 6.0;
        triplets.extend_from_slice(&[(i, i, d), (j, j, d), (i, j, o), (j, i, o)]);
    }
    let n = mesh.n_boundary_vertices();
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Factorised boundary mass matrix of one mesh.
#[derive(Debug)]
pub struct BoundaryMass {
    solver: SpdSolver,
}

impl BoundaryMass {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        Ok(Self {
            solver: SpdSolver::new(boundary_mass_matrix(mesh), SolverKind::SparseCholesky)?,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        self.solver.matrix()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix().mul_vec(v)
    }

    /// Solves `M_Γ d = r`.
    pub fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(r)
    }

    /// `L²(Γ)` inner product of two trace functions.
    pub fn inner(&self, a: &BoundaryFunction, b: &BoundaryFunction) -> f64 {
        self.apply(a.coefficients())
            .iter()
            .zip(b.coefficients())
            .map(|(x, y)| x * y)
            .sum()
    }

    /// `L²(Γ)` projection of `v(x, n)`.
    pub fn project(&self, mesh: &Mesh, v: impl Fn(Point, [f64; 2]) -> f64) -> Result<BoundaryFunction> {
        let m = boundary_moments(mesh, v)?;
        BoundaryFunction::new(mesh, self.solve(&m)?)
    }

    /// Variational flux from a full vertex-indexed residual `A u - b`.
    /// Fails when the interior rows of the residual do not vanish.
    pub fn flux_from_residual(&self, mesh: &Mesh, residual: &[f64], scale: f64) -> Result<BoundaryFunction> {
        let defect = interior_defect(mesh, residual, scale);
        if defect > INTERIOR_TOL {
            return Err(Error::InteriorResidual {
                residual: defect,
                tolerance: INTERIOR_TOL,
            });
        }
        let rb: Vec<f64> = mesh.boundary_vertices().iter().map(|&v| residual[v]).collect();
        BoundaryFunction::new(mesh, self.solve(&rb)?)
    }
}

/// Largest interior entry of `residual` divided by `scale`.
pub fn interior_defect(mesh: &Mesh, residual: &[f64], scale: f64) -> f64 {
    let worst = (0..mesh.n_vertices())
        .filter(|&v| mesh.boundary_dof(v).is_none())
        .map(|v| residual[v].abs())
        .fold(0.0f64, f64::max);
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

fn touches_corner(mesh: &Mesh, e: usize) -> bool {
    mesh.boundary_edges()[e].vertices.contains(&mesh.singular_vertex())
}

/// Moments `m_i = ∫_Γ v ψ_i`, integrated per edge.
pub fn boundary_moments(mesh: &Mesh, v: impl Fn(Point, [f64; 2]) -> f64) -> Result<Vec<f64>> {
    let regular = EdgeRule::gauss(EDGE_POINTS);
    let corner = EdgeRule::gauss(CORNER_EDGE_POINTS);
    let mut m = vec![0.0; mesh.n_boundary_vertices()];
    for (k, e) in mesh.boundary_edges().iter().enumerate() {
        let rule = if touches_corner(mesh, k) { &corner } else { &regular };
        let a = mesh.vertices()[e.vertices[0]];
        let b = mesh.vertices()[e.vertices[1]];
        let (mut ma, mut mb) = (0.0, 0.0);
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let val = v(x, e.normal);
            if !val.is_finite() {
                return Err(Error::NonFiniteBoundary { edge: k });
            }
            ma += w * e.length * val * (1.0 - t);
            mb += w * e.length * val * t;
        }
        m[mesh
            .boundary_dof(e.vertices[0])
            .expect("edge vertex is on the boundary")] += ma;
        m[mesh
            .boundary_dof(e.vertices[1])
            .expect("edge vertex is on the boundary")] += mb;
    }
    Ok(m)
}

/// Variational flux of `u_h` for the source `f`.
pub fn variational_flux(
    mesh: &Mesh,
    u_h: &FeFunction,
    f: impl Fn(Point) -> f64,
    quad: &QuadratureScheme,
) -> Result<BoundaryFunction> {
    let load = assemble_load(mesh, f, quad)?;
    let au = apply_stiffness(mesh, u_h);
    let scale = residual_scale(&au, &load);
    let residual: Vec<f64> = au.iter().zip(&load).map(|(a, b)| a - b).collect();
    BoundaryMass::new(mesh)?.flux_from_residual(mesh, &residual, scale)
}

/// Scale against which interior residuals are judged.
pub fn residual_scale(au: &[f64], load: &[f64]) -> f64 {
    au.iter().chain(load).fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `√(Σ_E ∫_E (approx - exact)²)`, never sampling edge endpoints.
pub fn flux_error_l2(mesh: &Mesh, approx: &impl BoundaryValues, exact: impl Fn(Point, [f64; 2]) -> f64) -> Result<f64> {
    let regular = EdgeRule::gauss(EDGE_POINTS);
    let corner = EdgeRule::gauss(CORNER_EDGE_POINTS);
    let mut sum = 0.0;
    for (k, e) in mesh.boundary_edges().iter().enumerate() {
        let rule = if touches_corner(mesh, k) { &corner } else { &regular };
        let a = mesh.vertices()[e.vertices[0]];
        let b = mesh.vertices()[e.vertices[1]];
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let val = exact(x, e.normal);
            if !val.is_finite() {
                return Err(Error::NonFiniteBoundary { edge: k });
            }
            let d = approx.value_on_edge(mesh, k, t) - val;
            sum += w * e.length * d * d;
        }
    }
    Ok(sum.sqrt())
}

/// `(d, 1)_Γ`.
pub fn boundary_integral(mesh: &Mesh, d: &BoundaryFunction) -> f64 {
    mesh.boundary_edges()
        .iter()
        .enumerate()
        .map(|(k, e)| 0.5 * e.length * (d.value_on_edge(mesh, k, 0.0) + d.value_on_edge(mesh, k, 1.0)))
        .sum()
}

/// Relative defect of `(∂ₙʰu_h, 1)_Γ + (f, 1)_Ω = 0`, where `load` is the
/// assembled load vector of `f`.
pub fn compatibility_defect(mesh: &Mesh, flux: &BoundaryFunction, load: &[f64]) -> f64 {
    let total: f64 = load.iter().sum();
    let bnd = boundary_integral(mesh, flux);
    let scale = load.iter().map(|v| v.abs()).sum::<f64>().max(bnd.abs());
    if scale == 0.0 {
        0.0
    } else {
        (bnd + total).abs() / scale
    }
}

/// Relative `‖M_Γ d - r‖ / ‖r‖`.
pub fn mass_residual(mass: &CsrMatrix, d: &[f64], r: &[f64]) -> f64 {
    let md = mass.mul_vec(d);
    let res: Vec<f64> = md.iter().zip(r).map(|(a, b)| a - b).collect();
    let rn = norm2(r);
    if rn == 0.0 {
        norm2(&res)
    } else {
        norm2(&res) / rn
    }
}
