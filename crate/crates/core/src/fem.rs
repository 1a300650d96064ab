//! Linear Lagrange elements: assembly and the Dirichlet Poisson solve.

use crate::domain::Point;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureScheme;
use crate::solver::{SolverKind, SpdSolver};
use crate::sparse::{norm2, CsrMatrix};

/// A piecewise-linear function given by its values at the mesh vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn new(mesh: &Mesh, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != mesh.n_vertices() {
            return Err(Error::LengthMismatch {
                expected: mesh.n_vertices(),
                actual: coefficients.len(),
            });
        }
        Ok(Self { coefficients })
    }

    pub fn zero(mesh: &Mesh) -> Self {
        Self {
            coefficients: vec![0.0; mesh.n_vertices()],
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        Self {
            coefficients: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    /// Constant gradient on triangle `t`.
    pub fn gradient(&self, mesh: &Mesh, t: usize) -> [f64; 2] {
        let g = barycentric_gradients(mesh.triangle_points(t));
        let v = mesh.triangles()[t].vertices;
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += self.coefficients[v[k]] * g[k][0];
            out[1] += self.coefficients[v[k]] * g[k][1];
        }
        out
    }

    /// Values at the boundary vertices, in boundary-dof order.
    pub fn boundary_values(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.boundary_vertices().iter().map(|&v| self.coefficients[v]).collect()
    }
}

/// Gradients of the three barycentric coordinates of a triangle.
pub fn barycentric_gradients(p: [Point; 3]) -> [[f64; 2]; 3] {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        g[k] = [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2];
    }
    g
}

/// Element stiffness matrix `∫_T ∇φ_i·∇φ_j` of a linear triangle.
pub fn local_stiffness(p: [Point; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let g = barycentric_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

fn vertex_pattern(mesh: &Mesh) -> CsrMatrix {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_vertices()];
    for tri in mesh.triangles() {
        for &a in &tri.vertices {
            for &b in &tri.vertices {
                rows[a].push(b);
            }
        }
    }
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
    }
    CsrMatrix::from_pattern(mesh.n_vertices(), rows)
}

fn check_areas(mesh: &Mesh) -> Result<()> {
    for t in 0..mesh.n_triangles() {
        if !(mesh.triangle_area(t) > 0.0) {
            return Err(Error::DegenerateTriangle(t));
        }
    }
    Ok(())
}

/// Full vertex-indexed stiffness matrix, before any constraint elimination.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<CsrMatrix> {
    check_areas(mesh)?;
    let mut a = vertex_pattern(mesh);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = local_stiffness(mesh.triangle_points(t));
        for (i, &vi) in tri.vertices.iter().enumerate() {
            for (j, &vj) in tri.vertices.iter().enumerate() {
                a.add(vi, vj, k[i][j]);
            }
        }
    }
    Ok(a)
}

/// Full vertex-indexed consistent mass matrix `∫ φ_i φ_j`.
pub fn assemble_mass(mesh: &Mesh) -> Result<CsrMatrix> {
    check_areas(mesh)?;
    let mut m = vertex_pattern(mesh);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        for (i, &vi) in tri.vertices.iter().enumerate() {
            for (j, &vj) in tri.vertices.iter().enumerate() {
                let w = if i == j { area / 6.0 } else { area / 12.0 };
                m.add(vi, vj, w);
            }
        }
    }
    Ok(m)
}

/// Load vector `b_i = ∫ f φ_i`, integrated with `quad` on every triangle.
pub fn assemble_load(mesh: &Mesh, f: impl Fn(Point) -> f64, quad: &QuadratureScheme) -> Result<Vec<f64>> {
    let mut b = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let mut local = [0.0; 3];
        let mut finite = true;
        quad.for_each_point(mesh, t, |x, lambda, w| {
            let fx = f(x);
            finite &= fx.is_finite();
            for k in 0..3 {
                local[k] += w * fx * lambda[k];
            }
        });
        if !finite {
            return Err(Error::NonFiniteSource { element: t });
        }
        for k in 0..3 {
            b[tri.vertices[k]] += local[k];
        }
    }
    Ok(b)
}

/// Matrix-free product of the full stiffness matrix with `u`.
pub fn apply_stiffness(mesh: &Mesh, u: &FeFunction) -> Vec<f64> {
    let c = u.coefficients();
    let mut out = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = local_stiffness(mesh.triangle_points(t));
        for i in 0..3 {
            let mut s = 0.0;
            for j in 0..3 {
                s += k[i][j] * c[tri.vertices[j]];
            }
            out[tri.vertices[i]] += s;
        }
    }
    out
}

/// `L²(Ω)` error between `u_h` and `exact`.
pub fn l2_error(mesh: &Mesh, u_h: &FeFunction, exact: impl Fn(Point) -> f64, quad: &QuadratureScheme) -> f64 {
    let c = u_h.coefficients();
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let v = tri.vertices;
        quad.for_each_point(mesh, t, |x, l, w| {
            let uh = l[0] * c[v[0]] + l[1] * c[v[1]] + l[2] * c[v[2]];
            let d = exact(x) - uh;
            sum += w * d * d;
        });
    }
    sum.sqrt()
}

/// Classification of mesh vertices into free (interior) and constrained (boundary) dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    /// Interior vertices in increasing order.
    pub free: Vec<usize>,
    /// Boundary vertices in increasing order.
    pub constrained: Vec<usize>,
    /// For every vertex, its free index (if interior).
    pub free_index: Vec<Option<usize>>,
    /// For every vertex, its constrained index (if on the boundary).
    pub constrained_index: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut free = Vec::new();
        let mut free_index = vec![None; mesh.n_vertices()];
        let mut constrained_index = vec![None; mesh.n_vertices()];
        for v in 0..mesh.n_vertices() {
            match mesh.boundary_dof(v) {
                Some(b) => constrained_index[v] = Some(b),
                None => {
                    free_index[v] = Some(free.len());
                    free.push(v);
                }
            }
        }
        Self {
            free,
            constrained: mesh.boundary_vertices().to_vec(),
            free_index,
            constrained_index,
        }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_constrained(&self) -> usize {
        self.constrained.len()
    }
}

/// Dirichlet-eliminated Poisson system over the interior dofs.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    /// `A_II`, symmetric positive definite.
    pub matrix: CsrMatrix,
    /// `b_I - A_IB g`.
    pub rhs: Vec<f64>,
    /// Prescribed values on the boundary dofs.
    pub dirichlet_values: Vec<f64>,
    pub dof_map: DofMap,
}

impl SparseSystem {
    /// Assembles `-Δu = f` with `u = g` on the boundary.
    pub fn assemble(
        mesh: &Mesh,
        f: impl Fn(Point) -> f64,
        g: impl Fn(Point) -> f64,
        quad: &QuadratureScheme,
    ) -> Result<Self> {
        let a = assemble_stiffness(mesh)?;
        let load = assemble_load(mesh, f, quad)?;
        let dof_map = DofMap::new(mesh);
        let dirichlet_values: Vec<f64> = dof_map.constrained.iter().map(|&v| g(mesh.vertices()[v])).collect();
        let a_ii = a.extract(&dof_map.free, &dof_map.free_index, dof_map.n_free());
        let a_ib = a.extract(&dof_map.free, &dof_map.constrained_index, dof_map.n_constrained());
        let lift = a_ib.mul_vec(&dirichlet_values);
        let rhs = dof_map.free.iter().zip(&lift).map(|(&v, l)| load[v] - l).collect();
        Ok(Self {
            matrix: a_ii,
            rhs,
            dirichlet_values,
            dof_map,
        })
    }

    pub fn solve(self, mesh: &Mesh, kind: SolverKind) -> Result<FeFunction> {
        let solver = SpdSolver::new(self.matrix, kind)?;
        let interior = solver.solve(&self.rhs)?;
        let mut c = vec![0.0; mesh.n_vertices()];
        for (&v, x) in self.dof_map.free.iter().zip(interior) {
            c[v] = x;
        }
        for (&v, &g) in self.dof_map.constrained.iter().zip(&self.dirichlet_values) {
            c[v] = g;
        }
        FeFunction::new(mesh, c)
    }
}

/// Poisson solver for one mesh, factorised once and reused for many data.
#[derive(Debug)]
pub struct PoissonSolver<'m> {
    mesh: &'m Mesh,
    dof_map: DofMap,
    stiffness: CsrMatrix,
    interior: SpdSolver,
    coupling: CsrMatrix,
}

impl<'m> PoissonSolver<'m> {
    pub fn new(mesh: &'m Mesh, kind: SolverKind) -> Result<Self> {
        let stiffness = assemble_stiffness(mesh)?;
        Self::with_stiffness(mesh, stiffness, kind)
    }

    pub fn with_stiffness(mesh: &'m Mesh, stiffness: CsrMatrix, kind: SolverKind) -> Result<Self> {
        let dof_map = DofMap::new(mesh);
        let a_ii = stiffness.extract(&dof_map.free, &dof_map.free_index, dof_map.n_free());
        let coupling = stiffness.extract(&dof_map.free, &dof_map.constrained_index, dof_map.n_constrained());
        let interior = SpdSolver::new(a_ii, kind)?;
        Ok(Self {
            mesh,
            dof_map,
            stiffness,
            interior,
            coupling,
        })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.dof_map
    }

    /// Solves the Galerkin equations at interior vertices for the full
    /// vertex-indexed `load`, with `boundary` values in boundary-dof order.
    pub fn solve(&self, load: &[f64], boundary: &[f64]) -> Result<FeFunction> {
        let dm = &self.dof_map;
        if load.len() != self.mesh.n_vertices() {
            return Err(Error::LengthMismatch {
                expected: self.mesh.n_vertices(),
                actual: load.len(),
            });
        }
        if boundary.len() != dm.n_constrained() {
            return Err(Error::LengthMismatch {
                expected: dm.n_constrained(),
                actual: boundary.len(),
            });
        }
        let lift = self.coupling.mul_vec(boundary);
        let rhs: Vec<f64> = dm.free.iter().zip(&lift).map(|(&v, l)| load[v] - l).collect();
        let interior = self.interior.solve(&rhs)?;
        let mut c = vec![0.0; self.mesh.n_vertices()];
        for (&v, x) in dm.free.iter().zip(interior) {
            c[v] = x;
        }
        for (&v, &g) in dm.constrained.iter().zip(boundary) {
            c[v] = g;
        }
        FeFunction::new(self.mesh, c)
    }

    /// `A u - load` over all vertices.
    pub fn residual(&self, u: &FeFunction, load: &[f64]) -> Vec<f64> {
        let mut r = self.stiffness.mul_vec(u.coefficients());
        r.iter_mut().zip(load).for_each(|(r, b)| *r -= b);
        r
    }

    /// Largest interior entry of `A u - load`, relative to the scale of
    /// `load` and `A u`.
    pub fn interior_defect(&self, u: &FeFunction, load: &[f64]) -> f64 {
        let au = self.stiffness.mul_vec(u.coefficients());
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for &v in &self.dof_map.free {
            worst = worst.max((au[v] - load[v]).abs());
            scale = scale.max(au[v].abs()).max(load[v].abs());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

/// Solves `-Δu = f`, `u = g` on the boundary with the default quadrature and solver.
pub fn solve_dirichlet(mesh: &Mesh, f: impl Fn(Point) -> f64, g: impl Fn(Point) -> f64) -> Result<FeFunction> {
    let quad = QuadratureScheme::standard();
    let system = SparseSystem::assemble(mesh, f, g, &quad)?;
    system.solve(mesh, SolverKind::default())
}

/// Relative residual of the interior Galerkin equations, `‖(A u - b)_I‖ / ‖b_I‖`.
pub fn galerkin_residual(mesh: &Mesh, u: &FeFunction, load: &[f64]) -> f64 {
    let au = apply_stiffness(mesh, u);
    let dm = DofMap::new(mesh);
    let r: Vec<f64> = dm.free.iter().map(|&v| au[v] - load[v]).collect();
    let b: Vec<f64> = dm.free.iter().map(|&v| load[v]).collect();
    let bn = norm2(&b);
    if bn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / bn
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SectorDomain;
    use crate::mesh::GradingPolicy;
    use crate::quadrature::QuadratureRule;
    use std::f64::consts::PI;

    fn square(levels: usize) -> Mesh {
        let mut m = Mesh::initial(&SectorDomain::new(PI / 2.0).unwrap()).unwrap();
        for _ in 0..levels {
            m = m.refine_uniform().unwrap();
        }
        m
    }

    #[test]
    fn unit_right_triangle_local_matrix() {
        // Analytic: ∇λ0 = (-1,-1), ∇λ1 = (1,0), ∇λ2 = (0,1), area 1/2.
        let k = local_stiffness([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expected[i][j]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_symmetric() {
        let mesh = Mesh::initial(&SectorDomain::from_degrees(270.0).unwrap())
            .unwrap()
            .refine_graded(&GradingPolicy::boundary_concentrated(0.25).unwrap())
            .unwrap();
        let a = assemble_stiffness(&mesh).unwrap();
        for i in 0..a.nrows() {
            let (_, vals) = a.row(i);
            assert!(vals.iter().sum::<f64>().abs() < 1e-12);
        }
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn load_partition_of_unity_and_linear_moment() {
        let mesh = square(0);
        let q = QuadratureScheme::standard();
        let ones = assemble_load(&mesh, |_| 1.0, &q).unwrap();
        assert!((ones.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let zeros = assemble_load(&mesh, |_| 0.0, &q).unwrap();
        assert!(zeros.iter().all(|&v| v == 0.0));
        let x = assemble_load(&mesh, |p| p[0], &q).unwrap();
        assert!((x.iter().sum::<f64>() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn non_finite_source_is_reported() {
        let mesh = square(1);
        let err = assemble_load(
            &mesh,
            |p| if p[0] > 0.5 { f64::NAN } else { 0.0 },
            &QuadratureScheme::standard(),
        );
        assert!(matches!(err, Err(Error::NonFiniteSource { .. })));
    }

    #[test]
    fn affine_data_is_reproduced() {
        let mesh = square(6);
        let l = |p: Point| 1.0 + 2.0 * p[0] - p[1];
        let u = solve_dirichlet(&mesh, |_| 0.0, l).unwrap();
        for (c, p) in u.coefficients().iter().zip(mesh.vertices()) {
            assert!((c - l(*p)).abs() < 1e-11);
        }
        let zero = solve_dirichlet(&mesh, |_| 0.0, |_| 0.0).unwrap();
        assert!(zero.coefficients().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn apply_stiffness_matches_dense_product() {
        use rand::{Rng, SeedableRng};
        let mesh = square(0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let u = FeFunction::new(
            &mesh,
            (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let dense = assemble_stiffness(&mesh).unwrap().to_dense();
        let oracle: Vec<f64> = dense
            .iter()
            .map(|row| row.iter().zip(u.coefficients()).map(|(a, x)| a * x).sum())
            .collect();
        for (a, b) in apply_stiffness(&mesh, &u).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-13);
        }
        let constant = FeFunction::interpolate(&mesh, |_| 3.0);
        assert!(apply_stiffness(&mesh, &constant).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn galerkin_equations_hold_for_all_solvers() {
        let mesh = square(5);
        let f = |p: Point| (p[0] * 3.0).sin() + p[1];
        let q = QuadratureScheme::standard();
        let load = assemble_load(&mesh, f, &q).unwrap();
        for kind in [
            SolverKind::SparseCholesky,
            SolverKind::ConjugateGradient,
            SolverKind::Dense,
        ] {
            let u = SparseSystem::assemble(&mesh, f, |_| 0.0, &q)
                .unwrap()
                .solve(&mesh, kind)
                .unwrap();
            assert!(galerkin_residual(&mesh, &u, &load) < 1e-11, "{kind:?}");
            let au = apply_stiffness(&mesh, &u);
            for v in DofMap::new(&mesh).free {
                assert!((au[v] - load[v]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn poisson_solver_rejects_bad_lengths() {
        let mesh = square(2);
        let solver = PoissonSolver::new(&mesh, SolverKind::Dense).unwrap();
        assert!(solver.solve(&[0.0; 3], &[]).is_err());
    }

    #[test]
    fn high_order_rule_integrates_polynomial_load_exactly() {
        let mesh = square(3);
        let conical = QuadratureScheme::uniform(QuadratureRule::conical(6));
        let standard = QuadratureScheme::standard();
        // Degree-5 integrand times a hat stays within degree 6 on every triangle.
        let f = |p: Point| p[0].powi(3) * p[1].powi(2) - 2.0 * p[1].powi(4);
        let a = assemble_load(&mesh, f, &conical).unwrap();
        let b = assemble_load(
            &mesh,
            f,
            &QuadratureScheme::uniform(QuadratureRule::graded_conical(18, 3)),
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        let total: f64 = a.iter().sum();
        assert!((total - (1.0 / 12.0 - 2.0 / 5.0)).abs() < 1e-14);
        // Degree-3 integrand: the hat-weighted moments stay within degree 4.
        let g = |p: Point| p[0] * p[0] * p[1] - p[1].powi(3);
        let c = assemble_load(&mesh, g, &standard).unwrap();
        let d = assemble_load(&mesh, g, &conical).unwrap();
        for (x, y) in c.iter().zip(&d) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
