//! Linear solvers: sparse Cholesky, Jacobi-preconditioned CG, dense Cholesky
//! and restarted GMRES.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{ColMut, Side};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix};

/// Relative residual the SPD solvers are required to reach.
pub const SPD_RTOL: f64 = 1e-12;

/// Normwise backward error `‖r‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)` at which a direct
/// solve is accepted even if rounding keeps the residual above [`SPD_RTOL`].
pub const BACKWARD_TOL: f64 = 1e-14;

/// Which algorithm backs an [`SpdSolver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    /// Supernodal sparse Cholesky with fill-reducing ordering.
    #[default]
    SparseCholesky,
    /// Conjugate gradients with diagonal preconditioning.
    ConjugateGradient,
    /// Dense Cholesky; intended for small systems and test oracles.
    Dense,
}

enum Backend {
    Sparse(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Cg { inv_diag: Vec<f64> },
    Dense(DenseCholesky),
}

/// A symmetric positive definite system prepared for repeated solves.
pub struct SpdSolver {
    matrix: CsrMatrix,
    norm_inf: f64,
    backend: Backend,
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.backend {
            Backend::Sparse(_) => "sparse-cholesky",
            Backend::Cg { .. } => "cg",
            Backend::Dense(_) => "dense",
        };
        f.debug_struct("SpdSolver")
            .field("n", &self.matrix.nrows())
            .field("kind", &kind)
            .finish()
    }
}

impl SpdSolver {
    /// Prepares `matrix`, which must be symmetric with a full (both triangles) pattern.
    pub fn new(matrix: CsrMatrix, kind: SolverKind) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::InvalidParameter("SPD solver needs a square matrix".into()));
        }
        let backend = match kind {
            SolverKind::SparseCholesky if n > 0 => {
                // A symmetric CSR matrix is its own CSC representation.
                let symbolic = SymbolicSparseColMatRef::new_checked(n, n, matrix.row_ptr(), None, matrix.col_idx());
                let view = SparseColMatRef::new(symbolic, matrix.values());
                let llt = view
                    .sp_cholesky(Side::Lower)
                    .map_err(|e| Error::Factorization(format!("{e:?}")))?;
                Backend::Sparse(llt)
            }
            SolverKind::SparseCholesky | SolverKind::Dense => Backend::Dense(DenseCholesky::new(&matrix.to_dense())?),
            SolverKind::ConjugateGradient => {
                let inv_diag = matrix
                    .diagonal()
                    .into_iter()
                    .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
                    .collect();
                Backend::Cg { inv_diag }
            }
        };
        let norm_inf = (0..n)
            .map(|i| matrix.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self {
            matrix,
            norm_inf,
            backend,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solves `A x = b` to relative residual [`SPD_RTOL`].
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                actual: rhs.len(),
            });
        }
        let bnorm = norm2(rhs);
        if bnorm == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        match &self.backend {
            Backend::Cg { inv_diag } => {
                let cap = (20.0 * (self.dim() as f64).sqrt()).ceil().max(100.0) as usize;
                pcg(&self.matrix, inv_diag, rhs, SPD_RTOL, cap)
            }
            direct => {
                let apply = |b: &mut [f64]| match direct {
                    Backend::Sparse(llt) => llt.solve_in_place(ColMut::from_slice_mut(b)),
                    Backend::Dense(chol) => chol.solve_in_place(b),
                    Backend::Cg { .. } => unreachable!(),
                };
                let mut x = rhs.to_vec();
                apply(&mut x);
                let binf = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                // Iterative refinement against the stored matrix.
                let mut residual = vec![0.0; rhs.len()];
                let mut rel = f64::INFINITY;
                for step in 0..5 {
                    self.matrix.mul_vec_into(&x, &mut residual);
                    residual.iter_mut().zip(rhs).for_each(|(r, b)| *r = b - *r);
                    rel = norm2(&residual) / bnorm;
                    let rinf = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let xinf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let backward = rinf / (self.norm_inf * xinf + binf);
                    if rel <= SPD_RTOL || backward <= BACKWARD_TOL {
                        return Ok(x);
                    }
                    if step < 4 {
                        apply(&mut residual);
                        x.iter_mut().zip(&residual).for_each(|(x, d)| *x += d);
                    }
                }
                Err(Error::SolverDiverged {
                    iterations: 5,
                    residual: rel,
                })
            }
        }
    }
}

/// Preconditioned conjugate gradients with a diagonal preconditioner.
pub fn pcg(a: &CsrMatrix, inv_diag: &[f64], b: &[f64], rtol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverDiverged {
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm2(&r) / bnorm;
        if rel <= rtol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: rel,
    })
}

/// Dense Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    /// Row-major lower triangle.
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn new(a: &[Vec<f64>]) -> Result<Self> {
        let n = a.len();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j][j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::Factorization(format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// Settings for [`gmres`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    pub restart: usize,
    /// Relative residual target `‖b - A x‖ / ‖b‖`.
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            restart: 50,
            rtol: 1e-10,
            max_iter: 500,
        }
    }
}

/// Result of a converged GMRES run.
#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual, recomputed from the true residual.
    pub residual: f64,
    /// Relative residual estimate after every iteration.
    pub history: Vec<f64>,
}

/// Restarted GMRES with modified Gram–Schmidt and Givens rotations.
///
/// `apply(x, y)` must write `A x` into `y`.
pub fn gmres<F>(mut apply: F, b: &[f64], config: &GmresConfig) -> Result<GmresOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            history,
        });
    }
    let m = config.restart.max(1);
    let mut total = 0;
    let mut w = vec![0.0; n];
    let mut r = vec![0.0; n];

    loop {
        apply(&x, &mut r)?;
        r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if rel <= config.rtol {
            return Ok(GmresOutcome {
                x,
                iterations: total,
                residual: rel,
                history,
            });
        }
        if total >= config.max_iter {
            return Err(Error::GmresStagnated {
                iterations: total,
                residual: rel,
                history,
            });
        }

        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < config.max_iter {
            apply(&basis[k], &mut w)?;
            let mut h = vec![0.0; k + 2];
            for (j, v) in basis.iter().enumerate() {
                let hj = dot(&w, v);
                h[j] = hj;
                w.iter_mut().zip(v).for_each(|(w, v)| *w -= hj * v);
            }
            let hnext = norm2(&w);
            h[k + 1] = hnext;
            for j in 0..k {
                let t = cs[j] * h[j] + sn[j] * h[j + 1];
                h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
                h[j] = t;
            }
            let denom = h[k].hypot(h[k + 1]);
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (h[k] / denom, h[k + 1] / denom)
            };
            h[k] = c * h[k] + s * h[k + 1];
            h[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g[k + 1] = -s * g[k];
            g[k] *= c;
            hess.push(h);
            k += 1;
            total += 1;
            let est = g[k].abs() / bnorm;
            history.push(est);
            if est <= config.rtol || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        // Back substitution on the k×k triangular system.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in (i + 1)..k {
                s -= hess[j][i] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&basis[j]).for_each(|(x, v)| *x += yj * v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn solvers_agree_on_laplacian() {
        let a = laplace_1d(60);
        let b: Vec<f64> = (0..60).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let mut results = Vec::new();
        for kind in [
            SolverKind::SparseCholesky,
            SolverKind::ConjugateGradient,
            SolverKind::Dense,
        ] {
            let s = SpdSolver::new(a.clone(), kind).unwrap();
            let x = s.solve(&b).unwrap();
            let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(ax, b)| ax - b).collect();
            assert!(norm2(&r) <= 1e-12 * norm2(&b));
            results.push(x);
        }
        for x in &results[1..] {
            for (u, v) in x.iter().zip(&results[0]) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dense_cholesky_rejects_indefinite() {
        assert!(DenseCholesky::new(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = laplace_1d(400);
        let inv: Vec<f64> = vec![0.5; 400];
        let b = vec![1.0; 400];
        assert!(matches!(pcg(&a, &inv, &b, 1e-14, 5), Err(Error::SolverDiverged { .. })));
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 80;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
            if i > 1 {
                t.push((i, i - 2, 0.5));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let config = GmresConfig {
            restart: 10,
            ..Default::default()
        };
        let out = gmres(
            |x, y| {
                a.mul_vec_into(x, y);
                Ok(())
            },
            &b,
            &config,
        )
        .unwrap();
        assert!(out.residual <= 1e-10);
        assert!(out.iterations > 10, "restart path exercised");
    }

    #[test]
    fn gmres_zero_rhs_and_stagnation() {
        let ok = gmres(
            |_, y| {
                y.fill(0.0);
                Ok(())
            },
            &[0.0; 3],
            &GmresConfig::default(),
        )
        .unwrap();
        assert_eq!(ok.x, vec![0.0; 3]);
        let config = GmresConfig {
            restart: 2,
            rtol: 1e-12,
            max_iter: 4,
        };
        let a = laplace_1d(50);
        let err = gmres(
            |x, y| {
                a.mul_vec_into(x, y);
                Ok(())
            },
            &vec![1.0; 50],
            &config,
        );
        assert!(matches!(err, Err(Error::GmresStagnated { .. })));
    }
}
