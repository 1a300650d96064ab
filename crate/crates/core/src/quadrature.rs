//! Quadrature on triangles and edges.
//!
//! Triangle rules are given in barycentric coordinates with weights summing to
//! one, so `∫_T f ≈ |T| Σ w_q f(x_q)`. No rule places a point on a triangle
//! vertex, so integrands singular at a corner are never evaluated there.

use crate::domain::Point;
use crate::mesh::Mesh;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] to [0, 1].
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// A quadrature rule on the reference triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Barycentric coordinates of the points.
    pub points: Vec<[f64; 3]>,
    /// Positive weights summing to one.
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Symmetric six-point rule, exact for degree 4.
    pub fn six_point() -> Self {
        const A1: f64 = 0.445_948_490_915_964_9;
        const W1: f64 = 0.223_381_589_678_011_47;
        const A2: f64 = 0.091_576_213_509_770_74;
        const W2: f64 = 0.109_951_743_655_321_87;
        let mut points = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for (a, w) in [(A1, W1), (A2, W2)] {
            let b = 1.0 - 2.0 * a;
            for p in [[b, a, a], [a, b, a], [a, a, b]] {
                points.push(p);
                weights.push(w);
            }
        }
        // Renormalise the last ulp so the weights sum to one.
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        Self {
            points,
            weights,
            degree: 4,
        }
    }

    /// Collapsed (Duffy) tensor Gauss rule with `n²` points, exact for degree `2n - 2`.
    pub fn conical(n: usize) -> Self {
        let mut rule = Self::graded_conical(n, 1);
        rule.degree = 2 * n - 2;
        rule
    }

    /// Collapsed Gauss rule whose radial coordinate from barycentric vertex 0
    /// is `r = s^grading`. Points cluster at vertex 0, which suits integrands
    /// behaving like a power of the distance to that vertex. Exact for total
    /// degree `(2n - 2·grading) / grading`.
    pub fn graded_conical(n: usize, grading: u32) -> Self {
        let (x, w) = gauss_legendre(n);
        let q = grading as f64;
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&s, &ws) in x.iter().zip(&w) {
            let r = s.powi(grading as i32);
            let jac = 2.0 * r * q * s.powi(grading as i32 - 1);
            for (&eta, &we) in x.iter().zip(&w) {
                points.push([1.0 - r, r * (1.0 - eta), r * eta]);
                weights.push(jac * ws * we);
            }
        }
        let degree = (2 * n).saturating_sub(2 * grading as usize) / grading as usize;
        Self {
            points,
            weights,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Chooses a rule per triangle: a regular rule everywhere and, optionally, a
/// corner rule on triangles touching the singular vertex of the mesh.
#[derive(Debug, Clone)]
pub struct QuadratureScheme {
    pub regular: QuadratureRule,
    /// Rule with its clustering vertex at barycentric index 0.
    pub corner: Option<QuadratureRule>,
}

impl QuadratureScheme {
    /// Same rule on every triangle.
    pub fn uniform(rule: QuadratureRule) -> Self {
        Self {
            regular: rule,
            corner: None,
        }
    }

    /// Load-vector default: six-point rule, degree-10 graded rule at the corner.
    pub fn standard() -> Self {
        Self {
            regular: QuadratureRule::six_point(),
            corner: Some(QuadratureRule::graded_conical(18, 3)),
        }
    }

    /// Error-norm default: 16-point collapsed rule (degree 6), graded rule at the corner.
    pub fn error_norm() -> Self {
        Self {
            regular: QuadratureRule::conical(4),
            corner: Some(QuadratureRule::graded_conical(18, 3)),
        }
    }

    /// Calls `visit(x, λ, w)` for every quadrature point of triangle `t`,
    /// where `λ` are barycentric coordinates in the triangle's own vertex
    /// order and `w` already includes the triangle area.
    pub fn for_each_point(&self, mesh: &Mesh, t: usize, mut visit: impl FnMut(Point, [f64; 3], f64)) {
        let tri = mesh.triangles()[t];
        let p = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        let singular = mesh.singular_vertex();
        let corner = self
            .corner
            .as_ref()
            .zip(tri.vertices.iter().position(|&v| v == singular));
        let (rule, shift) = match corner {
            Some((rule, k)) => (rule, k),
            None => (&self.regular, 0),
        };
        for (b, &w) in rule.points.iter().zip(&rule.weights) {
            // Local vertex `shift` takes the rule's barycentric coordinate 0.
            let mut lambda = [0.0; 3];
            for (i, &bi) in b.iter().enumerate() {
                lambda[(i + shift) % 3] = bi;
            }
            let x = [
                lambda[0] * p[0][0] + lambda[1] * p[1][0] + lambda[2] * p[2][0],
                lambda[0] * p[0][1] + lambda[1] * p[1][1] + lambda[2] * p[2][1],
            ];
            visit(x, lambda, w * area);
        }
    }
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self::standard()
    }
}

/// Gauss rule on a boundary edge: parameters in `(0, 1)` and weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EdgeRule {
    pub fn gauss(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of `x^a y^b` over the reference triangle divided by its area.
    fn monomial_mean(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        2.0 * fact(a) * fact(b) / fact(a + b + 2)
    }

    fn check_exactness(rule: &QuadratureRule) {
        let deg = rule.degree as u32;
        for a in 0..=deg {
            for b in 0..=(deg - a) {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(l, w)| w * l[1].powi(a as i32) * l[2].powi(b as i32))
                    .sum();
                let exact = monomial_mean(a, b);
                assert!((approx - exact).abs() <= 1e-13, "x^{a} y^{b}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for k in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((approx - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn six_point_rule_is_degree_four() {
        let rule = QuadratureRule::six_point();
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        check_exactness(&rule);
    }

    #[test]
    fn conical_rules_reach_their_degree() {
        check_exactness(&QuadratureRule::conical(4));
        check_exactness(&QuadratureRule::conical(6));
        let graded = QuadratureRule::graded_conical(18, 3);
        assert_eq!(graded.degree, 10);
        check_exactness(&graded);
    }

    #[test]
    fn points_avoid_vertices() {
        for rule in [
            QuadratureRule::six_point(),
            QuadratureRule::conical(6),
            QuadratureRule::graded_conical(18, 3),
        ] {
            for p in &rule.points {
                assert!(p.iter().all(|&l| l < 1.0 - 1e-12 && l > -1e-15));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
            assert!(rule.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn graded_rule_handles_corner_power_singularity() {
        // ∫_ref r^(-4/3) over the reference triangle with r the distance to vertex 0,
        // compared against the same integral from a 200-point radial/angle product.
        let rule = QuadratureRule::graded_conical(18, 3);
        let f = |l: &[f64; 3]| (l[1] * l[1] + l[2] * l[2]).powf(-2.0 / 3.0);
        let approx: f64 = rule.points.iter().zip(&rule.weights).map(|(l, w)| w * f(l)).sum();
        // Polar oracle: ∫_0^{π/2} ∫_0^{R(θ)} r^{-4/3} r dr dθ, R(θ) = 1/(cosθ+sinθ);
        // inner integral = (3/2) R^{2/3}; divided by the reference area 1/2.
        let (x, w) = gauss_legendre(200);
        let oracle: f64 = x
            .iter()
            .zip(&w)
            .map(|(t, w)| {
                let th = t * std::f64::consts::FRAC_PI_2;
                let r = 1.0 / (th.cos() + th.sin());
                w * std::f64::consts::FRAC_PI_2 * 1.5 * r.powf(2.0 / 3.0)
            })
            .sum::<f64>()
            * 2.0;
        assert!((approx - oracle).abs() < 1e-6 * oracle, "{approx} vs {oracle}");
    }
}
