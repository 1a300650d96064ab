//! Exact solutions for the flux and the boundary control benchmarks.
//!
//! Both families are built around the harmonic corner function
//! `s = r^λ sin(λφ)` with `λ = π/ω`, multiplied by the bubble
//! `g = (1 - x²)(1 - y²)` so that the products vanish on the whole boundary.
//! Laplacians are derived by the product rule around the harmonic factor.

use crate::domain::{polar_angle, Point, SectorDomain};
use crate::error::{Error, Result};

/// `s = r^λ sin(λφ)` and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerFunction {
    pub lambda: f64,
}

impl CornerFunction {
    pub fn value(&self, p: Point) -> f64 {
        let r = p[0].hypot(p[1]);
        if r == 0.0 {
            return 0.0;
        }
        r.powf(self.lambda) * (self.lambda * polar_angle(p)).sin()
    }

    /// `∇s = λ r^(λ-1) (sin((λ-1)φ), cos((λ-1)φ))`.
    pub fn gradient(&self, p: Point) -> [f64; 2] {
        let r = p[0].hypot(p[1]);
        let phi = polar_angle(p);
        let a = self.lambda * r.powf(self.lambda - 1.0);
        let t = (self.lambda - 1.0) * phi;
        [a * t.sin(), a * t.cos()]
    }
}

/// `g = (1 - x²)(1 - y²)`.
fn bubble(p: Point) -> f64 {
    (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1])
}

fn bubble_gradient(p: Point) -> [f64; 2] {
    [-2.0 * p[0] * (1.0 - p[1] * p[1]), -2.0 * p[1] * (1.0 - p[0] * p[0])]
}

fn bubble_laplacian(p: Point) -> f64 {
    -2.0 * (1.0 - p[1] * p[1]) - 2.0 * (1.0 - p[0] * p[0])
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Shared pieces of `w = s·g`.
#[derive(Debug, Clone, Copy)]
struct BubbleProduct {
    s: CornerFunction,
}

impl BubbleProduct {
    fn value(&self, p: Point) -> f64 {
        self.s.value(p) * bubble(p)
    }

    fn gradient(&self, p: Point) -> [f64; 2] {
        let (s, ds) = (self.s.value(p), self.s.gradient(p));
        let (g, dg) = (bubble(p), bubble_gradient(p));
        [g * ds[0] + s * dg[0], g * ds[1] + s * dg[1]]
    }

    fn laplacian(&self, p: Point) -> f64 {
        2.0 * dot(self.s.gradient(p), bubble_gradient(p)) + self.s.value(p) * bubble_laplacian(p)
    }
}

fn reject_singular_origin(lambda: f64, p: Point) -> Result<()> {
    if lambda < 1.0 && p[0] == 0.0 && p[1] == 0.0 {
        return Err(Error::InvalidParameter(
            "gradient is singular at the reentrant corner".into(),
        ));
    }
    Ok(())
}

/// `u = r^λ sin(λφ)(1 - x²)(1 - y²)` with `f = -Δu`.
#[derive(Debug, Clone)]
pub struct FluxBenchmark {
    domain: SectorDomain,
    product: BubbleProduct,
}

impl FluxBenchmark {
    pub fn new(domain: SectorDomain) -> Self {
        let lambda = domain.lambda_bar();
        Self {
            domain,
            product: BubbleProduct {
                s: CornerFunction { lambda },
            },
        }
    }

    pub fn domain(&self) -> &SectorDomain {
        &self.domain
    }

    pub fn lambda(&self) -> f64 {
        self.product.s.lambda
    }

    pub fn u_exact(&self, p: Point) -> f64 {
        self.product.value(p)
    }

    pub fn grad_u(&self, p: Point) -> [f64; 2] {
        self.product.gradient(p)
    }

    /// Gradient, rejecting the singular corner.
    pub fn try_grad_u(&self, p: Point) -> Result<[f64; 2]> {
        reject_singular_origin(self.lambda(), p)?;
        Ok(self.grad_u(p))
    }

    pub fn f_rhs(&self, p: Point) -> f64 {
        -self.product.laplacian(p)
    }

    /// `∇u·n` for the outward normal `n` of the edge containing `p`.
    pub fn flux_exact(&self, p: Point, normal: [f64; 2]) -> f64 {
        dot(self.grad_u(p), normal)
    }
}

/// Builds the flux benchmark on the sector of opening `omega`.
pub fn flux_bench(omega: f64) -> Result<FluxBenchmark> {
    Ok(FluxBenchmark::new(SectorDomain::new(omega)?))
}

/// Exact optimal triple of the boundary control benchmark.
///
/// `p = s·g` and `y = α⁻¹ (-λ r^(λ-1) g + 2 s (r² - 2))`, with
/// `f_state = -Δy`, `y_d = y + Δp` and the optimal control `u = α⁻¹ ∂ₙp`.
#[derive(Debug, Clone)]
pub struct ControlBenchmark {
    domain: SectorDomain,
    product: BubbleProduct,
    alpha: f64,
}

impl ControlBenchmark {
    pub fn new(domain: SectorDomain, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        let lambda = domain.lambda_bar();
        Ok(Self {
            domain,
            product: BubbleProduct {
                s: CornerFunction { lambda },
            },
            alpha,
        })
    }

    pub fn domain(&self) -> &SectorDomain {
        &self.domain
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.product.s.lambda
    }

    pub fn p_exact(&self, p: Point) -> f64 {
        self.product.value(p)
    }

    pub fn grad_p(&self, p: Point) -> [f64; 2] {
        self.product.gradient(p)
    }

    pub fn try_grad_p(&self, p: Point) -> Result<[f64; 2]> {
        reject_singular_origin(self.lambda(), p)?;
        Ok(self.grad_p(p))
    }

    pub fn laplacian_p(&self, p: Point) -> f64 {
        self.product.laplacian(p)
    }

    pub fn y_exact(&self, p: Point) -> f64 {
        let l = self.lambda();
        let r2 = p[0] * p[0] + p[1] * p[1];
        let q = if r2 == 0.0 { 0.0 } else { r2.sqrt().powf(l - 1.0) };
        // For λ < 1 the first term blows up at the corner and is never sampled there.
        let q = if r2 == 0.0 && l < 1.0 { f64::INFINITY } else { q };
        (-l * q * bubble(p) + 2.0 * self.product.s.value(p) * (r2 - 2.0)) / self.alpha
    }

    pub fn laplacian_y(&self, p: Point) -> f64 {
        let l = self.lambda();
        let r = p[0].hypot(p[1]);
        let q = r.powf(l - 1.0);
        let c = (l - 1.0) * r.powf(l - 3.0);
        let grad_q = [c * p[0], c * p[1]];
        let lap_q = (l - 1.0) * (l - 1.0) * r.powf(l - 3.0);
        let first = -l * (bubble(p) * lap_q + 2.0 * dot(grad_q, bubble_gradient(p)) + q * bubble_laplacian(p));
        let second = 8.0 * (l + 1.0) * self.product.s.value(p);
        (first + second) / self.alpha
    }

    pub fn f_state(&self, p: Point) -> f64 {
        -self.laplacian_y(p)
    }

    pub fn y_desired(&self, p: Point) -> f64 {
        self.y_exact(p) + self.laplacian_p(p)
    }

    /// Optimal control `α⁻¹ ∂ₙp` at `p` on the edge with outward `normal`.
    pub fn u_exact(&self, p: Point, normal: [f64; 2]) -> f64 {
        dot(self.grad_p(p), normal) / self.alpha
    }
}

/// Builds the control benchmark on the sector of opening `omega`.
pub fn control_bench(omega: f64, alpha: f64) -> Result<ControlBenchmark> {
    ControlBenchmark::new(SectorDomain::new(omega)?, alpha)
}
