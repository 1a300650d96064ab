//! Sector domains `(-1,1)^2 ∩ {0 < φ < ω}` and small planar geometry helpers.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];

const SNAP: f64 = 1e-13;

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub(crate) fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(ap, ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm([ap[0] - t * ab[0], ap[1] - t * ab[1]])
}

/// Polar angle of `p` in `[0, 2π)`.
pub fn polar_angle(p: Point) -> f64 {
    let phi = p[1].atan2(p[0]);
    if phi < 0.0 {
        phi + 2.0 * PI
    } else {
        phi
    }
}

fn snap(v: f64) -> f64 {
    for target in [-1.0, 0.0, 1.0] {
        if (v - target).abs() < SNAP {
            return target;
        }
    }
    v
}

/// Intersection of the ray at angle `phi` from the origin with the boundary of `[-1,1]^2`.
fn ray_square_hit(phi: f64) -> Point {
    let (s, c) = phi.sin_cos();
    let scale = c.abs().max(s.abs());
    [snap(c / scale), snap(s / scale)]
}

/// The domain `Ω_ω = (-1,1)^2 ∩ {(r cos φ, r sin φ) : 0 < φ < ω}`.
///
/// The origin is the corner with the largest interior angle `ω`, and the
/// leading singular exponent is `λ̄ = π/ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorDomain {
    omega: f64,
    corners: Vec<Point>,
    fan: Vec<Point>,
}

impl SectorDomain {
    /// Builds `Ω_ω` for `ω ∈ [π/2, 2π)` (radians).
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega.is_finite() && (FRAC_PI_2 - 1e-12..2.0 * PI - 1e-12).contains(&omega)) {
            return Err(Error::InvalidAngle(omega));
        }
        // Points on the square boundary at multiples of π/4 below ω, then the ray end.
        let mut fan = Vec::new();
        let mut k = 0;
        while (k as f64) * FRAC_PI_4 < omega - 1e-12 {
            fan.push(ray_square_hit(k as f64 * FRAC_PI_4));
            k += 1;
        }
        fan.push(ray_square_hit(omega));

        // Geometric corners: drop points where the boundary is straight.
        let mut corners = vec![[0.0, 0.0]];
        for (i, &p) in fan.iter().enumerate() {
            let keep = if i == 0 || i + 1 == fan.len() {
                true
            } else {
                cross(sub(p, fan[i - 1]), sub(fan[i + 1], p)).abs() > 1e-12
            };
            if keep {
                corners.push(p);
            }
        }
        Ok(Self { omega, corners, fan })
    }

    /// Builds `Ω_ω` from an angle in degrees.
    pub fn from_degrees(degrees: f64) -> Result<Self> {
        Self::new(degrees.to_radians())
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Singular exponent `λ̄ = π/ω`.
    pub fn lambda_bar(&self) -> f64 {
        PI / self.omega
    }

    pub fn is_convex(&self) -> bool {
        self.omega <= PI + 1e-12
    }

    /// Polygon corners in counter-clockwise order, starting at the origin.
    /// The polygon closes from the last corner back to the first.
    pub fn corners(&self) -> &[Point] {
        &self.corners
    }

    /// Boundary points used by the coarse fan triangulation around the origin,
    /// ordered by increasing polar angle.
    pub fn fan_points(&self) -> &[Point] {
        &self.fan
    }

    /// Boundary segments of the closed polygon.
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.corners.len();
        (0..n).map(move |i| (self.corners[i], self.corners[(i + 1) % n]))
    }

    /// Exact Euclidean distance from `p` to the boundary polygon.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn area(&self) -> f64 {
        0.5 * self.segments().map(|(a, b)| cross(a, b)).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        self.segments().map(|(a, b)| norm(sub(b, a))).sum()
    }

    /// Whether `p` lies on the closed polygon boundary up to `tol`.
    pub fn on_boundary(&self, p: Point, tol: f64) -> bool {
        self.distance_to_boundary(p) <= tol
    }

    /// Whether `p` lies in the open domain.
    pub fn contains(&self, p: Point) -> bool {
        if p[0].abs() >= 1.0 || p[1].abs() >= 1.0 || (p[0] == 0.0 && p[1] == 0.0) {
            return false;
        }
        let phi = polar_angle(p);
        phi > 0.0 && phi < self.omega
    }

    /// Uniformly distributed points on the boundary, `count` in total, spread
    /// proportionally to segment length. Endpoints of segments are excluded.
    pub fn sample_boundary(&self, count: usize) -> Vec<Point> {
        let total = self.perimeter();
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let mut s = (i as f64 + 0.5) / count as f64 * total;
            for (a, b) in self.segments() {
                let len = norm(sub(b, a));
                if s <= len {
                    let t = s / len;
                    out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    break;
                }
                s -= len;
            }
        }
        out
    }
}
