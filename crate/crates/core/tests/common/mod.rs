//! Independent oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use fluxfem::{Point, SectorDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ANGLES: [f64; 6] = [90.0, 120.0, 135.0, 225.0, 270.0, 315.0];

const STEP: f64 = 1e-4;

fn five_point(f: &impl Fn(Point) -> f64, p: Point, h: f64) -> f64 {
    (f([p[0] + h, p[1]]) + f([p[0] - h, p[1]]) + f([p[0], p[1] + h]) + f([p[0], p[1] - h]) - 4.0 * f(p)) / (h * h)
}

/// Five-point Laplacian at steps `STEP` and `2·STEP`, Richardson-combined
/// so the truncation error is fourth order.
pub fn fd_laplacian(f: impl Fn(Point) -> f64, p: Point) -> f64 {
    (4.0 * five_point(&f, p, STEP) - five_point(&f, p, 2.0 * STEP)) / 3.0
}

/// Random interior points away from the corner and the boundary.
pub fn interior_points(domain: &SectorDomain, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if domain.contains(p) && domain.distance_to_boundary(p) > 0.01 && p[0].hypot(p[1]) > 0.1 {
            pts.push(p);
        }
    }
    pts
}

/// `|a - b| <= rel · max(|a|, |b|, 1)`.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// P1 stiffness matrix of a triangle from edge vectors: `K_ij = (e_i·e_j)/(4|T|)`
/// where `e_i` is the edge opposite vertex `i`, oriented counter-clockwise.
pub fn stiffness_oracle(p: [Point; 3]) -> [[f64; 3]; 3] {
    let e = |i: usize| {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        [b[0] - a[0], b[1] - a[1]]
    };
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = (e(i), e(j));
            k[i][j] = (a[0] * b[0] + a[1] * b[1]) / (4.0 * area.abs());
        }
    }
    k
}
