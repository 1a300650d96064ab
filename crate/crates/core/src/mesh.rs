//! Conforming triangulations of sector domains and newest-vertex bisection.
//!
//! Triangles carry a refinement edge. Bisecting a triangle splits that edge at
//! its midpoint; both children get the new vertex as their newest vertex, so
//! their refinement edges are the two remaining edges of the parent. Closure
//! keeps the mesh free of hanging nodes.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};
use std::io::{BufRead, Write};

use crate::domain::{cross, midpoint, norm, sub, Point, SectorDomain};
use crate::error::{Error, Result};

/// A triangle given by counter-clockwise vertex indices.
///
/// `refinement_edge = e` selects the edge opposite `vertices[e]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub refinement_edge: u8,
}

impl Triangle {
    pub fn new(vertices: [usize; 3], refinement_edge: u8) -> Self {
        debug_assert!(refinement_edge < 3);
        Self {
            vertices,
            refinement_edge,
        }
    }

    /// Vertices rotated so that the refinement edge is `(v[1], v[2])`.
    #[inline]
    pub fn newest_first(&self) -> [usize; 3] {
        let r = self.refinement_edge as usize;
        let v = self.vertices;
        [v[r], v[(r + 1) % 3], v[(r + 2) % 3]]
    }

    /// Endpoints of local edge `e` (opposite `vertices[e]`), in counter-clockwise order.
    #[inline]
    pub fn edge(&self, e: usize) -> [usize; 2] {
        [self.vertices[(e + 1) % 3], self.vertices[(e + 2) % 3]]
    }
}

/// A boundary edge, oriented so that the domain lies to its left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    /// Unit outward normal.
    pub normal: Point,
    pub length: f64,
    /// Index of the triangle owning the edge.
    pub triangle: usize,
}

/// How `refine_graded` treats the mesh after the global sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradingMode {
    /// Refine until `h_T <= c·max(h², h·sqrt(ρ_T))` holds everywhere.
    BoundaryConcentrated,
    /// Global sweeps only.
    QuasiUniform,
}

impl GradingMode {
    pub fn name(self) -> &'static str {
        match self {
            GradingMode::BoundaryConcentrated => "boundary_concentrated",
            GradingMode::QuasiUniform => "quasi_uniform",
        }
    }
}

impl std::str::FromStr for GradingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boundary_concentrated" | "boundary-concentrated" | "graded" => Ok(GradingMode::BoundaryConcentrated),
            "quasi_uniform" | "quasi-uniform" | "uniform" => Ok(GradingMode::QuasiUniform),
            other => Err(Error::InvalidParameter(format!("unknown grading mode `{other}`"))),
        }
    }
}

/// Parameters of `Mesh::refine_graded`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradingPolicy {
    pub mode: GradingMode,
    /// Nominal mesh parameter `h`.
    pub h_target: f64,
    /// Slack in the upper bound `h_T <= c_upper·max(h², h·sqrt(ρ_T))`.
    pub c_upper: f64,
    /// Refinement aborts once the mesh holds more triangles than this.
    pub max_elements: usize,
    /// Cap on marking rounds after the global sweeps.
    pub max_rounds: usize,
}

impl GradingPolicy {
    pub const DEFAULT_MAX_ELEMENTS: usize = 2_000_000;

    pub fn new(mode: GradingMode, h_target: f64) -> Result<Self> {
        if !(h_target > 0.0 && h_target <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "h_target must lie in (0, 1], got {h_target}"
            )));
        }
        Ok(Self {
            mode,
            h_target,
            c_upper: 1.0,
            max_elements: Self::DEFAULT_MAX_ELEMENTS,
            max_rounds: 200,
        })
    }

    pub fn boundary_concentrated(h_target: f64) -> Result<Self> {
        Self::new(GradingMode::BoundaryConcentrated, h_target)
    }

    pub fn quasi_uniform(h_target: f64) -> Result<Self> {
        Self::new(GradingMode::QuasiUniform, h_target)
    }

    pub fn with_c_upper(mut self, c_upper: f64) -> Self {
        self.c_upper = c_upper;
        self
    }

    pub fn with_max_elements(mut self, cap: usize) -> Self {
        self.max_elements = cap;
        self
    }

    /// Upper bound on the diameter of a triangle at distance `rho` from the boundary.
    pub fn diameter_bound(&self, rho: f64) -> f64 {
        let h = self.h_target;
        self.c_upper * (h * h).max(h * rho.sqrt())
    }
}

/// Relative slack used when comparing diameters with the grading bound.
const GRADING_SLACK: f64 = 1e-9;

/// Measured grading constants of a mesh relative to a nominal `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradingStats {
    /// Number of triangles violating the upper bound.
    pub violations: usize,
    /// `max h_T / h²` over triangles touching the boundary.
    pub max_boundary_ratio: f64,
    /// `h² / min h_T` over triangles touching the boundary; the measured `c_lower`.
    pub c_lower: f64,
    /// `max h_T / (h·sqrt(ρ_T))` over interior triangles.
    pub max_interior_ratio: f64,
}

/// A conforming triangulation of a [`SectorDomain`].
///
/// Vertex 0 is always the origin, the corner with opening angle `ω`.
#[derive(Debug, Clone)]
pub struct Mesh {
    domain: SectorDomain,
    vertices: Vec<Point>,
    triangles: Vec<Triangle>,
    boundary_edges: Vec<BoundaryEdge>,
    on_boundary: Vec<bool>,
    boundary_vertices: Vec<usize>,
    boundary_index: Vec<usize>,
    level_h: f64,
}

const NOT_ON_BOUNDARY: usize = usize::MAX;

#[derive(Default)]
struct EdgeKeyHasher(u64);

impl Hasher for EdgeKeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0.rotate_left(5) ^ b as u64).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = (v ^ (v >> 29)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        self.0 ^= self.0 >> 32;
    }
}

type EdgeMap<V> = HashMap<u64, V, BuildHasherDefault<EdgeKeyHasher>>;

#[inline]
fn edge_key(a: usize, b: usize) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

fn diameter(p: [Point; 3]) -> f64 {
    norm(sub(p[1], p[0]))
        .max(norm(sub(p[2], p[1])))
        .max(norm(sub(p[0], p[2])))
}

impl Mesh {
    /// Coarse fan triangulation of `domain` around the origin.
    ///
    /// Each triangle's refinement edge is its longest edge, ties going to the
    /// edge whose opposite vertex has the smallest index.
    pub fn initial(domain: &SectorDomain) -> Result<Self> {
        let mut vertices = vec![[0.0, 0.0]];
        vertices.extend_from_slice(domain.fan_points());
        let triangles = (1..vertices.len() - 1)
            .map(|k| {
                let v = [0, k, k + 1];
                Triangle::new(v, longest_edge(&vertices, v))
            })
            .collect();
        let on_boundary = vec![true; vertices.len()];
        Self::from_parts(domain.clone(), vertices, triangles, on_boundary, 1.0)
    }

    fn from_parts(
        domain: SectorDomain,
        vertices: Vec<Point>,
        triangles: Vec<Triangle>,
        on_boundary: Vec<bool>,
        level_h: f64,
    ) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.vertices.map(|v| vertices[v]);
            if !(cross(sub(b, a), sub(c, a)) > 0.0) {
                return Err(Error::DegenerateTriangle(t));
            }
        }
        let boundary_edges = find_boundary_edges(&vertices, &triangles);
        let mut boundary_vertices: Vec<usize> = boundary_edges.iter().map(|e| e.vertices[0]).collect();
        boundary_vertices.sort_unstable();
        let mut boundary_index = vec![NOT_ON_BOUNDARY; vertices.len()];
        for (i, &v) in boundary_vertices.iter().enumerate() {
            boundary_index[v] = i;
        }
        Ok(Self {
            domain,
            vertices,
            triangles,
            boundary_edges,
            on_boundary,
            boundary_vertices,
            boundary_index,
            level_h,
        })
    }

    pub fn domain(&self) -> &SectorDomain {
        &self.domain
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Per-vertex flag: does the vertex lie on the boundary polygon?
    pub fn boundary_vertex_flags(&self) -> &[bool] {
        &self.on_boundary
    }

    /// Boundary vertices in increasing index order; position in this list is
    /// the boundary degree of freedom.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    /// Boundary degree of freedom of vertex `v`, if it lies on the boundary.
    #[inline]
    pub fn boundary_dof(&self, v: usize) -> Option<usize> {
        match self.boundary_index[v] {
            NOT_ON_BOUNDARY => None,
            i => Some(i),
        }
    }

    /// Index of the origin, the corner with opening angle `ω`.
    pub fn singular_vertex(&self) -> usize {
        0
    }

    pub fn level_h(&self) -> f64 {
        self.level_h
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_boundary_vertices(&self) -> usize {
        self.boundary_vertices.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].vertices.map(|v| self.vertices[v])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * cross(sub(b, a), sub(c, a))
    }

    pub fn triangle_diameter(&self, t: usize) -> f64 {
        diameter(self.triangle_points(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// `ρ_T`: minimum over the triangle's vertices of the distance to the
    /// boundary; exactly zero when a vertex is flagged as a boundary vertex.
    pub fn element_distance_to_boundary(&self, t: usize) -> Result<f64> {
        let tri = self.triangles.get(t).ok_or(Error::TriangleIndex {
            index: t,
            count: self.triangles.len(),
        })?;
        if tri.vertices.iter().any(|&v| self.on_boundary[v]) {
            return Ok(0.0);
        }
        Ok(tri
            .vertices
            .iter()
            .map(|&v| self.domain.distance_to_boundary(self.vertices[v]))
            .fold(f64::INFINITY, f64::min))
    }

    /// Bisects every marked triangle at its refinement edge, with closure.
    pub fn bisect(&self, marked: &[usize]) -> Result<Mesh> {
        for &t in marked {
            if t >= self.triangles.len() {
                return Err(Error::TriangleIndex {
                    index: t,
                    count: self.triangles.len(),
                });
            }
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let mut refiner = Refiner::new(self, false);
        refiner.round(marked.iter().copied());
        refiner.finish(self.level_h)
    }

    /// One newest-vertex bisection of every triangle.
    pub fn refine_uniform(&self) -> Result<Mesh> {
        let all: Vec<usize> = (0..self.n_triangles()).collect();
        self.bisect(&all)
    }

    /// Global sweeps down to `policy.h_target`, followed (in boundary-concentrated
    /// mode) by marking rounds until every triangle satisfies the grading bound.
    ///
    /// Two sweeps halve the diameters, so reaching `h_target` from `level_h`
    /// takes `2·log2(level_h / h_target)` sweeps.
    pub fn refine_graded(&self, policy: &GradingPolicy) -> Result<Mesh> {
        if policy.h_target > self.level_h * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "h_target {} is coarser than the mesh level {}",
                policy.h_target, self.level_h
            )));
        }
        let halvings = (self.level_h / policy.h_target).log2();
        let halvings = if (halvings - halvings.round()).abs() < 1e-9 {
            halvings.round() as usize
        } else {
            halvings.ceil() as usize
        };
        let sweeps = 2 * halvings;
        let grade = policy.mode == GradingMode::BoundaryConcentrated;
        if sweeps == 0 && !grade {
            let mut mesh = self.clone();
            mesh.level_h = policy.h_target;
            return Ok(mesh);
        }

        let mut refiner = Refiner::new(self, grade);
        for _ in 0..sweeps {
            let n = refiner.triangles.len();
            refiner.round(0..n);
            refiner.check_cap(policy.max_elements)?;
        }
        if grade {
            let mut rounds = 0;
            loop {
                let marked = refiner.violators(policy);
                if marked.is_empty() {
                    break;
                }
                if rounds == policy.max_rounds {
                    return Err(Error::GradingDiverged { rounds });
                }
                refiner.round(marked.into_iter());
                refiner.check_cap(policy.max_elements)?;
                rounds += 1;
            }
        }
        refiner.finish(policy.h_target)
    }

    /// Grading constants measured against a nominal `h` under `policy`'s slack.
    pub fn grading_stats(&self, policy: &GradingPolicy) -> GradingStats {
        let h = policy.h_target;
        let rho = self.vertex_distances();
        let mut stats = GradingStats {
            violations: 0,
            max_boundary_ratio: 0.0,
            c_lower: 0.0,
            max_interior_ratio: 0.0,
        };
        let mut min_boundary = f64::INFINITY;
        for (t, tri) in self.triangles.iter().enumerate() {
            let d = self.triangle_diameter(t);
            let rho_t = tri.vertices.iter().map(|&v| rho[v]).fold(f64::INFINITY, f64::min);
            if d > policy.diameter_bound(rho_t) * (1.0 + GRADING_SLACK) {
                stats.violations += 1;
            }
            if rho_t == 0.0 {
                stats.max_boundary_ratio = stats.max_boundary_ratio.max(d / (h * h));
                min_boundary = min_boundary.min(d);
            } else {
                stats.max_interior_ratio = stats.max_interior_ratio.max(d / (h * rho_t.sqrt()));
            }
        }
        if min_boundary.is_finite() {
            stats.c_lower = h * h / min_boundary;
        }
        stats
    }

    fn vertex_distances(&self) -> Vec<f64> {
        self.vertices
            .iter()
            .zip(&self.on_boundary)
            .map(|(&p, &b)| if b { 0.0 } else { self.domain.distance_to_boundary(p) })
            .collect()
    }

    /// Checks conformity: every edge is shared by at most two triangles and
    /// every edge owned by a single triangle lies on the boundary polygon.
    pub fn is_conforming(&self) -> bool {
        let mut count: EdgeMap<u8> = EdgeMap::default();
        for tri in &self.triangles {
            for e in 0..3 {
                let [a, b] = tri.edge(e);
                *count.entry(edge_key(a, b)).or_default() += 1;
            }
        }
        if count.values().any(|&c| c > 2) {
            return false;
        }
        let tol = 1e-12;
        let single = count.values().filter(|&&c| c == 1).count();
        single == self.boundary_edges.len()
            && self.boundary_edges.iter().all(|e| {
                let [a, b] = e.vertices.map(|v| self.vertices[v]);
                self.domain.on_boundary(a, tol)
                    && self.domain.on_boundary(b, tol)
                    && self.domain.on_boundary(midpoint(a, b), tol)
            })
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let p = self.triangle_points(t);
            for i in 0..3 {
                let u = sub(p[(i + 1) % 3], p[i]);
                let v = sub(p[(i + 2) % 3], p[i]);
                let angle = cross(u, v).atan2(crate::domain::dot(u, v));
                best = best.min(angle);
            }
        }
        best
    }

    /// Writes the text dump: `v x y`, `t i j k r` and `b i j` records.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.vertices {
            writeln!(w, "v {:e} {:e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            let [i, j, k] = t.vertices;
            writeln!(w, "t {i} {j} {k} {}", t.refinement_edge)?;
        }
        for e in &self.boundary_edges {
            writeln!(w, "b {} {}", e.vertices[0], e.vertices[1])?;
        }
        Ok(())
    }
}

/// Parsed contents of a mesh dump.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeshDump {
    pub vertices: Vec<Point>,
    pub triangles: Vec<Triangle>,
    pub boundary_edges: Vec<[usize; 2]>,
}

impl MeshDump {
    pub fn of(mesh: &Mesh) -> Self {
        Self {
            vertices: mesh.vertices.clone(),
            triangles: mesh.triangles.clone(),
            boundary_edges: mesh.boundary_edges.iter().map(|e| e.vertices).collect(),
        }
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut dump = MeshDump::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = n + 1;
            let bad = |message: &str| Error::Parse {
                line: line_no,
                message: message.to_string(),
            };
            let mut fields = line.split_whitespace();
            let Some(tag) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            match (tag, rest.len()) {
                ("v", 2) => {
                    let x = rest[0].parse().map_err(|_| bad("bad coordinate"))?;
                    let y = rest[1].parse().map_err(|_| bad("bad coordinate"))?;
                    dump.vertices.push([x, y]);
                }
                ("t", 4) => {
                    let idx: Vec<usize> = rest
                        .iter()
                        .map(|s| s.parse().map_err(|_| bad("bad index")))
                        .collect::<Result<_>>()?;
                    if idx[3] > 2 {
                        return Err(bad("refinement edge must be 0, 1 or 2"));
                    }
                    dump.triangles
                        .push(Triangle::new([idx[0], idx[1], idx[2]], idx[3] as u8));
                }
                ("b", 2) => {
                    let i = rest[0].parse().map_err(|_| bad("bad index"))?;
                    let j = rest[1].parse().map_err(|_| bad("bad index"))?;
                    dump.boundary_edges.push([i, j]);
                }
                _ => return Err(bad("unrecognised record")),
            }
        }
        Ok(dump)
    }
}

fn longest_edge(vertices: &[Point], v: [usize; 3]) -> u8 {
    let mut best = 0u8;
    let mut best_len = -1.0;
    let mut best_opposite = usize::MAX;
    for e in 0..3 {
        let a = vertices[v[(e + 1) % 3]];
        let b = vertices[v[(e + 2) % 3]];
        let len = norm(sub(b, a));
        let longer = len > best_len * (1.0 + 1e-12);
        let tie = !longer && len >= best_len * (1.0 - 1e-12);
        if longer || (tie && v[e] < best_opposite) {
            best = e as u8;
            best_len = len;
            best_opposite = v[e];
        }
    }
    best
}

/// Boundary edges ordered along the boundary loop starting at the origin.
fn find_boundary_edges(vertices: &[Point], triangles: &[Triangle]) -> Vec<BoundaryEdge> {
    let mut all: Vec<(u64, usize, usize, usize)> = Vec::with_capacity(3 * triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            let [a, b] = tri.edge(e);
            all.push((edge_key(a, b), t, a, b));
        }
    }
    all.sort_unstable_by_key(|x| x.0);
    let mut edges = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        if j - i == 1 {
            let (_, t, a, b) = all[i];
            let d = sub(vertices[b], vertices[a]);
            let length = norm(d);
            edges.push(BoundaryEdge {
                vertices: [a, b],
                normal: [d[1] / length, -d[0] / length],
                length,
                triangle: t,
            });
        }
        i = j;
    }

    // Chain the edges head to tail.
    let mut by_start: HashMap<usize, usize> = edges.iter().enumerate().map(|(k, e)| (e.vertices[0], k)).collect();
    let mut ordered = Vec::with_capacity(edges.len());
    let mut used = vec![false; edges.len()];
    let mut starts: Vec<usize> = edges.iter().map(|e| e.vertices[0]).collect();
    starts.sort_unstable();
    for start in starts {
        let Some(&first) = by_start.get(&start) else {
            continue;
        };
        if used[first] {
            continue;
        }
        let mut k = first;
        while !used[k] {
            used[k] = true;
            ordered.push(edges[k]);
            by_start.remove(&edges[k].vertices[0]);
            match by_start.get(&edges[k].vertices[1]) {
                Some(&next) => k = next,
                None => break,
            }
        }
    }
    ordered
}

/// Mutable working copy used while refining.
struct Refiner<'m> {
    domain: &'m SectorDomain,
    vertices: Vec<Point>,
    triangles: Vec<Triangle>,
    on_boundary: Vec<bool>,
    /// Vertex distances to the boundary; only maintained when grading.
    rho: Option<Vec<f64>>,
}

impl<'m> Refiner<'m> {
    fn new(mesh: &'m Mesh, track_distance: bool) -> Self {
        Self {
            domain: &mesh.domain,
            vertices: mesh.vertices.clone(),
            triangles: mesh.triangles.clone(),
            on_boundary: mesh.on_boundary.clone(),
            rho: track_distance.then(|| mesh.vertex_distances()),
        }
    }

    fn check_cap(&self, cap: usize) -> Result<()> {
        if self.triangles.len() > cap {
            return Err(Error::ElementCap {
                count: self.triangles.len(),
                cap,
            });
        }
        Ok(())
    }

    fn violators(&self, policy: &GradingPolicy) -> Vec<usize> {
        let rho = self.rho.as_ref().expect("distances are tracked when grading");
        self.triangles
            .iter()
            .enumerate()
            .filter(|(_, tri)| {
                let p = tri.vertices.map(|v| self.vertices[v]);
                let rho_t = tri.vertices.iter().map(|&v| rho[v]).fold(f64::INFINITY, f64::min);
                diameter(p) > policy.diameter_bound(rho_t) * (1.0 + GRADING_SLACK)
            })
            .map(|(t, _)| t)
            .collect()
    }

    /// One bisection round with closure.
    fn round(&mut self, marked: impl Iterator<Item = usize>) {
        const NONE: u32 = u32::MAX;
        let n = self.triangles.len();
        let mut adjacency: EdgeMap<[u32; 2]> = EdgeMap::default();
        adjacency.reserve(n * 3 / 2 + 16);
        for (t, tri) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                let [a, b] = tri.edge(e);
                let slot = adjacency.entry(edge_key(a, b)).or_insert([NONE, NONE]);
                if slot[0] == NONE {
                    slot[0] = t as u32;
                } else {
                    slot[1] = t as u32;
                }
            }
        }

        let ref_key = |tri: &Triangle| {
            let [a, b] = tri.edge(tri.refinement_edge as usize);
            edge_key(a, b)
        };

        // Closure: any triangle with a marked edge gets its refinement edge marked.
        let mut split: EdgeMap<usize> = EdgeMap::default();
        let mut stack: Vec<usize> = marked.collect();
        while let Some(t) = stack.pop() {
            let key = ref_key(&self.triangles[t]);
            if split.contains_key(&key) {
                continue;
            }
            split.insert(key, usize::MAX);
            for &nb in &adjacency[&key] {
                if nb != NONE && nb as usize != t {
                    stack.push(nb as usize);
                }
            }
        }

        // Number new vertices in triangle order for determinism.
        for t in 0..n {
            let tri = self.triangles[t];
            for e in 0..3 {
                let [a, b] = tri.edge(e);
                let key = edge_key(a, b);
                if let Some(slot) = split.get_mut(&key) {
                    if *slot == usize::MAX {
                        *slot = self.vertices.len();
                        let m = midpoint(self.vertices[a], self.vertices[b]);
                        self.vertices.push(m);
                        let boundary = adjacency[&key][1] == NONE;
                        self.on_boundary.push(boundary);
                        if let Some(rho) = self.rho.as_mut() {
                            rho.push(if boundary {
                                0.0
                            } else {
                                self.domain.distance_to_boundary(m)
                            });
                        }
                    }
                }
            }
        }

        for t in 0..n {
            let tri = self.triangles[t];
            let [p0, p1, p2] = tri.newest_first();
            let Some(&m) = split.get(&edge_key(p1, p2)) else {
                continue;
            };
            let left = split.get(&edge_key(p0, p1)).copied();
            let right = split.get(&edge_key(p2, p0)).copied();
            let mut children: Vec<[usize; 3]> = Vec::with_capacity(4);
            match left {
                Some(m1) => {
                    children.push([m1, m, p0]);
                    children.push([m1, p1, m]);
                }
                None => children.push([m, p0, p1]),
            }
            match right {
                Some(m2) => {
                    children.push([m2, m, p2]);
                    children.push([m2, p0, m]);
                }
                None => children.push([m, p2, p0]),
            }
            self.triangles[t] = Triangle::new(children[0], 0);
            for c in &children[1..] {
                self.triangles.push(Triangle::new(*c, 0));
            }
        }
    }

    fn finish(self, level_h: f64) -> Result<Mesh> {
        Mesh::from_parts(
            self.domain.clone(),
            self.vertices,
            self.triangles,
            self.on_boundary,
            level_h,
        )
    }
}
