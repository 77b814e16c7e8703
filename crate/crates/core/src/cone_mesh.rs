//! Intrinsic piecewise-flat surfaces with cone points.
//!
//! A mesh is connectivity plus one length per edge; there are no vertex
//! coordinates. Every triangle carries a canonical local chart (vertex 0 at the
//! origin, vertex 1 on the positive x-axis, vertex 2 above it), and anything
//! planar (transport, Burgers sums, differentials of maps) is obtained by
//! unfolding those charts along strips of adjacent triangles.
//!
//! Dislocation cores are edges joining the two cone points of a curvature
//! dipole. Discrete paths may not cross them, which is what makes the
//! Levi-Civita transport path independent away from the cores.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{angle_from_lengths, triangle_area, wrap_angle, Rigid, Vec2};

/// Glued edges must agree to this absolute tolerance.
pub const GLUE_TOLERANCE: f64 = 1e-9;
/// Slit endpoints must carry their declared deficits to this tolerance.
pub const SLIT_DEFICIT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("triangle {0} violates the strict triangle inequality")]
    TriangleInequalityViolation(usize),
    #[error("edge {0} is shared by more than two triangles")]
    NonManifoldEdge(EdgeKey),
    #[error("vertex {0} has a disconnected or branched link")]
    NonManifoldVertex(usize),
    #[error("edge {0} is traversed in the same direction by both of its triangles")]
    InconsistentOrientation(EdgeKey),
    #[error("triangle {0} references a vertex out of range or repeats a vertex")]
    BadTriangle(usize),
    #[error("edge {0} has no length")]
    MissingEdgeLength(EdgeKey),
    #[error("edge {0} has a non-positive or non-finite length")]
    NonPositiveLength(EdgeKey),
    #[error("edge {edge}: glued sides disagree ({a} vs {b})")]
    GluedLengthMismatch { edge: EdgeKey, a: f64, b: f64 },
    #[error("core slit {0} does not join two vertices by an interior edge")]
    SlitNotAnEdge(usize),
    #[error("core slit {slit}: deficits {plus} / {minus} do not match theta {theta}")]
    SlitDeficitMismatch {
        slit: usize,
        plus: f64,
        minus: f64,
        theta: f64,
    },
    #[error("vertex {0} lies on the boundary; its cone deficit is undefined")]
    BoundaryVertex(usize),
    #[error("triangles {0} and {1} do not share an edge")]
    NotAdjacent(usize, usize),
    #[error("path step {0} -> {1} crosses a dislocation core")]
    CrossesCoreSlit(usize, usize),
    #[error("circuit is not closed")]
    OpenCircuit,
    #[error("path is empty")]
    EmptyPath,
    #[error("malformed mesh file: {0}")]
    Format(String),
}

/// Unordered vertex pair, stored with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey(pub usize, pub usize);

impl EdgeKey {
    pub fn new(a: usize, b: usize) -> Self {
        if a < b {
            EdgeKey(a, b)
        } else {
            EdgeKey(b, a)
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

/// A curvature dipole: `plus` carries deficit `+theta`, `minus` carries `-theta`,
/// and the straight chain of edges between them (length `d`) is the core.
/// `interior` lists the flat vertices on that chain, empty for a single edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreSlit {
    pub plus: usize,
    pub minus: usize,
    pub theta: f64,
    pub d: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interior: Vec<usize>,
}

impl CoreSlit {
    pub fn new(plus: usize, minus: usize, theta: f64, d: f64) -> Self {
        CoreSlit {
            plus,
            minus,
            theta,
            d,
            interior: Vec::new(),
        }
    }

    /// Vertices along the core from `plus` to `minus`.
    pub fn chain(&self) -> Vec<usize> {
        let mut c = vec![self.plus];
        c.extend(&self.interior);
        c.push(self.minus);
        c
    }
}

/// A strip of triangles, consecutive ones sharing an edge. Closed when the
/// last triangle equals the first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub triangles: Vec<usize>,
}

impl DiscretePath {
    pub fn new(triangles: Vec<usize>) -> Self {
        DiscretePath { triangles }
    }

    pub fn is_closed(&self) -> bool {
        self.triangles.len() > 1 && self.triangles.first() == self.triangles.last()
    }

    /// Concatenation; `other` must start where `self` ends.
    pub fn then(&self, other: &DiscretePath) -> DiscretePath {
        let mut t = self.triangles.clone();
        t.extend(other.triangles.iter().skip(1));
        DiscretePath::new(t)
    }

    pub fn reversed(&self) -> DiscretePath {
        let mut t = self.triangles.clone();
        t.reverse();
        DiscretePath::new(t)
    }

    /// Same closed circuit starting from position `k`.
    pub fn rebased(&self, k: usize) -> DiscretePath {
        let body = &self.triangles[..self.triangles.len() - 1];
        let k = k % body.len();
        let mut t: Vec<usize> = body[k..].iter().chain(body[..k].iter()).copied().collect();
        t.push(t[0]);
        DiscretePath::new(t)
    }
}

#[derive(Debug, Clone)]
pub struct IntrinsicMesh {
    num_vertices: usize,
    triangles: Vec<[usize; 3]>,
    edge_lengths: BTreeMap<EdgeKey, f64>,
    core_slits: Vec<CoreSlit>,
    edge_faces: BTreeMap<EdgeKey, Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
    boundary_loops: Vec<Vec<(usize, usize)>>,
    slit_edges: HashSet<EdgeKey>,
}

/// Builds and validates a mesh from connectivity and one length per edge.
pub fn build_mesh(
    num_vertices: usize,
    triangles: Vec<[usize; 3]>,
    edge_lengths: BTreeMap<EdgeKey, f64>,
    core_slits: Vec<CoreSlit>,
) -> Result<IntrinsicMesh, MeshError> {
    IntrinsicMesh::new(num_vertices, triangles, edge_lengths, core_slits)
}

impl IntrinsicMesh {
    pub fn new(
        num_vertices: usize,
        triangles: Vec<[usize; 3]>,
        edge_lengths: BTreeMap<EdgeKey, f64>,
        core_slits: Vec<CoreSlit>,
    ) -> Result<Self, MeshError> {
        let mut edge_faces: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
        let mut directed: HashSet<(usize, usize)> = HashSet::new();
        let mut vertex_faces = vec![Vec::new(); num_vertices];
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            if a >= num_vertices
                || b >= num_vertices
                || c >= num_vertices
                || a == b
                || b == c
                || a == c
            {
                return Err(MeshError::BadTriangle(t));
            }
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                let key = EdgeKey::new(u, v);
                if !directed.insert((u, v)) {
                    return Err(MeshError::InconsistentOrientation(key));
                }
                let faces = edge_faces.entry(key).or_default();
                faces.push(t);
                if faces.len() > 2 {
                    return Err(MeshError::NonManifoldEdge(key));
                }
                vertex_faces[tri[k]].push(t);
            }
        }
        for key in edge_faces.keys() {
            match edge_lengths.get(key) {
                None => return Err(MeshError::MissingEdgeLength(*key)),
                Some(l) if !(l.is_finite() && *l > 0.0) => {
                    return Err(MeshError::NonPositiveLength(*key))
                }
                _ => {}
            }
        }
        let mut mesh = IntrinsicMesh {
            num_vertices,
            triangles,
            edge_lengths,
            core_slits,
            edge_faces,
            vertex_faces,
            boundary_loops: Vec::new(),
            slit_edges: HashSet::new(),
        };
        for t in 0..mesh.triangles.len() {
            let [l0, l1, l2] = mesh.side_lengths(t);
            if !(l0 < l1 + l2 && l1 < l0 + l2 && l2 < l0 + l1) {
                return Err(MeshError::TriangleInequalityViolation(t));
            }
        }
        for v in 0..num_vertices {
            if !mesh.vertex_faces[v].is_empty() {
                mesh.check_vertex_link(v)?;
            }
        }
        mesh.boundary_loops = mesh.trace_boundary_loops();
        for (i, s) in mesh.core_slits.clone().iter().enumerate() {
            let chain = s.chain();
            for w in chain.windows(2) {
                let key = EdgeKey::new(w[0], w[1]);
                if w[0] == w[1] || mesh.edge_faces.get(&key).map(|f| f.len()) != Some(2) {
                    return Err(MeshError::SlitNotAnEdge(i));
                }
                mesh.slit_edges.insert(key);
            }
            let plus = mesh
                .cone_deficit(s.plus)
                .map_err(|_| MeshError::SlitNotAnEdge(i))?;
            let minus = mesh
                .cone_deficit(s.minus)
                .map_err(|_| MeshError::SlitNotAnEdge(i))?;
            if (plus - s.theta).abs() > SLIT_DEFICIT_TOLERANCE
                || (minus + s.theta).abs() > SLIT_DEFICIT_TOLERANCE
            {
                return Err(MeshError::SlitDeficitMismatch {
                    slit: i,
                    plus,
                    minus,
                    theta: s.theta,
                });
            }
        }
        Ok(mesh)
    }

    /// Builds a mesh from per-triangle side lengths `[l01, l12, l20]`, merging
    /// glued edges (which must agree within [`GLUE_TOLERANCE`]).
    pub fn from_triangle_lengths(
        num_vertices: usize,
        triangles: Vec<[usize; 3]>,
        sides: &[[f64; 3]],
        core_slits: Vec<CoreSlit>,
    ) -> Result<Self, MeshError> {
        let mut lengths: BTreeMap<EdgeKey, f64> = BTreeMap::new();
        for (tri, l) in triangles.iter().zip(sides) {
            for k in 0..3 {
                let key = EdgeKey::new(tri[k], tri[(k + 1) % 3]);
                match lengths.get(&key) {
                    Some(&prev) if (prev - l[k]).abs() > GLUE_TOLERANCE => {
                        return Err(MeshError::GluedLengthMismatch {
                            edge: key,
                            a: prev,
                            b: l[k],
                        })
                    }
                    Some(_) => {}
                    None => {
                        lengths.insert(key, l[k]);
                    }
                }
            }
        }
        Self::new(num_vertices, triangles, lengths, core_slits)
    }

    fn check_vertex_link(&self, v: usize) -> Result<(), MeshError> {
        // The link of v is a set of segments (one per incident triangle);
        // it must form a single path or a single cycle.
        let faces = &self.vertex_faces[v];
        let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
        let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &t in faces {
            let (a, b) = self.link_segment(t, v);
            *degree.entry(a).or_default() += 1;
            *degree.entry(b).or_default() += 1;
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        if degree.values().any(|&d| d > 2) {
            return Err(MeshError::NonManifoldVertex(v));
        }
        let ends = degree.values().filter(|&&d| d == 1).count();
        if ends != 0 && ends != 2 {
            return Err(MeshError::NonManifoldVertex(v));
        }
        let start = *adj.keys().next().expect("vertex has faces");
        let mut seen = HashSet::new();
        let mut stack = vec![start];
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                stack.extend(adj[&x].iter().copied());
            }
        }
        if seen.len() != adj.len() {
            return Err(MeshError::NonManifoldVertex(v));
        }
        Ok(())
    }

    /// The two other vertices of triangle `t`, in winding order after `v`.
    fn link_segment(&self, t: usize, v: usize) -> (usize, usize) {
        let k = self.corner_of(t, v).expect("vertex in triangle");
        let tri = self.triangles[t];
        (tri[(k + 1) % 3], tri[(k + 2) % 3])
    }

    fn trace_boundary_loops(&self) -> Vec<Vec<(usize, usize)>> {
        let mut next: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (key, faces) in &self.edge_faces {
            if faces.len() == 1 {
                let tri = self.triangles[faces[0]];
                for k in 0..3 {
                    let (u, v) = (tri[k], tri[(k + 1) % 3]);
                    if EdgeKey::new(u, v) == *key {
                        next.insert(u, (u, v));
                    }
                }
            }
        }
        let mut loops = Vec::new();
        let mut used = HashSet::new();
        for &start in next.keys() {
            if used.contains(&start) {
                continue;
            }
            let mut lp = Vec::new();
            let mut cur = start;
            while used.insert(cur) {
                let he = next[&cur];
                lp.push(he);
                cur = he.1;
            }
            loops.push(lp);
        }
        loops
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn edge_lengths(&self) -> &BTreeMap<EdgeKey, f64> {
        &self.edge_lengths
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        self.edge_lengths[&EdgeKey::new(a, b)]
    }

    pub fn core_slits(&self) -> &[CoreSlit] {
        &self.core_slits
    }

    pub fn boundary_loops(&self) -> &[Vec<(usize, usize)>] {
        &self.boundary_loops
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn edge_triangles(&self, a: usize, b: usize) -> &[usize] {
        self.edge_faces
            .get(&EdgeKey::new(a, b))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EdgeKey, &Vec<usize>)> {
        self.edge_faces.iter()
    }

    pub fn is_slit_edge(&self, a: usize, b: usize) -> bool {
        self.slit_edges.contains(&EdgeKey::new(a, b))
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_faces[v].iter().any(|&t| {
            let (a, b) = self.link_segment(t, v);
            self.edge_triangles(v, a).len() == 1 || self.edge_triangles(v, b).len() == 1
        })
    }

    pub fn corner_of(&self, t: usize, v: usize) -> Option<usize> {
        self.triangles[t].iter().position(|&x| x == v)
    }

    /// Side lengths `[l01, l12, l20]` of triangle `t`.
    pub fn side_lengths(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.edge_length(a, b),
            self.edge_length(b, c),
            self.edge_length(c, a),
        ]
    }

    /// Interior angle at `corner` (0, 1 or 2) of triangle `t`.
    pub fn corner_angle(&self, t: usize, corner: usize) -> f64 {
        let l = self.side_lengths(t);
        // side k joins corners k and k+1; the side opposite corner k is k+1.
        let opp = l[(corner + 1) % 3];
        let adj1 = l[corner];
        let adj2 = l[(corner + 2) % 3];
        angle_from_lengths(adj1, adj2, opp)
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.side_lengths(t);
        triangle_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Sum of incident corner angles at `v`.
    pub fn angle_sum(&self, v: usize) -> f64 {
        self.vertex_faces[v]
            .iter()
            .map(|&t| self.corner_angle(t, self.corner_of(t, v).expect("incident")))
            .sum()
    }

    /// `2 pi` minus the angle sum; only defined at interior vertices.
    pub fn cone_deficit(&self, v: usize) -> Result<f64, MeshError> {
        if self.is_boundary_vertex(v) {
            return Err(MeshError::BoundaryVertex(v));
        }
        Ok(2.0 * PI - self.angle_sum(v))
    }

    /// `pi` minus the angle sum at a boundary vertex (geodesic turning).
    pub fn boundary_turning(&self, v: usize) -> f64 {
        PI - self.angle_sum(v)
    }

    /// Interior vertices whose |deficit| exceeds `tol`.
    pub fn singular_vertices(&self, tol: f64) -> Vec<usize> {
        (0..self.num_vertices)
            .filter(|&v| !self.vertex_faces[v].is_empty())
            .filter(|&v| self.cone_deficit(v).map(|d| d.abs() > tol).unwrap_or(false))
            .collect()
    }

    /// Vertex positions of triangle `t` in its canonical local chart.
    pub fn local_coords(&self, t: usize) -> [Vec2; 3] {
        let [l01, _, l20] = self.side_lengths(t);
        let a0 = self.corner_angle(t, 0);
        [
            Vec2::zeros(),
            Vec2::new(l01, 0.0),
            Vec2::new(l20 * a0.cos(), l20 * a0.sin()),
        ]
    }

    /// The triangle on the other side of edge `(a, b)` from `t`.
    pub fn neighbor_across(&self, t: usize, a: usize, b: usize) -> Option<usize> {
        self.edge_triangles(a, b).iter().copied().find(|&s| s != t)
    }

    pub fn shared_edge(&self, t: usize, s: usize) -> Option<(usize, usize)> {
        let tri = self.triangles[t];
        (0..3)
            .map(|k| (tri[k], tri[(k + 1) % 3]))
            .find(|&(a, b)| self.edge_triangles(a, b).contains(&s) && s != t)
    }

    /// Rigid motion taking coordinates in `from`'s local chart to `to`'s, for
    /// two triangles sharing an edge (the unfolding across that edge).
    pub fn transition(&self, from: usize, to: usize) -> Result<Rigid, MeshError> {
        let (a, b) = self
            .shared_edge(from, to)
            .ok_or(MeshError::NotAdjacent(from, to))?;
        let pf = self.local_coords(from);
        let pt = self.local_coords(to);
        let cf = |v| pf[self.corner_of(from, v).expect("shared")];
        let ct = |v| pt[self.corner_of(to, v).expect("shared")];
        Ok(Rigid::aligning(&cf(a), &cf(b), &ct(a), &ct(b)))
    }

    fn checked_step(&self, from: usize, to: usize) -> Result<Rigid, MeshError> {
        let (a, b) = self
            .shared_edge(from, to)
            .ok_or(MeshError::NotAdjacent(from, to))?;
        if self.is_slit_edge(a, b) {
            return Err(MeshError::CrossesCoreSlit(from, to));
        }
        self.transition(from, to)
    }

    /// Maps from each path triangle's chart into the start triangle's chart.
    pub fn develop(&self, path: &DiscretePath) -> Result<Vec<Rigid>, MeshError> {
        let tris = &path.triangles;
        if tris.is_empty() {
            return Err(MeshError::EmptyPath);
        }
        let mut maps = Vec::with_capacity(tris.len());
        maps.push(Rigid::identity());
        for w in tris.windows(2) {
            let step = self.checked_step(w[0], w[1])?.inverse();
            let prev = *maps.last().expect("non-empty");
            maps.push(prev.compose(&step));
        }
        Ok(maps)
    }

    /// Discrete Levi-Civita transport along a strip: a vector with chart
    /// coordinates `w` in the first triangle arrives with coordinates
    /// `R(angle) w` in the last. For a closed path this is the holonomy.
    pub fn transport_along(&self, path: &DiscretePath) -> Result<f64, MeshError> {
        let maps = self.develop(path)?;
        Ok(wrap_angle(-maps.last().expect("non-empty").angle))
    }

    /// Burgers vector of a closed circuit, in the chart of the triangle at
    /// position `basepoint` of the circuit. The curve runs from that
    /// triangle's centroid through the midpoints of the crossed edges and back
    /// to the centroid of the returning copy.
    pub fn burgers_vector(
        &self,
        circuit: &DiscretePath,
        basepoint: usize,
    ) -> Result<Vec2, MeshError> {
        if !circuit.is_closed() {
            return Err(MeshError::OpenCircuit);
        }
        let path = circuit.rebased(basepoint);
        let maps = self.develop(&path)?;
        let t0 = path.triangles[0];
        let p0 = self.local_coords(t0);
        let start = (p0[0] + p0[1] + p0[2]) / 3.0;
        let mut prev = start;
        let mut sum = Vec2::zeros();
        for (i, w) in path.triangles.windows(2).enumerate() {
            let (a, b) = self.shared_edge(w[0], w[1]).expect("checked by develop");
            let pc = self.local_coords(w[0]);
            let mid =
                (pc[self.corner_of(w[0], a).unwrap()] + pc[self.corner_of(w[0], b).unwrap()]) / 2.0;
            let x = maps[i].apply(&mid);
            sum += x - prev;
            prev = x;
        }
        let end = maps.last().expect("non-empty").apply(&start);
        sum += end - prev;
        Ok(sum)
    }

    /// A closed strip hugging boundary loop `index`, running counter-clockwise
    /// through the fans of the boundary vertices. It encloses every interior
    /// vertex bounded by that loop.
    pub fn boundary_circuit(&self, index: usize) -> Result<DiscretePath, MeshError> {
        let lp = &self.boundary_loops[index];
        let face_of = |(u, v): (usize, usize)| self.edge_triangles(u, v)[0];
        let mut tris = vec![face_of(lp[0])];
        for i in 0..lp.len() {
            let (u, v) = lp[i];
            let target = face_of(lp[(i + 1) % lp.len()]);
            let mut cur = face_of((u, v));
            let mut from = u;
            while cur != target {
                // Rotate around v through the edge (v, x) not yet crossed.
                let tri = self.triangles[cur];
                let x = tri
                    .iter()
                    .copied()
                    .find(|&x| x != v && x != from)
                    .expect("third vertex");
                if self.is_slit_edge(v, x) {
                    return Err(MeshError::CrossesCoreSlit(cur, cur));
                }
                let next = self
                    .neighbor_across(cur, v, x)
                    .ok_or(MeshError::NotAdjacent(cur, cur))?;
                tris.push(next);
                from = x;
                cur = next;
            }
            if *tris.last().unwrap() != target {
                tris.push(target);
            }
        }
        if tris.len() < 2 || tris.first() != tris.last() {
            tris.push(tris[0]);
        }
        tris.dedup();
        Ok(DiscretePath::new(tris))
    }

    /// Closed strip around interior vertex `v`, counter-clockwise.
    pub fn vertex_circuit(&self, v: usize) -> Result<DiscretePath, MeshError> {
        if self.is_boundary_vertex(v) {
            return Err(MeshError::BoundaryVertex(v));
        }
        let start = self.vertex_faces[v][0];
        let mut tris = vec![start];
        let mut cur = start;
        loop {
            // Counter-clockwise around v: leave through edge (v, previous-in-winding).
            let k = self.corner_of(cur, v).unwrap();
            let x = self.triangles[cur][(k + 2) % 3];
            let next = self.neighbor_across(cur, v, x).expect("interior vertex");
            tris.push(next);
            if next == start {
                break;
            }
            cur = next;
        }
        Ok(DiscretePath::new(tris))
    }

    /// Splits every triangle into four through its edge midpoints. Old
    /// vertices keep their ids; the midpoint of the `k`-th edge (in key
    /// order) gets id `num_vertices + k`.
    pub fn subdivide(&self) -> IntrinsicMesh {
        let mid: BTreeMap<EdgeKey, usize> = self
            .edge_faces
            .keys()
            .enumerate()
            .map(|(k, e)| (*e, self.num_vertices + k))
            .collect();
        let m = |a: usize, b: usize| mid[&EdgeKey::new(a, b)];
        let mut tris = Vec::with_capacity(4 * self.triangles.len());
        let mut sides = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let [lab, lbc, lca] = self.side_lengths(t);
            let (mab, mbc, mca) = (m(a, b), m(b, c), m(c, a));
            tris.extend([[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]]);
            sides.extend([
                [lab / 2.0, lbc / 2.0, lca / 2.0],
                [lab / 2.0, lbc / 2.0, lca / 2.0],
                [lab / 2.0, lbc / 2.0, lca / 2.0],
                [lca / 2.0, lab / 2.0, lbc / 2.0],
            ]);
        }
        let slits = self
            .core_slits
            .iter()
            .map(|s| {
                let chain = s.chain();
                let mut interior = Vec::new();
                for w in chain.windows(2) {
                    if w[0] != s.plus {
                        interior.push(w[0]);
                    }
                    interior.push(m(w[0], w[1]));
                }
                CoreSlit {
                    interior,
                    ..s.clone()
                }
            })
            .collect();
        IntrinsicMesh::from_triangle_lengths(self.num_vertices + mid.len(), tris, &sides, slits)
            .expect("subdivision preserves validity")
    }

    pub fn to_file(&self) -> MeshFile {
        MeshFile {
            vertices: self.num_vertices,
            triangles: self.triangles.clone(),
            edge_lengths: self
                .edge_lengths
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            core_slits: self.core_slits.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("mesh serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        let file: MeshFile =
            serde_json::from_str(text).map_err(|e| MeshError::Format(e.to_string()))?;
        file.into_mesh()
    }
}

/// On-disk mesh layout; edge keys are `"i-j"` with `i < j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: usize,
    pub triangles: Vec<[usize; 3]>,
    pub edge_lengths: BTreeMap<String, f64>,
    #[serde(default)]
    pub core_slits: Vec<CoreSlit>,
}

impl MeshFile {
    pub fn into_mesh(self) -> Result<IntrinsicMesh, MeshError> {
        let mut lengths = BTreeMap::new();
        for (k, v) in self.edge_lengths {
            let (a, b) = k
                .split_once('-')
                .ok_or_else(|| MeshError::Format(format!("bad edge key {k}")))?;
            let a: usize = a
                .trim()
                .parse()
                .map_err(|_| MeshError::Format(format!("bad edge key {k}")))?;
            let b: usize = b
                .trim()
                .parse()
                .map_err(|_| MeshError::Format(format!("bad edge key {k}")))?;
            lengths.insert(EdgeKey::new(a, b), v);
        }
        IntrinsicMesh::new(self.vertices, self.triangles, lengths, self.core_slits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lengths(pairs: &[((usize, usize), f64)]) -> BTreeMap<EdgeKey, f64> {
        pairs
            .iter()
            .map(|&((a, b), l)| (EdgeKey::new(a, b), l))
            .collect()
    }

    /// Fan of `k` unit equilateral triangles around vertex 0, closed up.
    pub(crate) fn equilateral_fan(k: usize) -> IntrinsicMesh {
        let tris: Vec<[usize; 3]> = (0..k).map(|i| [0, 1 + i, 1 + (i + 1) % k]).collect();
        let mut l = BTreeMap::new();
        for t in &tris {
            for j in 0..3 {
                l.insert(EdgeKey::new(t[j], t[(j + 1) % 3]), 1.0);
            }
        }
        build_mesh(k + 1, tris, l, vec![]).unwrap()
    }

    #[test]
    fn two_glued_equilateral_triangles() {
        let m = build_mesh(
            4,
            vec![[0, 1, 2], [2, 1, 3]],
            lengths(&[
                ((0, 1), 1.0),
                ((1, 2), 1.0),
                ((2, 0), 1.0),
                ((1, 3), 1.0),
                ((3, 2), 1.0),
            ]),
            vec![],
        )
        .unwrap();
        assert!(m.singular_vertices(1e-12).is_empty());
        assert_eq!(m.boundary_loops().len(), 1);
        assert_eq!(m.boundary_loops()[0].len(), 4);
    }

    #[test]
    fn rejects_degenerate_triangle() {
        let err = build_mesh(
            3,
            vec![[0, 1, 2]],
            lengths(&[((0, 1), 1.0), ((1, 2), 1.0), ((0, 2), 3.0)]),
            vec![],
        );
        assert_eq!(err.unwrap_err(), MeshError::TriangleInequalityViolation(0));
    }

    #[test]
    fn rejects_flipped_neighbor() {
        let err = build_mesh(
            4,
            vec![[0, 1, 2], [1, 2, 3]],
            lengths(&[
                ((0, 1), 1.0),
                ((1, 2), 1.0),
                ((2, 0), 1.0),
                ((1, 3), 1.0),
                ((3, 2), 1.0),
            ]),
            vec![],
        );
        assert!(matches!(err, Err(MeshError::InconsistentOrientation(_))));
    }

    #[test]
    fn rejects_three_triangles_on_an_edge() {
        let mut l = BTreeMap::new();
        for (a, b) in [(0, 1), (1, 2), (2, 0), (1, 3), (3, 0), (1, 4), (4, 0)] {
            l.insert(EdgeKey::new(a, b), 1.0);
        }
        let err = build_mesh(5, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]], l, vec![]);
        assert!(err.is_err());
    }

    #[test]
    fn corner_angles() {
        let m = build_mesh(
            3,
            vec![[0, 1, 2]],
            lengths(&[((0, 1), 3.0), ((1, 2), 5.0), ((2, 0), 4.0)]),
            vec![],
        )
        .unwrap();
        // corner 0 is opposite side 1-2 (length 5)
        assert!((m.corner_angle(0, 0) - PI / 2.0).abs() < 1e-15);
        let m = build_mesh(
            3,
            vec![[0, 1, 2]],
            lengths(&[((0, 1), 2.0), ((1, 2), 3.0), ((2, 0), 2.0)]),
            vec![],
        )
        .unwrap();
        assert!((m.corner_angle(0, 0) - (-1.0f64 / 8.0).acos()).abs() < 1e-14);
        let s: f64 = (0..3).map(|k| m.corner_angle(0, k)).sum();
        assert!((s - PI).abs() < 1e-15);
    }

    #[test]
    fn fan_deficits() {
        let flat = equilateral_fan(6);
        assert!(flat.cone_deficit(0).unwrap().abs() < 1e-14);
        let cone = equilateral_fan(5);
        assert!((cone.cone_deficit(0).unwrap() - PI / 3.0).abs() < 1e-14);
        assert_eq!(cone.cone_deficit(1), Err(MeshError::BoundaryVertex(1)));
    }

    #[test]
    fn holonomy_around_cone_equals_deficit() {
        for k in [4, 5, 6, 7] {
            let m = equilateral_fan(k);
            let c = m.vertex_circuit(0).unwrap();
            let h = m.transport_along(&c).unwrap();
            let deficit = m.cone_deficit(0).unwrap();
            assert!(
                (wrap_angle(h - deficit)).abs() < 1e-13,
                "k={k} h={h} deficit={deficit}"
            );
            // reversed loop gives the opposite rotation
            let hr = m.transport_along(&c.reversed()).unwrap();
            assert!((wrap_angle(hr + deficit)).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_fan_burgers_vanishes() {
        let m = equilateral_fan(6);
        let c = m.boundary_circuit(0).unwrap();
        assert!(c.is_closed());
        assert!(m.transport_along(&c).unwrap().abs() < 1e-13);
        assert!(m.burgers_vector(&c, 0).unwrap().norm() < 1e-14);
    }

    #[test]
    fn open_circuit_rejected() {
        let m = equilateral_fan(6);
        assert_eq!(
            m.burgers_vector(&DiscretePath::new(vec![0, 1]), 0),
            Err(MeshError::OpenCircuit)
        );
        assert_eq!(
            m.transport_along(&DiscretePath::new(vec![0, 3])),
            Err(MeshError::NotAdjacent(0, 3))
        );
    }

    #[test]
    fn subdivision_keeps_deficits() {
        let m = equilateral_fan(5).subdivide();
        assert_eq!(m.num_triangles(), 20);
        assert!((m.cone_deficit(0).unwrap() - PI / 3.0).abs() < 1e-13);
        assert_eq!(m.singular_vertices(1e-12), vec![0]);
        assert!((m.total_area() - equilateral_fan(5).total_area()).abs() < 1e-14);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let m = build_mesh(
            3,
            vec![[0, 1, 2]],
            lengths(&[
                ((0, 1), 0.1 + 0.2),
                ((1, 2), 1.0 / 3.0),
                ((2, 0), std::f64::consts::E / 7.0),
            ]),
            vec![],
        )
        .unwrap();
        let back = IntrinsicMesh::from_json(&m.to_json()).unwrap();
        assert_eq!(back.edge_lengths(), m.edge_lengths());
    }
}
