//! Volterra constructions: a single dislocation in a square, a triangle
//! carrying one dislocation with prescribed boundary data, and the assembly of
//! many such triangles into one body.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone_mesh::{CoreSlit, EdgeKey, IntrinsicMesh, MeshError};
use crate::geom::{perp, Vec2};
use crate::mesher::{boundary_distance, is_simple, weld, MesherError, WeldSpec, WeldedPatch};

/// Angle sums and shared lengths are compared at these tolerances.
pub const ANGLE_SUM_TOLERANCE: f64 = 1e-10;
pub const CLOSURE_TOLERANCE: f64 = 1e-9;
pub const VERTEX_ANGLE_TOLERANCE: f64 = 1e-8;
pub const EDGE_MATCH_TOLERANCE: f64 = 1e-9;
/// Below this gap a triangle is built flat.
pub const FLAT_GAP: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("angles sum to {0}, not pi")]
    AnglesDontSumToPi(f64),
    #[error("closure gap {got:?} does not match the prescribed Burgers vector {expected:?}")]
    InconsistentClosureGap { expected: [f64; 2], got: [f64; 2] },
    #[error("no placement keeps the dislocation core off the boundary")]
    CoreTouchesBoundary,
    #[error("the wedge does not fit inside the square")]
    WedgeDoesNotFit,
    #[error("vertex {vertex}: angle sum misses 2 pi by {residual}")]
    VertexAngleDefect { vertex: usize, residual: f64 },
    #[error("edge {edge}: lengths {a} and {b} disagree")]
    EdgeLengthMismatch { edge: EdgeKey, a: f64, b: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Mesher(#[from] MesherError),
}

/// `2 d sin(theta / 2)`.
pub fn burgers_magnitude(d: f64, theta: f64) -> f64 {
    assert!(
        d >= 0.0 && (0.0..=PI).contains(&theta),
        "d >= 0 and theta in [0, pi]"
    );
    2.0 * d * (0.5 * theta).sin()
}

/// Deficit and core length used for a defect of magnitude `b`.
pub fn dipole_parameters(b: f64) -> (f64, f64) {
    let theta = b.cbrt().clamp(f64::MIN_POSITIVE, PI / 4.0);
    (theta, b / (2.0 * (0.5 * theta).sin()))
}

/// The square `[-h, h]^2` with a wedge of angle `theta` removed at the origin
/// and inserted at distance `d`, both cut from the right edge.
pub fn single_dislocation_patch(
    halfwidth: f64,
    theta: f64,
    d: f64,
) -> Result<WeldedPatch, BuildError> {
    if !(theta > 0.0 && theta < PI / 2.0 && d > 0.0 && halfwidth > 0.0) {
        return Err(BuildError::InvalidInput(format!(
            "halfwidth {halfwidth}, theta {theta}, d {d}"
        )));
    }
    let h = halfwidth;
    let (s, depth) = (d * (0.5 * theta).sin(), d * (0.5 * theta).cos());
    if depth > 0.9 * h || s > 0.5 * h {
        return Err(BuildError::WedgeDoesNotFit);
    }
    let spec = WeldSpec {
        outer: vec![
            Vec2::new(h, s),
            Vec2::new(h, h),
            Vec2::new(-h, h),
            Vec2::new(-h, -h),
            Vec2::new(h, -h),
            Vec2::new(h, -s),
        ],
        wall_dir: Vec2::new(-1.0, 0.0),
        wall_depth: h - depth,
        theta,
        spacing: h / 4.0,
    };
    Ok(weld(&spec)?)
}

pub fn single_dislocation_plane(
    halfwidth: f64,
    theta: f64,
    d: f64,
) -> Result<IntrinsicMesh, BuildError> {
    Ok(single_dislocation_patch(halfwidth, theta, d)?.to_mesh()?)
}

/// A triangle with one interior dislocation, realized as a cone mesh.
#[derive(Debug, Clone)]
pub struct DislocatedTriangle {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub core: Option<CoreSlit>,
    pub mesh: IntrinsicMesh,
    /// Mesh ids of the corners A, B, C.
    pub corner_vertices: [usize; 3],
    /// Mesh ids of the midpoints of AB, BC, CA.
    pub midpoint_vertices: [usize; 3],
    /// Planar corners of every sub-triangle in the development.
    pub corner_coords: Vec<[Vec2; 3]>,
    /// Nominal corners `A = 0`, `B = (c, 0)`, `C` of the development.
    pub development: [Vec2; 3],
    /// `A' - A` of the development.
    pub gap: Vec2,
}

/// Open development `A, B, C, A'` with AB along the positive x-axis.
pub fn develop_boundary(a: f64, b: f64, c: f64, beta: f64, gamma: f64) -> [Vec2; 4] {
    let pa = Vec2::zeros();
    let pb = Vec2::new(c, 0.0);
    let d1 = PI - beta;
    let pc = pb + Vec2::new(d1.cos(), d1.sin()) * a;
    let d2 = 2.0 * PI - beta - gamma;
    let pa2 = pc + Vec2::new(d2.cos(), d2.sin()) * b;
    [pa, pb, pc, pa2]
}

/// Builds a dislocated triangle. `b_target` is the expected closure gap in
/// the frame where AB points along the positive x-axis.
pub fn dislocated_triangle(
    a: f64,
    b: f64,
    c: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    b_target: Vec2,
) -> Result<DislocatedTriangle, BuildError> {
    dislocated_triangle_with_theta(a, b, c, alpha, beta, gamma, b_target, None)
}

/// As [`dislocated_triangle`], optionally forcing the deficit angle.
#[allow(clippy::too_many_arguments)]
pub fn dislocated_triangle_with_theta(
    a: f64,
    b: f64,
    c: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    b_target: Vec2,
    theta: Option<f64>,
) -> Result<DislocatedTriangle, BuildError> {
    let sum = alpha + beta + gamma;
    if (sum - PI).abs() > ANGLE_SUM_TOLERANCE {
        return Err(BuildError::AnglesDontSumToPi(sum));
    }
    if [a, b, c].iter().any(|l| !(l.is_finite() && *l > 0.0))
        || [alpha, beta, gamma].iter().any(|t| *t <= 0.0)
    {
        return Err(BuildError::InvalidInput(
            "non-positive length or angle".into(),
        ));
    }
    let dev = develop_boundary(a, b, c, beta, gamma);
    let gap = dev[3] - dev[0];
    if (gap - b_target).norm() > CLOSURE_TOLERANCE {
        return Err(BuildError::InconsistentClosureGap {
            expected: [b_target.x, b_target.y],
            got: [gap.x, gap.y],
        });
    }
    let development = [dev[0], dev[1], dev[2]];
    let base = |mesh, core, corner_vertices, midpoint_vertices, corner_coords| DislocatedTriangle {
        a,
        b,
        c,
        alpha,
        beta,
        gamma,
        core,
        mesh,
        corner_vertices,
        midpoint_vertices,
        corner_coords,
        development,
        gap,
    };
    if gap.norm() <= FLAT_GAP {
        let [pa, pb, pc] = development;
        let mids = [(pa + pb) / 2.0, (pb + pc) / 2.0, (pc + pa) / 2.0];
        let tris = vec![[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]];
        let pos = [pa, pb, pc, mids[0], mids[1], mids[2]];
        let coords: Vec<[Vec2; 3]> = tris
            .iter()
            .map(|t| [pos[t[0]], pos[t[1]], pos[t[2]]])
            .collect();
        let sides: Vec<[f64; 3]> = coords
            .iter()
            .map(|q| {
                [
                    (q[1] - q[0]).norm(),
                    (q[2] - q[1]).norm(),
                    (q[0] - q[2]).norm(),
                ]
            })
            .collect();
        let mesh = IntrinsicMesh::from_triangle_lengths(6, tris, &sides, vec![])?;
        return Ok(base(mesh, None, [0, 1, 2], [3, 4, 5], coords));
    }
    let (theta, _) = match theta {
        Some(t) => (t, 0.0),
        None => dipole_parameters(gap.norm()),
    };
    let spec = place_core(&dev, theta)?;
    let patch = weld(&spec.spec)?;
    let mesh = patch.to_mesh()?;
    // outer = [mid(e), P(e+1), mid(e+1), P(e+2), mid(e+2), P(e+3), mid(e)+g]
    let mut corners = [0; 3];
    let mut mids = [0; 3];
    for j in 0..3 {
        corners[(spec.edge + 1 + j) % 3] = patch.outer_ids[2 * j + 1];
        mids[(spec.edge + j) % 3] = patch.outer_ids[2 * j];
    }
    Ok(base(
        mesh,
        Some(patch.core.clone()),
        corners,
        mids,
        patch.corner_coords,
    ))
}

struct Placement {
    spec: WeldSpec,
    edge: usize,
}

/// Chooses the cut edge and wall depth that keep the notch farthest from the
/// triangle's boundary.
fn place_core(dev: &[Vec2; 4], theta: f64) -> Result<Placement, BuildError> {
    let g = dev[3] - dev[0];
    let helix = |k: usize| dev[k % 3] + g * (k / 3) as f64;
    let min_side = (0..3)
        .map(|k| (helix(k + 1) - helix(k)).norm())
        .fold(f64::INFINITY, f64::min);
    let mut best: Option<(f64, Placement)> = None;
    for e in 0..3 {
        let (p0, p1) = (helix(e), helix(e + 1));
        let de = (p1 - p0).normalize();
        if g.dot(&de) > -0.25 * g.norm() {
            continue;
        }
        let outer: Vec<Vec2> = (0..7)
            .map(|j| {
                if j % 2 == 1 {
                    helix(e + 1 + j / 2)
                } else {
                    (helix(e + j / 2) + helix(e + j / 2 + 1)) / 2.0
                }
            })
            .collect();
        let closed = &outer[..];
        let n = perp(&de);
        let height = (helix(e + 2) - p0).dot(&n);
        for step in 1..40 {
            let t = height * step as f64 / 40.0;
            let spec = WeldSpec {
                outer: outer.clone(),
                wall_dir: n,
                wall_depth: t,
                theta,
                spacing: min_side / 3.0,
            };
            let notch = spec.notch();
            let clearance = [notch.r, notch.r_prime, notch.p]
                .iter()
                .map(|x| boundary_distance(x, closed))
                .fold(f64::INFINITY, f64::min);
            let better = best.as_ref().is_none_or(|(c, _)| clearance > *c);
            if better && clearance > 0.1 * notch.d && is_simple(&welded_outline(&spec)) {
                best = Some((clearance, Placement { spec, edge: e }));
            }
        }
    }
    best.map(|(_, p)| p).ok_or(BuildError::CoreTouchesBoundary)
}

fn welded_outline(spec: &WeldSpec) -> Vec<Vec2> {
    let n = spec.notch();
    let mut pts = spec.outer.clone();
    pts.extend([n.r_prime, n.p, n.r]);
    pts
}

/// Per-triangle boundary data for assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleData {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Closure gap in the frame where AB points along the positive x-axis.
    pub burgers: [f64; 2],
}

/// A triangulation with per-triangle lengths, angles and defects. For
/// `incidence[t] = [i, j, k]`: `c = |ij|`, `a = |jk|`, `b = |ki|`, and
/// `alpha`, `beta`, `gamma` are the angles at `i`, `j`, `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangulationData {
    pub triangles: Vec<TriangleData>,
    pub incidence: Vec<[usize; 3]>,
}

impl TriangulationData {
    pub fn num_vertices(&self) -> usize {
        self.incidence
            .iter()
            .flatten()
            .map(|v| v + 1)
            .max()
            .unwrap_or(0)
    }

    fn edge_counts(&self) -> BTreeMap<EdgeKey, usize> {
        let mut counts = BTreeMap::new();
        for t in &self.incidence {
            for k in 0..3 {
                *counts
                    .entry(EdgeKey::new(t[k], t[(k + 1) % 3]))
                    .or_insert(0) += 1;
            }
        }
        counts
    }

    /// Checks vertex angle sums and shared lengths.
    pub fn validate(&self) -> Result<(), BuildError> {
        if self.triangles.len() != self.incidence.len() {
            return Err(BuildError::InvalidInput(
                "triangle and incidence counts differ".into(),
            ));
        }
        let mut lengths: BTreeMap<EdgeKey, f64> = BTreeMap::new();
        for (t, inc) in self.triangles.iter().zip(&self.incidence) {
            for (k, l) in [t.c, t.a, t.b].into_iter().enumerate() {
                let key = EdgeKey::new(inc[k], inc[(k + 1) % 3]);
                if let Some(&prev) = lengths.get(&key) {
                    if (prev - l).abs() > EDGE_MATCH_TOLERANCE {
                        return Err(BuildError::EdgeLengthMismatch {
                            edge: key,
                            a: prev,
                            b: l,
                        });
                    }
                } else {
                    lengths.insert(key, l);
                }
            }
        }
        let counts = self.edge_counts();
        let nv = self.num_vertices();
        let mut boundary = vec![false; nv];
        for (e, &n) in &counts {
            if n == 1 {
                boundary[e.0] = true;
                boundary[e.1] = true;
            }
        }
        let mut sums = vec![0.0; nv];
        for (t, inc) in self.triangles.iter().zip(&self.incidence) {
            sums[inc[0]] += t.alpha;
            sums[inc[1]] += t.beta;
            sums[inc[2]] += t.gamma;
        }
        for v in 0..nv {
            let residual = sums[v] - 2.0 * PI;
            if !boundary[v] && residual.abs() > VERTEX_ANGLE_TOLERANCE {
                return Err(BuildError::VertexAngleDefect {
                    vertex: v,
                    residual,
                });
            }
        }
        Ok(())
    }
}

/// The glued body together with the bookkeeping needed to compare it with
/// its parent triangulation.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub mesh: IntrinsicMesh,
    /// Parent triangle of each mesh triangle.
    pub parent: Vec<usize>,
    /// Development coordinates of each mesh triangle's corners, in its
    /// parent's development frame.
    pub corner_coords: Vec<[Vec2; 3]>,
    /// Nominal development corners of each parent.
    pub development: Vec<[Vec2; 3]>,
    /// Index into `mesh.core_slits()` for each parent, if it has a core.
    pub parent_core: Vec<Option<usize>>,
}

/// Replaces every triangle of `data` by a dislocated triangle and glues them.
pub fn assemble(data: &TriangulationData) -> Result<Assembled, BuildError> {
    data.validate()?;
    let pieces: Vec<DislocatedTriangle> = data
        .triangles
        .par_iter()
        .map(|t| {
            dislocated_triangle(
                t.a,
                t.b,
                t.c,
                t.alpha,
                t.beta,
                t.gamma,
                Vec2::new(t.burgers[0], t.burgers[1]),
            )
        })
        .collect::<Result<_, _>>()?;
    let nv = data.num_vertices();
    let edge_ids: BTreeMap<EdgeKey, usize> = data
        .edge_counts()
        .keys()
        .enumerate()
        .map(|(k, e)| (*e, nv + k))
        .collect();
    let mut next = nv + edge_ids.len();
    let mut tris = Vec::new();
    let mut sides = Vec::new();
    let mut slits = Vec::new();
    let mut parent = Vec::new();
    let mut corner_coords = Vec::new();
    let mut development = Vec::new();
    let mut parent_core = Vec::new();
    for (t, (piece, inc)) in pieces.iter().zip(&data.incidence).enumerate() {
        let mut map = vec![usize::MAX; piece.mesh.num_vertices()];
        for k in 0..3 {
            map[piece.corner_vertices[k]] = inc[k];
            map[piece.midpoint_vertices[k]] = edge_ids[&EdgeKey::new(inc[k], inc[(k + 1) % 3])];
        }
        for m in map.iter_mut() {
            if *m == usize::MAX {
                *m = next;
                next += 1;
            }
        }
        for (s, tri) in piece.mesh.triangles().iter().enumerate() {
            tris.push([map[tri[0]], map[tri[1]], map[tri[2]]]);
            sides.push(piece.mesh.side_lengths(s));
        }
        parent.extend(std::iter::repeat_n(t, piece.mesh.num_triangles()));
        corner_coords.extend(piece.corner_coords.iter().copied());
        development.push(piece.development);
        parent_core.push(piece.core.as_ref().map(|c| {
            slits.push(CoreSlit {
                plus: map[c.plus],
                minus: map[c.minus],
                interior: c.interior.iter().map(|&v| map[v]).collect(),
                ..c.clone()
            });
            slits.len() - 1
        }));
    }
    let mesh =
        IntrinsicMesh::from_triangle_lengths(next, tris, &sides, slits).map_err(|e| match e {
            MeshError::GluedLengthMismatch { edge, a, b } => {
                BuildError::EdgeLengthMismatch { edge, a, b }
            }
            other => BuildError::Mesh(other),
        })?;
    for v in 0..nv {
        if let Ok(defect) = mesh.cone_deficit(v) {
            if defect.abs() > VERTEX_ANGLE_TOLERANCE {
                return Err(BuildError::VertexAngleDefect {
                    vertex: v,
                    residual: -defect,
                });
            }
        }
    }
    Ok(Assembled {
        mesh,
        parent,
        corner_coords,
        development,
        parent_core,
    })
}
