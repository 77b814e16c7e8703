//! Planar cut-and-weld patches.
//!
//! A patch starts from an open planar polygon whose boundary runs from `q0`
//! counter-clockwise around to `q1 = q0 + g`. Two parallel walls of equal depth
//! go inward from `q0` and `q1` to `r` and `r' = r + g`, and a notch `r' p r`
//! with `|p r| = |p r'| = d` closes the region. Welding `q0 ~ q1`, the walls,
//! and `p r ~ p r'` yields a surface with deficit `+theta` at `p`, `-theta` at
//! `r`, and Burgers vector `g` around its boundary.

use std::collections::{BTreeMap, HashMap};

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::cone_mesh::{CoreSlit, EdgeKey, IntrinsicMesh, MeshError};
use crate::geom::{cross, perp, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MesherError {
    #[error("the welded polygon is not simple")]
    SelfIntersecting,
    #[error("the welded polygon is not counter-clockwise")]
    WrongOrientation,
    #[error("the gap is too small to weld")]
    DegenerateGap,
    #[error("delaunay triangulation failed: {0}")]
    Triangulation(String),
    #[error("could not remove duplicate welded edges")]
    WeldCollision,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Inputs for [`weld`].
#[derive(Debug, Clone)]
pub struct WeldSpec {
    /// Open boundary, `outer[0] = q0`, `outer.last() = q1`.
    pub outer: Vec<Vec2>,
    /// Unit inward direction of both walls.
    pub wall_dir: Vec2,
    pub wall_depth: f64,
    pub theta: f64,
    /// Target spacing of interior Steiner points.
    pub spacing: f64,
}

/// Geometry of the notch, before triangulation.
#[derive(Debug, Clone, Copy)]
pub struct Notch {
    pub r: Vec2,
    pub r_prime: Vec2,
    pub p: Vec2,
    pub d: f64,
}

impl WeldSpec {
    pub fn gap(&self) -> Vec2 {
        self.outer[self.outer.len() - 1] - self.outer[0]
    }

    pub fn notch(&self) -> Notch {
        let g = self.gap();
        let half = 0.5 * self.theta;
        let d = g.norm() / (2.0 * half.sin());
        let r = self.outer[0] + self.wall_dir * self.wall_depth;
        let r_prime = r + g;
        let mut w = perp(&g).normalize();
        if w.dot(&self.wall_dir) < 0.0 {
            w = -w;
        }
        let p = (r + r_prime) * 0.5 + w * (d * half.cos());
        Notch { r, r_prime, p, d }
    }

    /// Closed polygon `q0, .., q1, (wall'), r', p, r, (wall)` with the
    /// polygon index of each vertex's weld partner.
    fn polygon(&self) -> (Vec<Vec2>, Vec<Option<usize>>, usize, usize) {
        let n = self.notch();
        let segs = ((self.wall_depth / self.spacing).ceil() as usize).max(1);
        let mut pts = self.outer.clone();
        let q1 = pts.len() - 1;
        let g = self.gap();
        // wall from q1 inward to r'
        let wall_prime: Vec<usize> = (1..segs)
            .map(|k| {
                pts.push(
                    self.outer[q1] + self.wall_dir * (self.wall_depth * k as f64 / segs as f64),
                );
                pts.len() - 1
            })
            .collect();
        pts.push(n.r_prime);
        let rp = pts.len() - 1;
        pts.push(n.p);
        let p = pts.len() - 1;
        pts.push(n.r);
        let r = pts.len() - 1;
        // wall from r back out to q0; its points are translates of wall_prime by -g
        let wall: Vec<usize> = wall_prime
            .iter()
            .rev()
            .map(|&i| {
                pts.push(pts[i] - g);
                pts.len() - 1
            })
            .collect();
        let mut partner = vec![None; pts.len()];
        partner[q1] = Some(0);
        partner[rp] = Some(r);
        for (a, b) in wall_prime.iter().zip(wall.iter().rev()) {
            partner[*a] = Some(*b);
        }
        (pts, partner, p, r)
    }
}

/// A welded patch: glued connectivity plus the planar position of every
/// triangle corner (taken from whichever copy the triangle touched).
#[derive(Debug, Clone)]
pub struct WeldedPatch {
    pub num_vertices: usize,
    pub triangles: Vec<[usize; 3]>,
    pub corner_coords: Vec<[Vec2; 3]>,
    /// One planar position per glued vertex.
    pub vertex_coords: Vec<Vec2>,
    /// Glued id of each vertex of `WeldSpec::outer` (`q0` and `q1` coincide).
    pub outer_ids: Vec<usize>,
    pub core: CoreSlit,
}

impl WeldedPatch {
    pub fn side_lengths(&self) -> Vec<[f64; 3]> {
        self.corner_coords
            .iter()
            .map(|c| {
                [
                    (c[1] - c[0]).norm(),
                    (c[2] - c[1]).norm(),
                    (c[0] - c[2]).norm(),
                ]
            })
            .collect()
    }

    pub fn to_mesh(&self) -> Result<IntrinsicMesh, MeshError> {
        IntrinsicMesh::from_triangle_lengths(
            self.num_vertices,
            self.triangles.clone(),
            &self.side_lengths(),
            vec![self.core.clone()],
        )
    }
}

pub fn segments_cross(a0: &Vec2, a1: &Vec2, b0: &Vec2, b1: &Vec2) -> bool {
    let d1 = cross(&(a1 - a0), &(b0 - a0));
    let d2 = cross(&(a1 - a0), &(b1 - a0));
    let d3 = cross(&(b1 - b0), &(a0 - b0));
    let d4 = cross(&(b1 - b0), &(a1 - b0));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

pub fn point_segment_distance(x: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (x - (a + ab * t)).norm()
}

pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| cross(&poly[i], &poly[(i + 1) % n]))
        .sum::<f64>()
}

pub fn point_in_polygon(x: &Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > x.y) != (b.y > x.y) && x.x < (b.x - a.x) * (x.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

pub fn is_simple(poly: &[Vec2]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(&poly[i], &poly[(i + 1) % n], &poly[j], &poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    // touching vertices also break simplicity
    for i in 0..n {
        for j in 0..n {
            if j == i || j == (i + 1) % n {
                continue;
            }
            if point_segment_distance(&poly[j], &poly[i], &poly[(i + 1) % n]) < 1e-14 {
                return false;
            }
        }
    }
    true
}

/// Smallest distance from `x` to any polygon edge.
pub fn boundary_distance(x: &Vec2, poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| point_segment_distance(x, &poly[i], &poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

fn steiner_points(poly: &[Vec2], notch: &Notch, spacing: f64) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = Vec::new();
    let keep = |x: &Vec2, clearance: f64, pts: &[Vec2]| {
        point_in_polygon(x, poly)
            && boundary_distance(x, poly) > clearance
            && pts.iter().all(|q| (q - x).norm() > clearance)
    };
    let center = (notch.p + (notch.r + notch.r_prime) * 0.5) * 0.5;
    let mut rho = 0.9 * notch.d;
    while rho < 1.2 * spacing {
        let count = 9;
        for k in 0..count {
            let a =
                2.0 * std::f64::consts::PI * (k as f64 + 0.5 * (rho / notch.d).ln()) / count as f64;
            let x = center + Vec2::new(a.cos(), a.sin()) * rho;
            if keep(&x, 0.3 * rho, &pts) {
                pts.push(x);
            }
        }
        rho *= 1.7;
    }
    let (mut lo, mut hi) = (poly[0], poly[0]);
    for q in poly {
        lo = lo.inf(q);
        hi = hi.sup(q);
    }
    let row = spacing * 3f64.sqrt() / 2.0;
    let rows = ((hi.y - lo.y) / row).ceil() as i64;
    let cols = ((hi.x - lo.x) / spacing).ceil() as i64;
    for j in 0..=rows {
        for i in 0..=cols {
            let shift = if j % 2 == 0 { 0.0 } else { 0.5 * spacing };
            let x = Vec2::new(lo.x + i as f64 * spacing + shift, lo.y + j as f64 * row);
            if (x - center).norm() > rho / 1.7 + 0.5 * spacing && keep(&x, 0.4 * spacing, &pts) {
                pts.push(x);
            }
        }
    }
    pts
}

fn constrained_triangles(
    poly: &[Vec2],
    extra: &[Vec2],
) -> Result<(Vec<Vec2>, Vec<[usize; 3]>), MesherError> {
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();
    let mut handles = Vec::new();
    let mut index_of = HashMap::new();
    for (k, x) in poly.iter().chain(extra.iter()).enumerate() {
        let h = cdt
            .insert(Point2::new(x.x, x.y))
            .map_err(|e| MesherError::Triangulation(format!("{e:?}")))?;
        if index_of.insert(h.index(), k).is_some() {
            return Err(MesherError::Triangulation("coincident points".into()));
        }
        handles.push(h);
    }
    for i in 0..poly.len() {
        let added = cdt.try_add_constraint(handles[i], handles[(i + 1) % poly.len()]);
        if added.len() != 1 {
            return Err(MesherError::Triangulation(
                "boundary segment was split or blocked".into(),
            ));
        }
    }
    let coords: Vec<Vec2> = poly.iter().chain(extra.iter()).copied().collect();
    let mut tris = Vec::new();
    for f in cdt.inner_faces() {
        let vs = f.vertices();
        let mut t = [
            index_of[&vs[0].fix().index()],
            index_of[&vs[1].fix().index()],
            index_of[&vs[2].fix().index()],
        ];
        let (a, b, c) = (coords[t[0]], coords[t[1]], coords[t[2]]);
        let area2 = cross(&(b - a), &(c - a)).abs();
        let scale = (b - a).norm_squared().max((c - a).norm_squared());
        if area2 <= 1e-12 * scale || !point_in_polygon(&((a + b + c) / 3.0), poly) {
            continue;
        }
        if cross(&(b - a), &(c - a)) < 0.0 {
            t.swap(1, 2);
        }
        tris.push(t);
    }
    Ok((coords, tris))
}

/// Triangulates and welds the patch described by `spec`.
pub fn weld(spec: &WeldSpec) -> Result<WeldedPatch, MesherError> {
    let g = spec.gap();
    if g.norm() < 1e-14 || spec.theta <= 0.0 {
        return Err(MesherError::DegenerateGap);
    }
    let notch = spec.notch();
    let (poly, partner, p_idx, r_idx) = spec.polygon();
    if !is_simple(&poly) {
        return Err(MesherError::SelfIntersecting);
    }
    if signed_area(&poly) <= 0.0 {
        return Err(MesherError::WrongOrientation);
    }
    let mut extra = steiner_points(&poly, &notch, spec.spacing);
    for _attempt in 0..8 {
        let (coords, tris) = constrained_triangles(&poly, &extra)?;
        // glue: polygon vertices with a partner take the partner's id
        let mut id = vec![usize::MAX; coords.len()];
        let mut next = 0;
        for k in 0..coords.len() {
            if k < partner.len() && partner[k].is_some() {
                continue;
            }
            id[k] = next;
            next += 1;
        }
        for k in 0..partner.len() {
            if let Some(q) = partner[k] {
                id[k] = id[q];
            }
        }
        let glued: Vec<[usize; 3]> = tris
            .iter()
            .map(|t| [id[t[0]], id[t[1]], id[t[2]]])
            .collect();
        // detect distinct planar edges that collapse onto one glued pair
        let mut seen: BTreeMap<EdgeKey, Vec<(usize, usize)>> = BTreeMap::new();
        for t in &tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let planar = if a < b { (a, b) } else { (b, a) };
                let v = seen.entry(EdgeKey::new(id[a], id[b])).or_default();
                if !v.contains(&planar) {
                    v.push(planar);
                }
            }
        }
        let np = poly.len();
        let on_boundary =
            |(a, b): (usize, usize)| b < np && (b == a + 1 || (a == 0 && b == np - 1));
        let mut fresh = Vec::new();
        for copies in seen.values() {
            if copies.len() > 1 && !(copies.len() == 2 && copies.iter().all(|&c| on_boundary(c))) {
                for &(a, b) in copies {
                    let m = (coords[a] + coords[b]) * 0.5;
                    if boundary_distance(&m, &poly) > 1e-6 * spec.spacing
                        && point_in_polygon(&m, &poly)
                    {
                        fresh.push(m);
                    }
                }
            }
        }
        for (t, gt) in tris.iter().zip(&glued) {
            if gt[0] == gt[1] || gt[1] == gt[2] || gt[0] == gt[2] {
                fresh.push((coords[t[0]] + coords[t[1]] + coords[t[2]]) / 3.0);
            }
        }
        if fresh.is_empty() {
            let mut vertex_coords = vec![Vec2::zeros(); next];
            for k in (0..coords.len()).rev() {
                vertex_coords[id[k]] = coords[k];
            }
            let corner_coords = tris
                .iter()
                .map(|t| [coords[t[0]], coords[t[1]], coords[t[2]]])
                .collect();
            let outer_ids = (0..spec.outer.len()).map(|k| id[k]).collect();
            let core = CoreSlit::new(id[p_idx], id[r_idx], spec.theta, notch.d);
            return Ok(WeldedPatch {
                num_vertices: next,
                triangles: glued,
                corner_coords,
                vertex_coords,
                outer_ids,
                core,
            });
        }
        extra.extend(fresh);
    }
    Err(MesherError::WeldCollision)
}
