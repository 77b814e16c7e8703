#![allow(dead_code)]

use std::collections::BTreeMap;

use weitzenbock::cone_mesh::{EdgeKey, IntrinsicMesh};
use weitzenbock::geom::Vec2;

/// Grid points of `[0, 1]^2` with `m x m` cells split along rising diagonals.
pub fn grid(m: usize) -> (Vec<Vec2>, Vec<[usize; 3]>) {
    let id = |i: usize, j: usize| j * (m + 1) + i;
    let mut pts = Vec::new();
    for j in 0..=m {
        for i in 0..=m {
            pts.push(Vec2::new(i as f64 / m as f64, j as f64 / m as f64));
        }
    }
    let mut tris = Vec::new();
    for j in 0..m {
        for i in 0..m {
            tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    (pts, tris)
}

/// Grid mesh whose edge lengths are the planar ones scaled by `1 + jitter(k)`
/// for the `k`-th edge in key order.
pub fn jittered_grid(m: usize, jitter: impl Fn(usize) -> f64) -> IntrinsicMesh {
    let (pts, tris) = grid(m);
    let mut lengths = BTreeMap::new();
    for t in &tris {
        for k in 0..3 {
            let e = EdgeKey::new(t[k], t[(k + 1) % 3]);
            lengths.insert(e, (pts[e.0] - pts[e.1]).norm());
        }
    }
    for (k, v) in lengths.values_mut().enumerate() {
        *v *= 1.0 + jitter(k);
    }
    IntrinsicMesh::new(pts.len(), tris, lengths, Vec::new()).expect("valid grid")
}

pub fn flat_grid(m: usize) -> IntrinsicMesh {
    jittered_grid(m, |_| 0.0)
}

/// Five unit equilateral triangles around vertex 0: a lone positive cone.
pub fn lone_cone() -> IntrinsicMesh {
    let tris: Vec<[usize; 3]> = (0..5).map(|k| [0, 1 + k, 1 + (k + 1) % 5]).collect();
    IntrinsicMesh::from_triangle_lengths(6, tris, &[[1.0; 3]; 5], Vec::new()).expect("valid fan")
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
