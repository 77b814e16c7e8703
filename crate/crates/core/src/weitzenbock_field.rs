//! Smooth bodies with distant parallelism: a global frame field on a planar
//! chart, its metric and torsion, its geodesics, and geodesic triangulations.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector6;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone_mesh::EdgeKey;
use crate::dislocation_builder::{TriangleData, TriangulationData};
use crate::geom::{cross, rotate, rotation, Mat2, Vec2};
use crate::ode::rk4;

/// Largest integration step along a geodesic.
pub const MAX_STEP: f64 = 1e-3;
pub const MIN_STEPS: usize = 100;
pub const CONNECT_TOLERANCE: f64 = 1e-10;
pub const CONNECT_MAX_ITER: usize = 50;
pub const DEFAULT_DELTA: f64 = PI / 9.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("point ({0}, {1}) is outside the chart")]
    OutOfDomain(f64, f64),
    #[error("geodesic left the chart at t = {0}")]
    LeftDomain(f64),
    #[error("shooting did not converge (residual {0})")]
    ShootingDiverged(f64),
    #[error("triangle {triangle} violates the {bound} bound")]
    QualityBoundViolated { triangle: usize, bound: String },
    #[error("frame is degenerate at ({0}, {1})")]
    Degenerate(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect {
            lo: Vec2::new(x0, y0),
            hi: Vec2::new(x1, y1),
        }
    }

    pub fn contains(&self, x: &Vec2) -> bool {
        x.x >= self.lo.x && x.x <= self.hi.x && x.y >= self.lo.y && x.y <= self.hi.y
    }

    pub fn size(&self) -> Vec2 {
        self.hi - self.lo
    }
}

/// A frame sampled on a regular grid and interpolated bilinearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    /// Row-major samples, `values[j * nx + i]` at grid point `(i, j)`.
    pub values: Vec<Mat2>,
}

impl GridFrame {
    pub fn sample(rect: Rect, nx: usize, ny: usize, f: impl Fn(&Vec2) -> Mat2) -> Self {
        let s = rect.size();
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = rect.lo
                    + Vec2::new(
                        s.x * i as f64 / (nx - 1) as f64,
                        s.y * j as f64 / (ny - 1) as f64,
                    );
                values.push(f(&x));
            }
        }
        GridFrame {
            rect,
            nx,
            ny,
            values,
        }
    }

    fn eval(&self, x: &Vec2) -> Mat2 {
        let s = self.rect.size();
        let u =
            ((x.x - self.rect.lo.x) / s.x * (self.nx - 1) as f64).clamp(0.0, (self.nx - 1) as f64);
        let v =
            ((x.y - self.rect.lo.y) / s.y * (self.ny - 1) as f64).clamp(0.0, (self.ny - 1) as f64);
        let i = (u.floor() as usize).min(self.nx - 2);
        let j = (v.floor() as usize).min(self.ny - 2);
        let (fu, fv) = (u - i as f64, v - j as f64);
        let at = |i: usize, j: usize| self.values[j * self.nx + i];
        at(i, j) * ((1.0 - fu) * (1.0 - fv))
            + at(i + 1, j) * (fu * (1.0 - fv))
            + at(i, j + 1) * ((1.0 - fu) * fv)
            + at(i + 1, j + 1) * (fu * fv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Identity,
    Constant {
        matrix: Mat2,
    },
    /// Columns `(cos ty, sin ty)` and `(-sin ty, cos ty)`.
    ConstantTorsion {
        tau: f64,
    },
    /// Columns `(1, 0)` and `(x, 1)`.
    BracketDemo,
    GridSampled {
        grid: GridFrame,
    },
}

/// A global frame `E` on a rectangular chart. `domain` is where it may be
/// evaluated; `body` is the part that gets triangulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameField {
    pub kind: FieldKind,
    pub domain: Rect,
    pub body: Rect,
}

/// `T[k][i][j]` with `T(E_i, E_j) = T^k_ij E_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torsion(pub [[[f64; 2]; 2]; 2]);

impl Torsion {
    /// `T(X, Y)` for frame components `x`, `y`, in frame components.
    pub fn apply(&self, x: &Vec2, y: &Vec2) -> Vec2 {
        let mut out = Vec2::zeros();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    out[k] += self.0[k][i][j] * x[i] * y[j];
                }
            }
        }
        out
    }

    /// `sum_j T^j_{ji}` for each `i`.
    pub fn trace(&self) -> Vec2 {
        Vec2::new(
            self.0[0][0][0] + self.0[1][1][0],
            self.0[0][0][1] + self.0[1][1][1],
        )
    }
}

impl FrameField {
    fn fixture(kind: FieldKind) -> Self {
        FrameField {
            kind,
            domain: Rect::new(-0.25, -0.25, 1.25, 1.25),
            body: Rect::new(0.0, 0.0, 1.0, 1.0),
        }
    }

    pub fn identity() -> Self {
        Self::fixture(FieldKind::Identity)
    }

    pub fn constant(matrix: Mat2) -> Self {
        Self::fixture(FieldKind::Constant { matrix })
    }

    pub fn constant_torsion(tau: f64) -> Self {
        Self::fixture(FieldKind::ConstantTorsion { tau })
    }

    pub fn bracket_demo() -> Self {
        Self::fixture(FieldKind::BracketDemo)
    }

    /// Samples `field` on an `n x n` grid over its domain.
    pub fn grid_sampled(field: &FrameField, n: usize) -> Self {
        let grid = GridFrame::sample(field.domain, n, n, |x| field.frame_unchecked(x));
        FrameField {
            kind: FieldKind::GridSampled { grid },
            domain: field.domain,
            body: field.body,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            FieldKind::Identity => "identity".into(),
            FieldKind::Constant { .. } => "constant".into(),
            FieldKind::ConstantTorsion { tau } => format!("constant_torsion({tau})"),
            FieldKind::BracketDemo => "bracket_demo".into(),
            FieldKind::GridSampled { .. } => "grid_sampled".into(),
        }
    }

    /// False when derivatives come from finite differences.
    pub fn is_analytic(&self) -> bool {
        !matches!(self.kind, FieldKind::GridSampled { .. })
    }

    /// `E(x)` without the domain check.
    pub fn frame_unchecked(&self, x: &Vec2) -> Mat2 {
        match &self.kind {
            FieldKind::Identity => Mat2::identity(),
            FieldKind::Constant { matrix } => *matrix,
            FieldKind::ConstantTorsion { tau } => rotation(tau * x.y),
            FieldKind::BracketDemo => Mat2::new(1.0, x.x, 0.0, 1.0),
            FieldKind::GridSampled { grid } => grid.eval(x),
        }
    }

    pub fn frame(&self, x: &Vec2) -> Result<Mat2, FieldError> {
        if !self.domain.contains(x) {
            return Err(FieldError::OutOfDomain(x.x, x.y));
        }
        Ok(self.frame_unchecked(x))
    }

    /// `[dE/dx, dE/dy]` without the domain check.
    pub fn derivative_unchecked(&self, x: &Vec2) -> [Mat2; 2] {
        match &self.kind {
            FieldKind::Identity | FieldKind::Constant { .. } => [Mat2::zeros(), Mat2::zeros()],
            FieldKind::ConstantTorsion { tau } => {
                let (s, c) = (tau * x.y).sin_cos();
                [Mat2::zeros(), Mat2::new(-s, -c, c, -s) * *tau]
            }
            FieldKind::BracketDemo => [Mat2::new(0.0, 1.0, 0.0, 0.0), Mat2::zeros()],
            FieldKind::GridSampled { grid } => {
                let h = 1e-6 * grid.rect.size().norm();
                let dx = Vec2::new(h, 0.0);
                let dy = Vec2::new(0.0, h);
                [
                    (grid.eval(&(x + dx)) - grid.eval(&(x - dx))) / (2.0 * h),
                    (grid.eval(&(x + dy)) - grid.eval(&(x - dy))) / (2.0 * h),
                ]
            }
        }
    }

    pub fn derivative(&self, x: &Vec2) -> Result<[Mat2; 2], FieldError> {
        if !self.domain.contains(x) {
            return Err(FieldError::OutOfDomain(x.x, x.y));
        }
        Ok(self.derivative_unchecked(x))
    }

    fn inverse_frame(&self, x: &Vec2) -> Result<Mat2, FieldError> {
        self.frame(x)?
            .try_inverse()
            .ok_or(FieldError::Degenerate(x.x, x.y))
    }

    /// `(E E^T)^{-1}`.
    pub fn metric_at(&self, x: &Vec2) -> Result<Mat2, FieldError> {
        let e = self.frame(x)?;
        let g = (e * e.transpose())
            .try_inverse()
            .ok_or(FieldError::Degenerate(x.x, x.y))?;
        Ok((g + g.transpose()) * 0.5)
    }

    /// `sqrt(det g) = 1 / det E`.
    pub fn volume_density(&self, x: &Vec2) -> Result<f64, FieldError> {
        Ok(1.0 / self.frame(x)?.determinant())
    }

    /// Lie bracket `[E_i, E_j]` in chart components.
    pub fn bracket(&self, x: &Vec2, i: usize, j: usize) -> Result<Vec2, FieldError> {
        let e = self.frame(x)?;
        let de = self.derivative(x)?;
        let directional = |v: Vec2, col: usize| -> Vec2 {
            (de[0] * v[0] + de[1] * v[1]).column(col).into_owned()
        };
        Ok(directional(e.column(i).into_owned(), j) - directional(e.column(j).into_owned(), i))
    }

    pub fn torsion_at(&self, x: &Vec2) -> Result<Torsion, FieldError> {
        let inv = self.inverse_frame(x)?;
        let mut t = [[[0.0; 2]; 2]; 2];
        let b = -(inv * self.bracket(x, 0, 1)?);
        for k in 0..2 {
            t[k][0][1] = b[k];
            t[k][1][0] = -b[k];
        }
        Ok(Torsion(t))
    }

    /// Checks `det E > 0` and bounded conditioning on a sample grid.
    pub fn validate(&self, samples: usize, max_condition: f64) -> Result<(), FieldError> {
        let s = self.domain.size();
        for j in 0..samples {
            for i in 0..samples {
                let x = self.domain.lo
                    + Vec2::new(
                        s.x * i as f64 / (samples - 1) as f64,
                        s.y * j as f64 / (samples - 1) as f64,
                    );
                let e = self.frame(&x)?;
                let sv = e.singular_values();
                if e.determinant() <= 0.0 || sv.max() / sv.min() > max_condition {
                    return Err(FieldError::Degenerate(x.x, x.y));
                }
            }
        }
        Ok(())
    }

    fn steps_for(length: f64) -> usize {
        MIN_STEPS.max((length / MAX_STEP).ceil() as usize)
    }

    /// Integrates `x' = E(x) c` for `t` in `[0, t_end]`. `refine` multiplies
    /// the step count (use 10 for a reference solution).
    pub fn geodesic_shoot(
        &self,
        p: &Vec2,
        c: &Vec2,
        t_end: f64,
        refine: usize,
    ) -> Result<GeodesicPath, FieldError> {
        self.frame(p)?;
        let steps = Self::steps_for(c.norm() * t_end) * refine.max(1);
        let mut points = vec![*p];
        let mut exit = None;
        let f = |y: &Vec2| self.frame_unchecked(y) * c;
        let end = rk4(f, *p, t_end, steps, |t, y| {
            if !self.domain.contains(y) {
                exit = Some(t);
                return false;
            }
            points.push(*y);
            true
        });
        if let Some(t) = exit {
            return Err(FieldError::LeftDomain(t));
        }
        Ok(GeodesicPath {
            points,
            end,
            length: c.norm() * t_end,
        })
    }

    /// `exp_p(v)`: the endpoint of the geodesic with frame velocity `v` at time 1.
    pub fn exp(&self, p: &Vec2, v: &Vec2) -> Result<Vec2, FieldError> {
        if v.norm() == 0.0 {
            return Ok(*p);
        }
        Ok(self.geodesic_shoot(p, v, 1.0, 1)?.end)
    }

    /// Endpoint and its Jacobian with respect to `v`.
    fn shoot_with_jacobian(
        &self,
        p: &Vec2,
        v: &Vec2,
        steps: usize,
    ) -> Result<(Vec2, Mat2), FieldError> {
        let f = |y: &Vector6<f64>| {
            let x = Vec2::new(y[0], y[1]);
            let e = self.frame_unchecked(&x);
            let de = self.derivative_unchecked(&x);
            let jac = Mat2::new(y[2], y[4], y[3], y[5]);
            // d/dx (E(x) v) has columns (dE/dx_m) v
            let a = Mat2::from_columns(&[de[0] * v, de[1] * v]);
            let dj = a * jac + e;
            let dx = e * v;
            Vector6::new(dx[0], dx[1], dj[(0, 0)], dj[(1, 0)], dj[(0, 1)], dj[(1, 1)])
        };
        let mut exit = None;
        let y0 = Vector6::new(p.x, p.y, 0.0, 0.0, 0.0, 0.0);
        let y = rk4(f, y0, 1.0, steps, |t, y| {
            if !self.domain.contains(&Vec2::new(y[0], y[1])) {
                exit = Some(t);
                return false;
            }
            true
        });
        if let Some(t) = exit {
            return Err(FieldError::LeftDomain(t));
        }
        Ok((Vec2::new(y[0], y[1]), Mat2::new(y[2], y[4], y[3], y[5])))
    }

    /// Solves for the geodesic from `p` to `q` by Newton shooting.
    pub fn geodesic_connect(&self, p: &Vec2, q: &Vec2) -> Result<Geodesic, FieldError> {
        let mut v = self.inverse_frame(p)? * (q - p);
        if v.norm() == 0.0 {
            return Err(FieldError::InvalidParameter("endpoints coincide".into()));
        }
        let steps = Self::steps_for(v.norm());
        let mut residual = f64::INFINITY;
        for _ in 0..CONNECT_MAX_ITER {
            let (end, jac) = self.shoot_with_jacobian(p, &v, steps)?;
            let r = end - q;
            residual = r.norm();
            if residual < CONNECT_TOLERANCE {
                return Ok(Geodesic {
                    from: *p,
                    to: *q,
                    c: v.normalize(),
                    length: v.norm(),
                });
            }
            let dv = jac
                .try_inverse()
                .ok_or(FieldError::ShootingDiverged(residual))?
                * r;
            v -= dv;
        }
        Err(FieldError::ShootingDiverged(residual))
    }

    /// Burgers vector (frame components) of the image under `exp_p` of a
    /// parallelogram spanned by `sqrt(eps) X` and `sqrt(eps) Y`, divided by
    /// `eps`. Approximates `T(X, Y)`.
    pub fn torsion_from_loops(
        &self,
        p: &Vec2,
        x: &Vec2,
        y: &Vec2,
        eps: f64,
        anchor: LoopAnchor,
    ) -> Result<Vec2, FieldError> {
        const PER_SIDE: usize = 64;
        let s = eps.sqrt();
        let (x, y) = (x * s, y * s);
        let origin = match anchor {
            LoopAnchor::Corner => Vec2::zeros(),
            LoopAnchor::Centered => -(x + y) * 0.5,
        };
        let corners = [origin, origin + x, origin + x + y, origin + y];
        let mut curve = Vec::with_capacity(4 * PER_SIDE + 1);
        for k in 0..4 {
            let (a, b) = (corners[k], corners[(k + 1) % 4]);
            for m in 0..PER_SIDE {
                let sigma = a + (b - a) * (m as f64 / PER_SIDE as f64);
                curve.push(
                    self.exp(p, &sigma)
                        .map_err(|_| FieldError::LeftDomain(eps))?,
                );
            }
        }
        curve.push(curve[0]);
        let mut b = Vec2::zeros();
        for w in curve.windows(2) {
            let mid = (w[0] + w[1]) * 0.5;
            b += self.inverse_frame(&mid)? * (w[1] - w[0]);
        }
        Ok(b / eps)
    }

    /// Geodesic triangulation of the body: an `n x n` grid of squares, each
    /// split along its rising diagonal, with edges solved as geodesics.
    pub fn triangulate(&self, n: usize, delta: f64) -> Result<GeodesicTriangulation, FieldError> {
        if n < 2 || !(delta > 0.0 && delta <= PI / 6.0) {
            return Err(FieldError::InvalidParameter(format!(
                "n = {n}, delta = {delta}"
            )));
        }
        let size = self.body.size();
        let (nx, ny) = (
            (size.x * n as f64).round() as usize,
            (size.y * n as f64).round() as usize,
        );
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut vertices = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(self.body.lo + Vec2::new(i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        let mut triangles = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let mut keys: Vec<EdgeKey> = triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| EdgeKey::new(t[k], t[(k + 1) % 3])))
            .collect();
        keys.sort();
        keys.dedup();
        let solved: Vec<Geodesic> = keys
            .par_iter()
            .map(|e| self.geodesic_connect(&vertices[e.0], &vertices[e.1]))
            .collect::<Result<_, _>>()?;
        let edges: BTreeMap<EdgeKey, Geodesic> = keys.into_iter().zip(solved).collect();
        let tri = GeodesicTriangulation {
            n,
            vertices,
            edges,
            triangles,
            geometry: Vec::new(),
        };
        let geometry: Vec<TriangleGeometry> = (0..tri.triangles.len())
            .map(|t| tri.compute_geometry(t))
            .collect();
        let tri = GeodesicTriangulation { geometry, ..tri };
        let (lo, hi) = (1.0 / n as f64, 1.5 / n as f64);
        for (t, g) in tri.geometry.iter().enumerate() {
            if g.lengths
                .iter()
                .any(|&l| l < lo * (1.0 - 1e-9) || l > hi * (1.0 + 1e-9))
            {
                return Err(FieldError::QualityBoundViolated {
                    triangle: t,
                    bound: "edge length".into(),
                });
            }
            if g.angles.iter().any(|&a| a < delta || a > PI - delta) {
                return Err(FieldError::QualityBoundViolated {
                    triangle: t,
                    bound: "angle".into(),
                });
            }
        }
        Ok(tri)
    }
}

/// Where the loop in [`FrameField::torsion_from_loops`] sits relative to `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopAnchor {
    /// `p` is a corner of the parallelogram.
    Corner,
    /// `p` is its center.
    Centered,
}

#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub points: Vec<Vec2>,
    pub end: Vec2,
    pub length: f64,
}

/// A geodesic with constant unit frame direction `c` and length `length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodesic {
    pub from: Vec2,
    pub to: Vec2,
    pub c: Vec2,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    /// `[|AB|, |BC|, |CA|]`.
    pub lengths: [f64; 3],
    /// Angles at A, B, C between initial geodesic directions.
    pub angles: [f64; 3],
    /// Euclidean chart angles of the straight triangle.
    pub chart_angles: [f64; 3],
    /// `sum l_e c_e` around the boundary, in frame components.
    pub burgers: Vec2,
    /// Frame direction of AB.
    pub c_ab: Vec2,
}

#[derive(Debug, Clone)]
pub struct GeodesicTriangulation {
    pub n: usize,
    pub vertices: Vec<Vec2>,
    /// Geodesics oriented from the lower to the higher vertex id.
    pub edges: BTreeMap<EdgeKey, Geodesic>,
    pub triangles: Vec<[usize; 3]>,
    pub geometry: Vec<TriangleGeometry>,
}

fn angle_between(u: &Vec2, v: &Vec2) -> f64 {
    cross(u, v).atan2(u.dot(v))
}

impl GeodesicTriangulation {
    /// Frame direction and length of the geodesic from `a` to `b`.
    pub fn directed(&self, a: usize, b: usize) -> (Vec2, f64) {
        let g = &self.edges[&EdgeKey::new(a, b)];
        if a < b {
            (g.c, g.length)
        } else {
            (-g.c, g.length)
        }
    }

    fn compute_geometry(&self, t: usize) -> TriangleGeometry {
        let [a, b, c] = self.triangles[t];
        let (cab, lab) = self.directed(a, b);
        let (cbc, lbc) = self.directed(b, c);
        let (cca, lca) = self.directed(c, a);
        let angles = [
            angle_between(&cab, &-cca),
            angle_between(&cbc, &-cab),
            angle_between(&cca, &-cbc),
        ];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let chart_angles = [
            angle_between(&(pb - pa), &(pc - pa)),
            angle_between(&(pc - pb), &(pa - pb)),
            angle_between(&(pa - pc), &(pb - pc)),
        ];
        TriangleGeometry {
            lengths: [lab, lbc, lca],
            angles,
            chart_angles,
            burgers: cab * lab + cbc * lbc + cca * lca,
            c_ab: cab,
        }
    }

    /// Burgers vector of triangle `t`, frame components.
    pub fn triangle_burgers(&self, t: usize) -> Vec2 {
        self.geometry[t].burgers
    }

    pub fn max_angle_sum_error(&self) -> f64 {
        self.geometry
            .iter()
            .map(|g| (g.angles.iter().sum::<f64>() - PI).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_chart_angle_deviation(&self) -> f64 {
        self.geometry
            .iter()
            .flat_map(|g| (0..3).map(move |k| (g.angles[k] - g.chart_angles[k]).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges.values().map(|g| g.length).fold(0.0, f64::max)
    }

    /// Export for assembly; Burgers vectors are rotated so AB lies along +x.
    pub fn to_triangulation_data(&self) -> TriangulationData {
        let triangles = self
            .geometry
            .iter()
            .map(|g| {
                let b = rotate(&g.burgers, -g.c_ab.y.atan2(g.c_ab.x));
                TriangleData {
                    c: g.lengths[0],
                    a: g.lengths[1],
                    b: g.lengths[2],
                    alpha: g.angles[0],
                    beta: g.angles[1],
                    gamma: g.angles[2],
                    burgers: [b.x, b.y],
                }
            })
            .collect();
        TriangulationData {
            triangles,
            incidence: self.triangles.clone(),
        }
    }
}

/// Angle at which the frame direction `c` points, in frame components.
pub fn direction_angle(c: &Vec2) -> f64 {
    c.y.atan2(c.x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_metric_and_scaled_metric() {
        let id = FrameField::identity();
        assert_eq!(
            id.metric_at(&Vec2::new(0.3, 0.4)).unwrap(),
            Mat2::identity()
        );
        let two = FrameField::constant(Mat2::identity() * 2.0);
        assert!(
            (two.metric_at(&Vec2::new(0.1, 0.1)).unwrap() - Mat2::identity() * 0.25).norm() < 1e-15
        );
        assert!(matches!(
            id.metric_at(&Vec2::new(5.0, 0.0)),
            Err(FieldError::OutOfDomain(..))
        ));
    }

    #[test]
    fn bracket_demo_torsion() {
        let f = FrameField::bracket_demo();
        let t = f.torsion_at(&Vec2::new(0.4, 0.7)).unwrap();
        assert!((t.0[0][0][1] + 1.0).abs() < 1e-15);
        assert!(t.0[1][0][1].abs() < 1e-15);
        assert_eq!(t.0[0][1][0], -t.0[0][0][1]);
    }

    #[test]
    fn constant_torsion_magnitude() {
        let f = FrameField::constant_torsion(0.5);
        let t = f.torsion_at(&Vec2::new(0.2, 0.9)).unwrap();
        let v = t.apply(&Vec2::new(1.0, 0.0), &Vec2::new(0.0, 1.0));
        assert!((v.norm() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn straight_geodesic_in_identity_frame() {
        let f = FrameField::identity();
        let g = f
            .geodesic_shoot(&Vec2::zeros(), &Vec2::new(1.0, 0.0), 1.0, 1)
            .unwrap();
        assert!((g.end - Vec2::new(1.0, 0.0)).norm() < 1e-14);
        let c = f
            .geodesic_connect(&Vec2::zeros(), &Vec2::new(0.2, 0.0))
            .unwrap();
        assert!((c.c - Vec2::new(1.0, 0.0)).norm() < 1e-14 && (c.length - 0.2).abs() < 1e-14);
    }

    #[test]
    fn leaving_the_chart_is_reported() {
        let f = FrameField::identity();
        let err = f
            .geodesic_shoot(&Vec2::zeros(), &Vec2::new(-1.0, 0.0), 1.0, 1)
            .unwrap_err();
        assert!(matches!(err, FieldError::LeftDomain(t) if (t - 0.25).abs() < 0.02));
    }

    #[test]
    fn identity_triangulation_is_flat() {
        let tri = FrameField::identity()
            .triangulate(4, DEFAULT_DELTA)
            .unwrap();
        assert_eq!(tri.triangles.len(), 32);
        assert!(tri.max_angle_sum_error() < 1e-14);
        for t in 0..tri.triangles.len() {
            assert!(tri.triangle_burgers(t).norm() < 1e-15);
        }
    }
}
