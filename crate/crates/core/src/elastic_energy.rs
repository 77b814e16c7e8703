//! Elastic energies of piecewise-linear maps on cone meshes and on chart
//! triangulations of smooth frame fields.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone_mesh::{IntrinsicMesh, MeshError};
use crate::constitutive::{Archetype, EnergyDensity};
use crate::geom::{rotation, Mat2, Rigid, Vec2};
use crate::lbfgs::{self, Termination};
use crate::weitzenbock_field::{FieldError, FrameField};

pub const CONSISTENCY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("frame transport around edge {edge:?} disagrees by {residual:e}")]
    HolonomyObstruction { edge: (usize, usize), residual: f64 },
    #[error("triangle {0} is not reachable without crossing a core slit")]
    Disconnected(usize),
    #[error("line search failed at energy {}", best.energy)]
    LineSearchFailed { best: Box<Minimized> },
    #[error("iteration limit reached at energy {} (gradient {:e})", best.energy, best.grad_inf)]
    MaxIterations { best: Box<Minimized> },
    #[error("archetype is not twice differentiable at {0:?}")]
    NonSmoothPoint([f64; 2]),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Parallel orthonormal frame on a cone mesh, one matrix per triangle in
/// that triangle's local chart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshFrame {
    pub frames: Vec<Mat2>,
    pub root: usize,
    pub seed_rotation: f64,
    /// Chart-to-plane placement of each triangle along the spanning tree.
    #[serde(skip)]
    pub placements: Vec<Rigid>,
    /// Breadth-first visiting order.
    #[serde(skip)]
    pub order: Vec<usize>,
    /// Largest disagreement over non-tree edges.
    pub max_residual: f64,
}

/// Transports `rotation(seed)` from `root` over the dual graph without
/// crossing core slits, and checks every non-tree edge for agreement.
pub fn propagate_frame(
    mesh: &IntrinsicMesh,
    root: usize,
    seed: f64,
) -> Result<MeshFrame, EnergyError> {
    let nt = mesh.num_triangles();
    let mut placements: Vec<Option<Rigid>> = vec![None; nt];
    placements[root] = Some(Rigid::identity());
    let mut queue = VecDeque::from([root]);
    let mut max_residual: f64 = 0.0;
    let mut order = Vec::with_capacity(nt);
    while let Some(t) = queue.pop_front() {
        order.push(t);
        let here = placements[t].expect("queued triangles are placed");
        let tri = mesh.triangle(t);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if mesh.is_slit_edge(a, b) {
                continue;
            }
            let Some(s) = mesh.neighbor_across(t, a, b) else {
                continue;
            };
            let candidate = here.compose(&mesh.transition(t, s)?.inverse());
            match placements[s] {
                None => {
                    placements[s] = Some(candidate);
                    queue.push_back(s);
                }
                Some(existing) => {
                    let residual = (rotation(existing.angle) - rotation(candidate.angle)).norm();
                    max_residual = max_residual.max(residual);
                    if residual > CONSISTENCY_TOLERANCE {
                        return Err(EnergyError::HolonomyObstruction {
                            edge: (a.min(b), a.max(b)),
                            residual,
                        });
                    }
                }
            }
        }
    }
    let placements: Vec<Rigid> = placements
        .into_iter()
        .enumerate()
        .map(|(t, p)| p.ok_or(EnergyError::Disconnected(t)))
        .collect::<Result<_, _>>()?;
    let frames = placements
        .iter()
        .map(|p| rotation(seed - p.angle))
        .collect();
    Ok(MeshFrame {
        frames,
        root,
        seed_rotation: seed,
        placements,
        order,
        max_residual,
    })
}

impl MeshFrame {
    /// Vertex positions of the development along the spanning tree; the first
    /// placement of each vertex wins.
    pub fn development(&self, mesh: &IntrinsicMesh) -> Vec<Vec2> {
        let mut pos: Vec<Option<Vec2>> = vec![None; mesh.num_vertices()];
        for &t in &self.order {
            let local = mesh.local_coords(t);
            for (k, &v) in mesh.triangle(t).iter().enumerate() {
                pos[v].get_or_insert_with(|| self.placements[t].apply(&local[k]));
            }
        }
        pos.into_iter()
            .map(|p| p.unwrap_or_else(Vec2::zeros))
            .collect()
    }
}

/// Triangles with quadrature data: at quadrature point `q` of element `t`,
/// `A = [f1 - f0, f2 - f0] * m` and the contribution is `weight * W(A)`.
#[derive(Debug, Clone)]
pub struct Elements {
    pub triangles: Vec<[usize; 3]>,
    pub quadrature: Vec<Vec<(f64, Mat2)>>,
    pub num_vertices: usize,
}

fn edge_matrix(p: &[Vec2; 3]) -> Mat2 {
    let (e1, e2) = (p[1] - p[0], p[2] - p[0]);
    Mat2::new(e1.x, e2.x, e1.y, e2.y)
}

impl Elements {
    pub fn on_mesh(mesh: &IntrinsicMesh, frame: &MeshFrame) -> Self {
        let quadrature = (0..mesh.num_triangles())
            .map(|t| {
                let x = edge_matrix(&mesh.local_coords(t));
                let m = x.try_inverse().expect("nondegenerate triangle") * frame.frames[t];
                vec![(mesh.area(t), m)]
            })
            .collect();
        Elements {
            triangles: mesh.triangles().to_vec(),
            quadrature,
            num_vertices: mesh.num_vertices(),
        }
    }

    pub fn differential(&self, t: usize, map: &[f64]) -> Mat2 {
        let [i, j, k] = self.triangles[t];
        let p = |v: usize| Vec2::new(map[2 * v], map[2 * v + 1]);
        edge_matrix(&[p(i), p(j), p(k)])
    }

    fn element_energy(&self, t: usize, map: &[f64], w: &dyn EnergyDensity) -> f64 {
        let f = self.differential(t, map);
        self.quadrature[t]
            .iter()
            .map(|(wt, m)| wt * w.value(&(f * m)))
            .sum()
    }

    /// Energy of the map given as interleaved vertex coordinates.
    pub fn energy(&self, map: &[f64], w: &dyn EnergyDensity) -> f64 {
        let parts: Vec<f64> = (0..self.triangles.len())
            .into_par_iter()
            .map(|t| self.element_energy(t, map, w))
            .collect();
        parts.iter().sum()
    }

    /// Energy and its gradient with respect to the interleaved coordinates.
    pub fn energy_and_gradient(&self, map: &[f64], w: &dyn EnergyDensity, grad: &mut [f64]) -> f64 {
        let parts: Vec<(f64, Mat2)> = (0..self.triangles.len())
            .into_par_iter()
            .map(|t| {
                let f = self.differential(t, map);
                let mut value = 0.0;
                let mut g = Mat2::zeros();
                for (wt, m) in &self.quadrature[t] {
                    let a = f * m;
                    value += wt * w.value(&a);
                    g += w.gradient(&a) * m.transpose() * *wt;
                }
                (value, g)
            })
            .collect();
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for (t, (value, g)) in parts.iter().enumerate() {
            total += value;
            let [i, j, k] = self.triangles[t];
            for d in 0..2 {
                grad[2 * j + d] += g[(d, 0)];
                grad[2 * k + d] += g[(d, 1)];
                grad[2 * i + d] -= g[(d, 0)] + g[(d, 1)];
            }
        }
        total
    }

    /// Per-element energy density, the weighted mean of `W` over quadrature.
    pub fn densities(&self, map: &[f64], w: &dyn EnergyDensity) -> Vec<f64> {
        (0..self.triangles.len())
            .map(|t| {
                let total: f64 = self.quadrature[t].iter().map(|q| q.0).sum();
                self.element_energy(t, map, w) / total
            })
            .collect()
    }
}

pub fn flatten(points: &[Vec2]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

pub fn unflatten(map: &[f64]) -> Vec<Vec2> {
    map.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

/// `sum_T area_T W(df_T E_T)`.
pub fn energy(map: &[Vec2], mesh: &IntrinsicMesh, frame: &MeshFrame, w: &dyn EnergyDensity) -> f64 {
    Elements::on_mesh(mesh, frame).energy(&flatten(map), w)
}

pub fn energy_gradient(
    map: &[Vec2],
    mesh: &IntrinsicMesh,
    frame: &MeshFrame,
    w: &dyn EnergyDensity,
) -> Vec<Vec2> {
    let elements = Elements::on_mesh(mesh, frame);
    let mut g = vec![0.0; 2 * mesh.num_vertices()];
    elements.energy_and_gradient(&flatten(map), w, &mut g);
    unflatten(&g)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Restart perturbation relative to the shortest edge at each vertex.
    pub perturbation: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: 1e-8,
            max_iter: 20_000,
            restarts: 5,
            seed: 0,
            perturbation: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Minimized {
    pub map: Vec<[f64; 2]>,
    pub energy: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub restart_energies: Vec<f64>,
    /// `(max - min) / max` over restart energies.
    pub restart_spread: f64,
    /// Counts of element densities per decade, `[1e-16, 1e-15)` up to `[1, inf)`.
    pub density_histogram: Vec<usize>,
}

pub fn decade_histogram(values: &[f64]) -> Vec<usize> {
    let mut bins = vec![0; 17];
    for &v in values {
        let k = if v <= 0.0 {
            0
        } else {
            (v.log10().floor() + 16.0).clamp(0.0, 16.0) as usize
        };
        bins[k] += 1;
    }
    bins
}

fn shortest_edges(elements: &Elements, start: &[f64]) -> Vec<f64> {
    let mut h = vec![f64::INFINITY; elements.num_vertices];
    for tri in &elements.triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let len = (start[2 * a] - start[2 * b]).hypot(start[2 * a + 1] - start[2 * b + 1]);
            h[a] = h[a].min(len);
            h[b] = h[b].min(len);
        }
    }
    h
}

/// L-BFGS from `start` with vertex `pin` held fixed, restarted from seeded
/// perturbations; the best run is returned.
pub fn minimize_elements(
    elements: &Elements,
    w: &dyn EnergyDensity,
    start: &[f64],
    pin: usize,
    opts: &MinimizeOptions,
) -> Result<Minimized, EnergyError> {
    let h = shortest_edges(elements, start);
    let runs: Vec<lbfgs::LbfgsResult> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let mut x0 = start.to_vec();
            for (i, x) in x0.iter_mut().enumerate() {
                let v = i / 2;
                let jitter: f64 = rng.random_range(-1.0..=1.0);
                if v != pin && h[v].is_finite() {
                    *x += opts.perturbation * h[v] * jitter;
                }
            }
            lbfgs::minimize(
                |x, g| {
                    let e = elements.energy_and_gradient(x, w, g);
                    g[2 * pin] = 0.0;
                    g[2 * pin + 1] = 0.0;
                    e
                },
                x0,
                opts.tol,
                opts.max_iter,
            )
        })
        .collect();
    let restart_energies: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one run");
    let hi = restart_energies.iter().cloned().fold(f64::MIN, f64::max);
    let lo = restart_energies.iter().cloned().fold(f64::MAX, f64::min);
    let restart_spread = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    let out = Minimized {
        density_histogram: decade_histogram(&elements.densities(&best.x, w)),
        map: best.x.chunks(2).map(|c| [c[0], c[1]]).collect(),
        energy: best.value,
        grad_inf: best.grad_inf,
        iterations: best.iterations,
        termination: best.termination,
        restart_energies,
        restart_spread,
    };
    match out.termination {
        Termination::Converged => Ok(out),
        Termination::MaxIterations => Err(EnergyError::MaxIterations {
            best: Box::new(out),
        }),
        Termination::LineSearchFailed => Err(EnergyError::LineSearchFailed {
            best: Box::new(out),
        }),
    }
}

/// Minimizes the energy on a cone mesh starting from the frame's development,
/// with vertex 0 pinned at the origin.
pub fn minimize(
    mesh: &IntrinsicMesh,
    frame: &MeshFrame,
    w: &dyn EnergyDensity,
    opts: &MinimizeOptions,
) -> Result<Minimized, EnergyError> {
    let dev = frame.development(mesh);
    let origin = dev[0];
    let start: Vec<f64> = flatten(&dev.iter().map(|p| p - origin).collect::<Vec<_>>());
    minimize_elements(&Elements::on_mesh(mesh, frame), w, &start, 0, opts)
}

/// Accepts a best-so-far result from an unconverged run.
pub fn best_effort(result: Result<Minimized, EnergyError>) -> Result<Minimized, EnergyError> {
    match result {
        Err(EnergyError::MaxIterations { best }) | Err(EnergyError::LineSearchFailed { best }) => {
            Ok(*best)
        }
        other => other,
    }
}

/// Whether `archetype` has continuous second derivatives at `a`.
pub fn is_c2_at(archetype: &Archetype, a: &Mat2) -> bool {
    match archetype {
        Archetype::SmoothTest => true,
        Archetype::WIso { p } if *p == 2.0 => {
            let (m1, m2) = crate::constitutive::signed_singular_values(a);
            m1 + m2 > 0.0
        }
        _ => false,
    }
}

/// A triangulation of a region of the chart plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartMesh {
    pub points: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
}

impl ChartMesh {
    /// `m x m` cells over the field's body, each split along its rising diagonal.
    pub fn grid(field: &FrameField, m: usize) -> Self {
        let (lo, size) = (field.body.lo, field.body.size());
        let id = |i: usize, j: usize| j * (m + 1) + i;
        let points = (0..=m)
            .flat_map(|j| (0..=m).map(move |i| (i, j)))
            .map(|(i, j)| {
                lo + Vec2::new(size.x * i as f64 / m as f64, size.y * j as f64 / m as f64)
            })
            .collect();
        let mut triangles = Vec::with_capacity(2 * m * m);
        for j in 0..m {
            for i in 0..m {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        ChartMesh { points, triangles }
    }

    pub fn max_edge(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| (self.points[a] - self.points[b]).norm())
            .fold(0.0, f64::max)
    }
}

/// Centroids and areas of the `4^level` midpoint subdivision of a triangle.
fn sub_centroids(p: [Vec2; 3], level: usize) -> Vec<(Vec2, f64)> {
    if level == 0 {
        let area = 0.5 * crate::geom::cross(&(p[1] - p[0]), &(p[2] - p[0])).abs();
        return vec![((p[0] + p[1] + p[2]) / 3.0, area)];
    }
    let m = |a: usize, b: usize| (p[a] + p[b]) * 0.5;
    let (m01, m12, m20) = (m(0, 1), m(1, 2), m(2, 0));
    [
        [p[0], m01, m20],
        [m01, p[1], m12],
        [m20, m12, p[2]],
        [m12, m20, m01],
    ]
    .into_iter()
    .flat_map(|q| sub_centroids(q, level - 1))
    .collect()
}

impl Elements {
    /// Elements for `I(f) = int W(df E) rho dx` on a chart mesh, with the
    /// midpoint rule on each triangle's `4^level` subdivision.
    pub fn on_chart(
        field: &FrameField,
        chart: &ChartMesh,
        level: usize,
    ) -> Result<Self, EnergyError> {
        let quadrature = chart
            .triangles
            .par_iter()
            .map(|tri| {
                let p = [
                    chart.points[tri[0]],
                    chart.points[tri[1]],
                    chart.points[tri[2]],
                ];
                let xinv = edge_matrix(&p)
                    .try_inverse()
                    .expect("nondegenerate chart triangle");
                sub_centroids(p, level)
                    .into_iter()
                    .map(|(x, area)| {
                        Ok((area * field.volume_density(&x)?, xinv * field.frame(&x)?))
                    })
                    .collect::<Result<Vec<_>, FieldError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Elements {
            triangles: chart.triangles.clone(),
            quadrature,
            num_vertices: chart.points.len(),
        })
    }
}

/// Energy of the PL map with vertex values `map` on a chart mesh.
pub fn smooth_energy(
    field: &FrameField,
    chart: &ChartMesh,
    map: &[Vec2],
    w: &dyn EnergyDensity,
    level: usize,
) -> Result<f64, EnergyError> {
    Ok(Elements::on_chart(field, chart, level)?.energy(&flatten(map), w))
}

/// Minimal smooth energy on a chart mesh, starting from the identity map.
pub fn smooth_minimum(
    field: &FrameField,
    chart: &ChartMesh,
    w: &dyn EnergyDensity,
    opts: &MinimizeOptions,
) -> Result<Minimized, EnergyError> {
    let elements = Elements::on_chart(field, chart, 0)?;
    minimize_elements(&elements, w, &flatten(&chart.points), 0, opts)
}

/// `div E_i` at `x` from the flux of `rho E_i` through a square of
/// half-width `h`, divided by the enclosed `rho`-volume.
pub fn divergence_by_flux(
    field: &FrameField,
    x: &Vec2,
    i: usize,
    h: f64,
) -> Result<f64, EnergyError> {
    let nodes = [
        (-(0.6f64).sqrt(), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        ((0.6f64).sqrt(), 5.0 / 9.0),
    ];
    let flux_density = |p: Vec2| -> Result<Vec2, EnergyError> {
        Ok(field.frame(&p)?.column(i) * field.volume_density(&p)?)
    };
    let mut flux = 0.0;
    let mut volume = 0.0;
    for (s, ws) in nodes {
        flux += ws * h * flux_density(x + Vec2::new(h, s * h))?.x;
        flux -= ws * h * flux_density(x + Vec2::new(-h, s * h))?.x;
        flux += ws * h * flux_density(x + Vec2::new(s * h, h))?.y;
        flux -= ws * h * flux_density(x + Vec2::new(s * h, -h))?.y;
        for (t, wt) in nodes {
            volume += ws * wt * h * h * field.volume_density(&(x + Vec2::new(s * h, t * h)))?;
        }
    }
    Ok(flux / volume)
}

/// Largest `|T^j_ji + div E_i|` over cell centres of an `m x m` grid on the body.
pub fn torsion_trace_mismatch(field: &FrameField, m: usize, h: f64) -> Result<f64, EnergyError> {
    let (lo, size) = (field.body.lo, field.body.size());
    let mut worst: f64 = 0.0;
    for j in 0..m {
        for k in 0..m {
            let x = lo
                + Vec2::new(
                    size.x * (k as f64 + 0.5) / m as f64,
                    size.y * (j as f64 + 0.5) / m as f64,
                );
            let trace = field.torsion_at(&x)?.trace();
            for i in 0..2 {
                worst = worst.max((trace[i] + divergence_by_flux(field, &x, i, h)?).abs());
            }
        }
    }
    Ok(worst)
}

/// Strong Euler-Lagrange residual `sum_i E_i(P_i) - T^j_ji P_i`, where
/// `P = DW(df E)`, for a map with Jacobian `df`, at each point of `points`.
pub fn el_residual(
    field: &FrameField,
    df: impl Fn(&Vec2) -> Mat2,
    archetype: &Archetype,
    points: &[Vec2],
    h: f64,
) -> Result<Vec<Vec2>, EnergyError> {
    let stress = |x: &Vec2| -> Result<Mat2, EnergyError> {
        let a = df(x) * field.frame(x)?;
        if !is_c2_at(archetype, &a) {
            return Err(EnergyError::NonSmoothPoint([x.x, x.y]));
        }
        Ok(archetype.gradient(&a))
    };
    points
        .iter()
        .map(|x| {
            let e = field.frame(x)?;
            let p = stress(x)?;
            let trace = field.torsion_at(x)?.trace();
            let mut r = Vec2::zeros();
            for i in 0..2 {
                let ei = e.column(i).into_owned();
                let dp = (stress(&(x + ei * h))?.column(i) - stress(&(x - ei * h))?.column(i))
                    / (2.0 * h);
                r += dp - p.column(i) * trace[i];
            }
            Ok(r)
        })
        .collect()
}
