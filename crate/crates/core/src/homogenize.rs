//! Homogenization studies: build a sequence of dislocated bodies from a frame
//! field, measure how fast their frames approach the field, and compare
//! minimal elastic energies on both sides.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constitutive::{Archetype, ConstitutiveError, EnergyDensity};
use crate::dislocation_builder::{assemble, Assembled, BuildError};
use crate::elastic_energy::{
    best_effort, flatten, minimize, propagate_frame, smooth_minimum, ChartMesh, Elements,
    EnergyError, MeshFrame, MinimizeOptions,
};
use crate::geom::{rotation, Mat2, Rigid, Vec2};
use crate::weitzenbock_field::{FieldError, FrameField, GeodesicTriangulation, DEFAULT_DELTA};

pub const SCHEMA_VERSION: u32 = 1;
pub const SURROGATE_NOTE: &str = "F_n is the per-triangle affine map matching triangle corners";

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown fixture {0:?}")]
    UnknownFixture(String),
    #[error("n values must be strictly increasing and at least 1")]
    BadLadder,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
}

pub fn fixture(name: &str, tau: f64) -> Result<FrameField, StudyError> {
    match name {
        "identity" => Ok(FrameField::identity()),
        "constant_torsion" => Ok(FrameField::constant_torsion(tau)),
        "bracket_demo" => Ok(FrameField::bracket_demo()),
        other => Err(StudyError::UnknownFixture(other.to_string())),
    }
}

/// Affine map `x -> lin x + shift` from a parent's development to the chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub lin: Mat2,
    pub shift: Vec2,
}

impl Affine {
    pub fn apply(&self, x: &Vec2) -> Vec2 {
        self.lin * x + self.shift
    }

    /// The affine map sending `from[k]` to `to[k]`.
    pub fn matching(from: &[Vec2; 3], to: &[Vec2; 3]) -> Self {
        let cols = |p: &[Vec2; 3]| Mat2::from_columns(&[p[1] - p[0], p[2] - p[0]]);
        let lin = cols(to) * cols(from).try_inverse().expect("nondegenerate triangle");
        Affine {
            lin,
            shift: to[0] - lin * from[0],
        }
    }
}

/// One rung of the homogenization ladder.
#[derive(Debug, Clone)]
pub struct Stage {
    pub n: usize,
    pub triangulation: GeodesicTriangulation,
    pub assembled: Assembled,
    pub frame: MeshFrame,
    /// `F_n` on each parent triangle.
    pub correspondence: Vec<Affine>,
    /// Rigid map from each mesh triangle's local chart to its parent's development.
    pub to_development: Vec<Rigid>,
}

impl Stage {
    pub fn num_dislocations(&self) -> usize {
        self.assembled.mesh.core_slits().len()
    }

    /// `dF_n E_n` on mesh triangle `t`, before any seed alignment.
    fn pushed_frame(&self, t: usize) -> Mat2 {
        let parent = self.assembled.parent[t];
        self.correspondence[parent].lin
            * rotation(self.to_development[t].angle)
            * self.frame.frames[t]
    }

    /// Chart images of mesh triangle `t`'s corners.
    pub fn chart_corners(&self, t: usize) -> [Vec2; 3] {
        let f = &self.correspondence[self.assembled.parent[t]];
        self.assembled.corner_coords[t].map(|p| f.apply(&p))
    }

    /// Chart image of every mesh vertex, taken from its first triangle.
    pub fn chart_vertices(&self) -> Vec<Vec2> {
        let mesh = &self.assembled.mesh;
        (0..mesh.num_vertices())
            .map(|v| {
                let t = mesh.vertex_triangles(v)[0];
                self.chart_corners(t)[mesh.corner_of(t, v).expect("incident")]
            })
            .collect()
    }

    /// Chart images of the two cone points of every core.
    pub fn core_images(&self) -> Vec<Vec2> {
        let mesh = &self.assembled.mesh;
        let charts = self.chart_vertices();
        mesh.core_slits()
            .iter()
            .flat_map(|c| [charts[c.plus], charts[c.minus]])
            .collect()
    }

    pub fn max_core_length(&self) -> f64 {
        self.assembled
            .mesh
            .core_slits()
            .iter()
            .map(|c| c.d)
            .fold(0.0, f64::max)
    }
}

/// Builds the dislocated body for `n`, its parallel frame, and `F_n`. The
/// frame's seed rotation is fitted so that `dF_n E_n` best matches the field.
pub fn build_stage(field: &FrameField, n: usize, delta: f64) -> Result<Stage, StudyError> {
    let triangulation = field.triangulate(n, delta)?;
    let data = triangulation.to_triangulation_data();
    let assembled = assemble(&data)?;
    let mesh = &assembled.mesh;
    let correspondence = assembled
        .development
        .iter()
        .zip(&data.incidence)
        .map(|(dev, inc)| Affine::matching(dev, &inc.map(|v| triangulation.vertices[v])))
        .collect();
    let to_development = (0..mesh.num_triangles())
        .map(|t| {
            let (local, cc) = (mesh.local_coords(t), assembled.corner_coords[t]);
            Rigid::aligning(&local[0], &local[1], &cc[0], &cc[1])
        })
        .collect();
    let frame = propagate_frame(mesh, 0, 0.0)?;
    let mut stage = Stage {
        n,
        triangulation,
        assembled,
        frame,
        correspondence,
        to_development,
    };
    let mut cross = Mat2::zeros();
    for t in 0..stage.assembled.mesh.num_triangles() {
        let c = stage.chart_corners(t);
        let x = (c[0] + c[1] + c[2]) / 3.0;
        cross +=
            stage.pushed_frame(t).transpose() * field.frame(&x)? * stage.assembled.mesh.area(t);
    }
    let seed = (cross[(1, 0)] - cross[(0, 1)]).atan2(cross[(0, 0)] + cross[(1, 1)]);
    stage.frame = propagate_frame(&stage.assembled.mesh, 0, seed)?;
    Ok(stage)
}

pub fn build_sequence(
    field: &FrameField,
    ns: &[usize],
    delta: f64,
) -> Result<Vec<Stage>, StudyError> {
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StudyError::BadLadder);
    }
    ns.par_iter()
        .map(|&n| build_stage(field, n, delta))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    /// Sup of `|dF_n E_n - E|` over points farther than the exclusion radius
    /// from every core; `None` when no sample point is that far.
    pub sup_off_core: Option<f64>,
    /// `(int |dF_n E_n - E|^p)^(1/p)` over the whole body.
    pub integrated: f64,
    pub exclusion_radius: f64,
}

/// Measures `|dF_n E_n - E|` at the corners and centroid of every mesh triangle.
pub fn frame_deviation(
    field: &FrameField,
    stage: &Stage,
    exclusion_radius: f64,
    p: f64,
) -> Result<Deviation, StudyError> {
    let cores = stage.core_images();
    let r2 = exclusion_radius * exclusion_radius;
    let mesh = &stage.assembled.mesh;
    let parts: Vec<(Option<f64>, f64)> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let c = stage.chart_corners(t);
            let centroid = (c[0] + c[1] + c[2]) / 3.0;
            let pushed = stage.pushed_frame(t);
            let mut sup: Option<f64> = None;
            for x in [c[0], c[1], c[2], centroid] {
                if cores.iter().all(|q| (q - x).norm_squared() > r2) {
                    let d = (pushed - field.frame(&x)?).norm();
                    sup = Some(sup.map_or(d, |s| s.max(d)));
                }
            }
            let dev = (pushed - field.frame(&centroid)?).norm();
            let chart_area = 0.5 * crate::geom::cross(&(c[1] - c[0]), &(c[2] - c[0])).abs();
            Ok((sup, chart_area * dev.powf(p)))
        })
        .collect::<Result<_, FieldError>>()?;
    let sup_off_core = parts.iter().filter_map(|x| x.0).reduce(f64::max);
    let integrated = parts.iter().map(|x| x.1).sum::<f64>().powf(1.0 / p);
    Ok(Deviation {
        sup_off_core,
        integrated,
        exclusion_radius,
    })
}

/// Smooth test maps for the recovery-sequence check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMap {
    Shear,
    Stretch,
    Twist,
}

impl ProbeMap {
    pub const ALL: [ProbeMap; 3] = [ProbeMap::Shear, ProbeMap::Stretch, ProbeMap::Twist];

    pub fn value(&self, p: &Vec2) -> Vec2 {
        let (x, y) = (p.x, p.y);
        match self {
            ProbeMap::Shear => Vec2::new(x + 0.1 * (PI * y).sin(), y),
            ProbeMap::Stretch => Vec2::new(1.2 * x, 0.9 * y + 0.05 * x * x),
            ProbeMap::Twist => Vec2::new(x * (0.3 * y).cos(), y + 0.1 * x * y),
        }
    }

    pub fn jacobian(&self, p: &Vec2) -> Mat2 {
        let (x, y) = (p.x, p.y);
        match self {
            ProbeMap::Shear => Mat2::new(1.0, 0.1 * PI * (PI * y).cos(), 0.0, 1.0),
            ProbeMap::Stretch => Mat2::new(1.2, 0.0, 0.1 * x, 0.9),
            ProbeMap::Twist => Mat2::new(
                (0.3 * y).cos(),
                -0.3 * x * (0.3 * y).sin(),
                0.1 * y,
                1.0 + 0.1 * x,
            ),
        }
    }
}

/// `int_body W(df E) rho dx` with a 2x2 Gauss rule on `cells x cells` squares.
pub fn smooth_energy_of(
    field: &FrameField,
    df: impl Fn(&Vec2) -> Mat2 + Sync,
    w: &dyn EnergyDensity,
    cells: usize,
) -> Result<f64, StudyError> {
    let (lo, size) = (field.body.lo, field.body.size());
    let (hx, hy) = (size.x / cells as f64, size.y / cells as f64);
    let g = 0.5 / 3f64.sqrt();
    let rows: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|j| {
            let mut sum = 0.0;
            for i in 0..cells {
                for (a, b) in [(-g, -g), (g, -g), (-g, g), (g, g)] {
                    let x = lo + Vec2::new(hx * (i as f64 + 0.5 + a), hy * (j as f64 + 0.5 + b));
                    sum += w.value(&(df(&x) * field.frame(&x)?)) * field.volume_density(&x)?;
                }
            }
            Ok(sum * 0.25 * hx * hy)
        })
        .collect::<Result<_, FieldError>>()?;
    Ok(rows.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub name: String,
    pub tau: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            name: "constant_torsion".into(),
            tau: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchetypeConfig {
    pub name: String,
    pub p: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Default for ArchetypeConfig {
    fn default() -> Self {
        ArchetypeConfig {
            name: "qw_iso".into(),
            p: 2.0,
            b1: 1.0,
            b2: 1.0,
        }
    }
}

impl ArchetypeConfig {
    pub fn archetype(&self) -> Result<Archetype, ConstitutiveError> {
        let (p, b1, b2) = (self.p, self.b1, self.b2);
        let spec = match self.name.as_str() {
            "w_iso" | "qw_iso" => format!("{}({p})", self.name),
            "w_cubic" | "qw_cubic" => format!("{}({b1},{b2})", self.name),
            "composite_cubic" => format!("composite_cubic({b1},{b2},{p})"),
            other => other.to_string(),
        };
        spec.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriangulationConfig {
    pub n: Vec<usize>,
    pub delta: f64,
    /// Exclusion radius around cores, in multiples of the largest core length.
    pub exclusion_factor: f64,
}

impl Default for TriangulationConfig {
    fn default() -> Self {
        TriangulationConfig {
            n: vec![4, 8, 16],
            delta: DEFAULT_DELTA,
            exclusion_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub perturbation: f64,
    /// Skip all minimizations and report deviations only.
    pub skip_energies: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = MinimizeOptions::default();
        OptimizerConfig {
            tol: d.tol,
            max_iter: d.max_iter,
            restarts: d.restarts,
            seed: d.seed,
            perturbation: d.perturbation,
            skip_energies: false,
        }
    }
}

impl OptimizerConfig {
    pub fn options(&self) -> MinimizeOptions {
        MinimizeOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            restarts: self.restarts,
            seed: self.seed,
            perturbation: self.perturbation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub fixture: FixtureConfig,
    pub archetype: ArchetypeConfig,
    pub triangulation: TriangulationConfig,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
}

impl StudyConfig {
    /// SHA-256 of everything except the output section.
    pub fn hash(&self) -> String {
        let key = serde_json::json!([
            self.fixture,
            self.archetype,
            self.triangulation,
            self.optimizer
        ]);
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub probe: ProbeMap,
    pub energy_n: f64,
    pub energy_ref: f64,
    pub abs_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub n: usize,
    pub num_dislocations: usize,
    pub max_edge: f64,
    pub dev_sup_offcore: Option<f64>,
    pub dev_lp: f64,
    pub exclusion_radius: f64,
    pub energy_n: Option<f64>,
    pub energy_ref: Option<f64>,
    pub abs_gap: Option<f64>,
    pub converged: bool,
    pub probes: Vec<ProbeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub fixture: String,
    pub archetype: String,
    pub correspondence: String,
    pub seeds: Vec<u64>,
    pub tol: f64,
    pub lp: f64,
    pub reference_cells: usize,
    pub records: Vec<StageRecord>,
}

/// A report plus the wall-clock seconds spent on each rung.
#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub report: ConvergenceReport,
    pub seconds: Vec<f64>,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self, seconds: &[f64]) -> String {
        let mut out = csv::Writer::from_writer(Vec::new());
        let cols = [
            "n",
            "dislocations",
            "max_edge",
            "dev_sup_offcore",
            "dev_lp",
            "energy_n",
            "energy_ref",
            "abs_gap",
            "seconds",
        ];
        out.write_record(cols).expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (r, s) in self.records.iter().zip(seconds) {
            out.write_record([
                r.n.to_string(),
                r.num_dislocations.to_string(),
                r.max_edge.to_string(),
                opt(r.dev_sup_offcore),
                r.dev_lp.to_string(),
                opt(r.energy_n),
                opt(r.energy_ref),
                opt(r.abs_gap),
                format!("{s:.3}"),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(out.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Runs the full ladder for `config`.
pub fn gamma_study(config: &StudyConfig) -> Result<StudyOutput, StudyError> {
    let field = fixture(&config.fixture.name, config.fixture.tau)?;
    let archetype = config.archetype.archetype()?;
    let ns = &config.triangulation.n;
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StudyError::BadLadder);
    }
    let opts = config.optimizer.options();
    let lp = archetype.growth_exponent();
    let max_n = *ns.last().expect("non-empty");
    let reference_cells = (2.0 * 2f64.sqrt() * max_n as f64).ceil() as usize;
    let energy_ref = if config.optimizer.skip_energies {
        None
    } else {
        let chart = ChartMesh::grid(&field, reference_cells);
        Some(best_effort(smooth_minimum(&field, &chart, &archetype, &opts))?.energy)
    };
    let probe_refs = ProbeMap::ALL
        .iter()
        .map(|f| smooth_energy_of(&field, |x| f.jacobian(x), &archetype, 4 * reference_cells))
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    let mut seconds = Vec::new();
    for &n in ns {
        let clock = std::time::Instant::now();
        let stage = build_stage(&field, n, config.triangulation.delta)?;
        let radius = config.triangulation.exclusion_factor * stage.max_core_length();
        let dev = frame_deviation(&field, &stage, radius, lp)?;
        let (energy_n, converged) = match energy_ref {
            None => (None, true),
            Some(_) => {
                let run = minimize(&stage.assembled.mesh, &stage.frame, &archetype, &opts);
                let converged = run.is_ok();
                (Some(best_effort(run)?.energy), converged)
            }
        };
        let elements = Elements::on_mesh(&stage.assembled.mesh, &stage.frame);
        let charts = stage.chart_vertices();
        let probes = ProbeMap::ALL
            .iter()
            .zip(&probe_refs)
            .map(|(f, &energy_ref)| {
                let values: Vec<Vec2> = charts.iter().map(|x| f.value(x)).collect();
                let energy_n = elements.energy(&flatten(&values), &archetype);
                ProbeRecord {
                    probe: *f,
                    energy_n,
                    energy_ref,
                    abs_gap: (energy_n - energy_ref).abs(),
                }
            })
            .collect();
        records.push(StageRecord {
            n,
            num_dislocations: stage.num_dislocations(),
            max_edge: stage.triangulation.max_edge_length(),
            dev_sup_offcore: dev.sup_off_core,
            dev_lp: dev.integrated,
            exclusion_radius: radius,
            energy_n,
            energy_ref,
            abs_gap: energy_n.zip(energy_ref).map(|(a, b)| (a - b).abs()),
            converged,
            probes,
        });
        seconds.push(clock.elapsed().as_secs_f64());
    }
    let report = ConvergenceReport {
        schema_version: SCHEMA_VERSION,
        config_hash: config.hash(),
        fixture: field.name(),
        archetype: archetype.to_string(),
        correspondence: SURROGATE_NOTE.into(),
        seeds: vec![opts.seed],
        tol: opts.tol,
        lp,
        reference_cells,
        records,
    };
    Ok(StudyOutput { report, seconds })
}
