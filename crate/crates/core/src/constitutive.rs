//! Energy densities on 2x2 matrices, their quasiconvex envelopes, and the
//! checks that make a density an admissible archetype.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{rotation, Mat2};

/// Invariance residual below which a rotation counts as a symmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
pub const SYMMETRY_GRID: usize = 629;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstitutiveError {
    #[error("unknown archetype {0:?}")]
    UnknownArchetype(String),
    #[error("invariance holds for only {agree} of {total} samples at angle {angle}")]
    InconclusiveSamples {
        angle: f64,
        agree: usize,
        total: usize,
    },
    #[error("no positive lower growth constant fits the samples")]
    GrowthFitFailed,
}

/// `|A|^2`, Frobenius.
pub fn norm2(a: &Mat2) -> f64 {
    a.norm_squared()
}

/// `[[d, -c], [-b, a]]`, the derivative of `det`.
pub fn cofactor(a: &Mat2) -> Mat2 {
    Mat2::new(a[(1, 1)], -a[(1, 0)], -a[(0, 1)], a[(0, 0)])
}

fn s_plus_minus(a: &Mat2) -> (f64, f64) {
    let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    ((p + s).hypot(r - q), (p - s).hypot(q + r))
}

/// `(mu1, mu2)` with `mu1 = sigma1`, `mu2 = sign(det A) sigma2`.
pub fn signed_singular_values(a: &Mat2) -> (f64, f64) {
    let (sp, sm) = s_plus_minus(a);
    (0.5 * (sp + sm), 0.5 * (sp - sm))
}

/// Nearest rotation to `a`; the identity when `a` is a pure reflection-like
/// matrix with no rotational part.
pub fn polar_rotation(a: &Mat2) -> Mat2 {
    let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let sp = (p + s).hypot(r - q);
    if sp == 0.0 {
        return Mat2::identity();
    }
    let (c, sn) = ((p + s) / sp, (r - q) / sp);
    Mat2::new(c, -sn, sn, c)
}

/// `dist^2(A, SO(2)) = |A|^2 - 2 (mu1 + mu2) + 2`.
pub fn dist2_so2(a: &Mat2) -> f64 {
    let (sp, _) = s_plus_minus(a);
    (norm2(a) - 2.0 * sp + 2.0).max(0.0)
}

pub fn w_iso(a: &Mat2, p: f64) -> f64 {
    dist2_so2(a).powf(0.5 * p)
}

pub fn grad_w_iso(a: &Mat2, p: f64) -> Mat2 {
    let d2 = dist2_so2(a);
    if d2 == 0.0 {
        return Mat2::zeros();
    }
    (a - polar_rotation(a)) * (p * d2.powf(0.5 * p - 1.0))
}

pub fn qw_iso(a: &Mat2, p: f64) -> f64 {
    let (sp, _) = s_plus_minus(a);
    if sp >= 1.0 {
        w_iso(a, p)
    } else {
        (1.0 - 2.0 * a.determinant()).powf(0.5 * p)
    }
}

pub fn grad_qw_iso(a: &Mat2, p: f64) -> Mat2 {
    let (sp, _) = s_plus_minus(a);
    if sp >= 1.0 {
        grad_w_iso(a, p)
    } else {
        cofactor(a) * (-p * (1.0 - 2.0 * a.determinant()).powf(0.5 * p - 1.0))
    }
}

pub fn w_cubic(a: &Mat2, betas: [f64; 2]) -> f64 {
    (0..2)
        .map(|i| betas[i] * (a.column(i).norm() - 1.0).powi(2))
        .sum()
}

pub fn qw_cubic(a: &Mat2, betas: [f64; 2]) -> f64 {
    (0..2)
        .map(|i| betas[i] * (a.column(i).norm() - 1.0).max(0.0).powi(2))
        .sum()
}

fn cubic_gradient(a: &Mat2, betas: [f64; 2], clip: bool) -> Mat2 {
    let mut g = Mat2::zeros();
    for i in 0..2 {
        let col = a.column(i);
        let len = col.norm();
        let excess = if clip {
            (len - 1.0).max(0.0)
        } else {
            len - 1.0
        };
        if len > 0.0 && excess != 0.0 {
            g.set_column(i, &(col * (2.0 * betas[i] * excess / len)));
        }
    }
    g
}

pub fn grad_w_cubic(a: &Mat2, betas: [f64; 2]) -> Mat2 {
    cubic_gradient(a, betas, false)
}

pub fn grad_qw_cubic(a: &Mat2, betas: [f64; 2]) -> Mat2 {
    cubic_gradient(a, betas, true)
}

pub fn composite_cubic(a: &Mat2, betas: [f64; 2], p: f64) -> f64 {
    qw_cubic(a, betas) + qw_iso(a, p)
}

pub fn grad_composite_cubic(a: &Mat2, betas: [f64; 2], p: f64) -> Mat2 {
    grad_qw_cubic(a, betas) + grad_qw_iso(a, p)
}

/// `(|A|^2 / 2 - 1)^2 + (det A - 1)^2`: smooth, zero exactly on SO(2).
pub fn smooth_test(a: &Mat2) -> f64 {
    (0.5 * norm2(a) - 1.0).powi(2) + (a.determinant() - 1.0).powi(2)
}

pub fn grad_smooth_test(a: &Mat2) -> Mat2 {
    a * (2.0 * (0.5 * norm2(a) - 1.0)) + cofactor(a) * (2.0 * (a.determinant() - 1.0))
}

/// A frame-indifferent energy density on 2x2 matrices.
pub trait EnergyDensity: Sync {
    fn value(&self, a: &Mat2) -> f64;
    fn gradient(&self, a: &Mat2) -> Mat2;
    fn growth_exponent(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Symmetry {
    Continuous,
    /// Right rotations by the listed angles generate the group.
    Discrete(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Archetype {
    WIso { p: f64 },
    QwIso { p: f64 },
    WCubic { b1: f64, b2: f64 },
    QwCubic { b1: f64, b2: f64 },
    CompositeCubic { b1: f64, b2: f64, p: f64 },
    SmoothTest,
}

impl Archetype {
    pub fn declared_symmetry(&self) -> Symmetry {
        match *self {
            Archetype::WIso { .. } | Archetype::QwIso { .. } | Archetype::SmoothTest => {
                Symmetry::Continuous
            }
            Archetype::WCubic { b1, b2 }
            | Archetype::QwCubic { b1, b2 }
            | Archetype::CompositeCubic { b1, b2, .. } => {
                Symmetry::Discrete(vec![if b1 == b2 { PI / 2.0 } else { PI }])
            }
        }
    }

    pub fn is_isotropic(&self) -> bool {
        self.declared_symmetry() == Symmetry::Continuous
    }
}

impl EnergyDensity for Archetype {
    fn value(&self, a: &Mat2) -> f64 {
        match *self {
            Archetype::WIso { p } => w_iso(a, p),
            Archetype::QwIso { p } => qw_iso(a, p),
            Archetype::WCubic { b1, b2 } => w_cubic(a, [b1, b2]),
            Archetype::QwCubic { b1, b2 } => qw_cubic(a, [b1, b2]),
            Archetype::CompositeCubic { b1, b2, p } => composite_cubic(a, [b1, b2], p),
            Archetype::SmoothTest => smooth_test(a),
        }
    }

    fn gradient(&self, a: &Mat2) -> Mat2 {
        match *self {
            Archetype::WIso { p } => grad_w_iso(a, p),
            Archetype::QwIso { p } => grad_qw_iso(a, p),
            Archetype::WCubic { b1, b2 } => grad_w_cubic(a, [b1, b2]),
            Archetype::QwCubic { b1, b2 } => grad_qw_cubic(a, [b1, b2]),
            Archetype::CompositeCubic { b1, b2, p } => grad_composite_cubic(a, [b1, b2], p),
            Archetype::SmoothTest => grad_smooth_test(a),
        }
    }

    fn growth_exponent(&self) -> f64 {
        match *self {
            Archetype::WIso { p }
            | Archetype::QwIso { p }
            | Archetype::CompositeCubic { p, .. } => p,
            Archetype::WCubic { .. } | Archetype::QwCubic { .. } => 2.0,
            Archetype::SmoothTest => 4.0,
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Archetype::WIso { p } => write!(f, "w_iso({p})"),
            Archetype::QwIso { p } => write!(f, "qw_iso({p})"),
            Archetype::WCubic { b1, b2 } => write!(f, "w_cubic({b1},{b2})"),
            Archetype::QwCubic { b1, b2 } => write!(f, "qw_cubic({b1},{b2})"),
            Archetype::CompositeCubic { b1, b2, p } => write!(f, "composite_cubic({b1},{b2},{p})"),
            Archetype::SmoothTest => write!(f, "smooth_test"),
        }
    }
}

impl FromStr for Archetype {
    type Err = ConstitutiveError;

    /// Parses `name(args)`, e.g. `qw_iso(2)` or `composite_cubic(1,1,2)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConstitutiveError::UnknownArchetype(s.to_string());
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            None => (s, ""),
            _ => return Err(bad()),
        };
        let nums: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_, _>>()?
        };
        let arch = match (name.trim(), nums.as_slice()) {
            ("w_iso", []) => Archetype::WIso { p: 2.0 },
            ("w_iso", [p]) => Archetype::WIso { p: *p },
            ("qw_iso", []) => Archetype::QwIso { p: 2.0 },
            ("qw_iso", [p]) => Archetype::QwIso { p: *p },
            ("w_cubic", [b1, b2]) => Archetype::WCubic { b1: *b1, b2: *b2 },
            ("qw_cubic", [b1, b2]) => Archetype::QwCubic { b1: *b1, b2: *b2 },
            ("composite_cubic", [b1, b2]) => Archetype::CompositeCubic {
                b1: *b1,
                b2: *b2,
                p: 2.0,
            },
            ("composite_cubic", [b1, b2, p]) => Archetype::CompositeCubic {
                b1: *b1,
                b2: *b2,
                p: *p,
            },
            ("smooth_test", []) => Archetype::SmoothTest,
            _ => return Err(bad()),
        };
        Ok(arch)
    }
}

/// Reproducible sample matrices with entries in `[-scale, scale]`.
pub fn sample_matrices(count: usize, scale: f64, seed: u64) -> Vec<Mat2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Mat2::from_fn(|_, _| rng.random_range(-scale..=scale)))
        .collect()
}

/// Largest `|W(A g) - W(A)|` over the samples for `g` a rotation by `angle`.
pub fn right_invariance_residual(w: &dyn EnergyDensity, angle: f64, samples: &[Mat2]) -> f64 {
    let g = rotation(angle);
    samples
        .iter()
        .map(|a| (w.value(&(a * g)) - w.value(a)).abs())
        .fold(0.0, f64::max)
}

/// The `q`-quantile of the per-sample residuals, insensitive to a few outliers.
fn quantile_residual(w: &dyn EnergyDensity, angle: f64, samples: &[Mat2], q: f64) -> f64 {
    let g = rotation(angle);
    let mut r: Vec<f64> = samples
        .iter()
        .map(|a| (w.value(&(a * g)) - w.value(a)).abs())
        .collect();
    let k = ((r.len() as f64 * q) as usize).min(r.len().saturating_sub(1));
    *r.select_nth_unstable_by(k, f64::total_cmp).1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "symmetry", rename_all = "snake_case")]
pub enum SymmetryClass {
    Continuous,
    Discrete {
        generators: Vec<String>,
        angles: Vec<f64>,
    },
    NotSolid,
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Formats `angle` as `"pi/m"` (or `"pi"`), falling back to radians.
pub fn angle_label(angle: f64) -> String {
    let m = (PI / angle).round();
    if m >= 1.0 && (PI / m - angle).abs() < 1e-6 {
        if m == 1.0 {
            "pi".into()
        } else {
            format!("pi/{m}")
        }
    } else {
        format!("{angle}")
    }
}

/// Classifies the right-rotation symmetry of `w` on `samples` by sweeping
/// `grid` angles in `[0, 2 pi)` and refining local minima of the residual.
pub fn symmetry_probe(
    w: &dyn EnergyDensity,
    grid: usize,
    samples: &[Mat2],
) -> Result<SymmetryClass, ConstitutiveError> {
    let shears = [Mat2::new(1.0, 0.5, 0.0, 1.0), Mat2::new(1.0, 0.0, 0.5, 1.0)];
    for s in &shears {
        if samples
            .iter()
            .all(|a| (w.value(&(a * s)) - w.value(a)).abs() < SYMMETRY_TOLERANCE)
        {
            return Ok(SymmetryClass::NotSolid);
        }
    }
    let step = 2.0 * PI / grid as f64;
    let residual = |t: f64| right_invariance_residual(w, t, samples);
    let values: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|k| residual(k as f64 * step))
        .collect();
    if values.iter().all(|&v| v < SYMMETRY_TOLERANCE) {
        return Ok(SymmetryClass::Continuous);
    }
    let robust = |t: f64| quantile_residual(w, t, samples, 0.8);
    let bulk: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|k| robust(k as f64 * step))
        .collect();
    let mut angles = Vec::new();
    for k in 1..grid {
        let (prev, next) = (bulk[k - 1], bulk[(k + 1) % grid]);
        if bulk[k] <= prev && bulk[k] < next {
            let t = golden_min(robust, (k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
            if residual(t) < SYMMETRY_TOLERANCE {
                angles.push(t);
            } else {
                let g = rotation(t);
                let agree = samples
                    .iter()
                    .filter(|a| (w.value(&(*a * g)) - w.value(a)).abs() < SYMMETRY_TOLERANCE)
                    .count();
                if agree * 10 >= samples.len() * 9 {
                    return Err(ConstitutiveError::InconclusiveSamples {
                        angle: t,
                        agree,
                        total: samples.len(),
                    });
                }
            }
        }
    }
    // the group is cyclic; its generator is the smallest nontrivial symmetry
    let generators: Vec<f64> = angles.first().copied().into_iter().collect();
    Ok(SymmetryClass::Discrete {
        generators: generators.iter().map(|&g| angle_label(g)).collect(),
        angles,
    })
}

/// Fitted constants in `alpha |A|^p - offset <= W(A) <= beta (1 + |A|^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub alpha: f64,
    pub beta: f64,
    pub offset: f64,
}

/// Fits growth constants: `alpha` on spheres `|A| in {10, 100}`, then `beta`
/// and `offset` over radii `0, 0.1, ..., 4` and the same far spheres.
pub fn fit_growth(
    w: &dyn EnergyDensity,
    per_sphere: usize,
    seed: u64,
) -> Result<GrowthFit, ConstitutiveError> {
    let p = w.growth_exponent();
    let mut dirs = sample_matrices(per_sphere, 1.0, seed);
    dirs.push(Mat2::identity());
    dirs.push(Mat2::new(1.0, 0.0, 0.0, -1.0));
    let unit: Vec<Mat2> = dirs.iter().map(|d| d / d.norm()).collect();
    let far = [10.0, 100.0];
    let alpha = far
        .iter()
        .flat_map(|r| unit.iter().map(move |d| w.value(&(d * *r)) / r.powf(p)))
        .fold(f64::INFINITY, f64::min);
    if !(alpha > 0.0) {
        return Err(ConstitutiveError::GrowthFitFailed);
    }
    let radii = (0..=40).map(|k| 0.1 * k as f64).chain(far);
    let (mut beta, mut offset): (f64, f64) = (0.0, 0.0);
    for r in radii {
        for d in &unit {
            let v = w.value(&(d * r));
            let np = r.powf(p);
            beta = beta.max(v / (1.0 + np));
            offset = offset.max(alpha * np - v);
        }
    }
    Ok(GrowthFit {
        alpha,
        beta,
        offset,
    })
}

/// Smallest `C` with `|W(A) - W(B)| <= C (1 + |A|^{p-1} + |B|^{p-1}) |A - B|`
/// over consecutive sample pairs.
pub fn p_lipschitz_constant(w: &dyn EnergyDensity, samples: &[Mat2]) -> f64 {
    let p = w.growth_exponent();
    samples
        .windows(2)
        .map(|ab| {
            let (a, b) = (&ab[0], &ab[1]);
            let denom = (1.0 + a.norm().powf(p - 1.0) + b.norm().powf(p - 1.0)) * (a - b).norm();
            if denom == 0.0 {
                0.0
            } else {
                (w.value(a) - w.value(b)).abs() / denom
            }
        })
        .fold(0.0, f64::max)
}

/// `E_q E_p^{-1}` for each `(p, q)` pair of implant indices.
pub fn material_connection_from_implants(implants: &[Mat2], pairs: &[(usize, usize)]) -> Vec<Mat2> {
    pairs
        .iter()
        .map(|&(p, q)| implants[q] * implants[p].try_inverse().expect("invertible implant"))
        .collect()
}

/// Largest `|W_p(A Pi) - W_q(A)|` over samples, with `W_x(A) = W(A E_x)`.
pub fn connection_invariance_residual(
    w: &dyn EnergyDensity,
    ep: &Mat2,
    eq: &Mat2,
    transfer: &Mat2,
    samples: &[Mat2],
) -> f64 {
    samples
        .iter()
        .map(|a| (w.value(&(a * transfer * ep)) - w.value(&(a * eq))).abs())
        .fold(0.0, f64::max)
}

/// `(E E^T)^{-1}` for each implant.
pub fn intrinsic_metric_from_implants(implants: &[Mat2]) -> Vec<Mat2> {
    implants
        .iter()
        .map(|e| {
            let g = (e * e.transpose())
                .try_inverse()
                .expect("invertible implant");
            (g + g.transpose()) * 0.5
        })
        .collect()
}
