//! Small planar helpers shared by the mesh, builder and energy code.

use nalgebra::{Matrix2, Vector2};
use std::f64::consts::PI;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

pub fn rotate(v: &Vec2, angle: f64) -> Vec2 {
    rotation(angle) * v
}

pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Counter-clockwise rotation by a quarter turn.
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Angle opposite to side `opp` in a triangle with sides `adj1`, `adj2`, `opp`.
///
/// Uses `atan2(4 * area, adj1^2 + adj2^2 - opp^2)` with Kahan's stable Heron
/// formula, which keeps the three angles summing to pi to ~1e-15.
pub fn angle_from_lengths(adj1: f64, adj2: f64, opp: f64) -> f64 {
    let four_area = 4.0 * triangle_area(adj1, adj2, opp);
    four_area.atan2(adj1 * adj1 + adj2 * adj2 - opp * opp)
}

/// Area from edge lengths (Kahan's ordering of Heron's formula).
pub fn triangle_area(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    let [a, b, c] = s;
    let prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * prod.max(0.0).sqrt()
}

/// A proper rigid motion `x -> R(angle) x + shift` of the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid {
    pub angle: f64,
    pub shift: Vec2,
}

impl Rigid {
    pub fn identity() -> Self {
        Rigid {
            angle: 0.0,
            shift: Vec2::zeros(),
        }
    }

    pub fn apply(&self, x: &Vec2) -> Vec2 {
        rotate(x, self.angle) + self.shift
    }

    pub fn apply_vector(&self, v: &Vec2) -> Vec2 {
        rotate(v, self.angle)
    }

    /// `self.compose(other)` applies `other` first.
    pub fn compose(&self, other: &Rigid) -> Rigid {
        Rigid {
            angle: self.angle + other.angle,
            shift: self.apply(&other.shift),
        }
    }

    pub fn inverse(&self) -> Rigid {
        Rigid {
            angle: -self.angle,
            shift: -rotate(&self.shift, -self.angle),
        }
    }

    /// The motion sending segment `(a0, a1)` onto the direction and start of `(b0, b1)`.
    pub fn aligning(a0: &Vec2, a1: &Vec2, b0: &Vec2, b1: &Vec2) -> Rigid {
        let da = a1 - a0;
        let db = b1 - b0;
        let angle = db.y.atan2(db.x) - da.y.atan2(da.x);
        let shift = b0 - rotate(a0, angle);
        Rigid { angle, shift }
    }
}
