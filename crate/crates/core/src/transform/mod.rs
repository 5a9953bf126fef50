//! 2×2 real linear maps acting on the image plane.
//!
//! A [`LinearMap2`] `T` acts on images through the contragredient rule
//! `(T f)(x) = f(T⁻¹ x)`; see [`crate::grid::Grid::resample_affine`].

mod classify;
mod parse;

pub use classify::{
    alignment_admits_invariance, classify, ClassifyOptions, InvarianceVerdict, TransformClass,
    TransformKind,
};
pub use parse::parse_transform;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinant magnitude below which a map is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

/// A point or displacement in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// The matrix `(a b; c d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearMap2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl LinearMap2 {
    pub const IDENTITY: LinearMap2 = LinearMap2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        LinearMap2 { a, b, c, d }
    }

    pub const fn diag(sx: f64, sy: f64) -> Self {
        LinearMap2::new(sx, 0.0, 0.0, sy)
    }

    pub const fn scale(s: f64) -> Self {
        LinearMap2::diag(s, s)
    }

    /// Horizontal shear `(1 k; 0 1)`.
    pub const fn shear(k: f64) -> Self {
        LinearMap2::new(1.0, k, 0.0, 1.0)
    }

    /// Counter-clockwise rotation by `theta` radians.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        LinearMap2::new(c, -s, s, c)
    }

    /// Rotation by `deg` degrees. Multiples of 90° are built from exact
    /// integers so they permute lattice points without rounding.
    pub fn rotation_degrees(deg: f64) -> Self {
        let quarter = deg / 90.0;
        if quarter == quarter.round() {
            let k = (quarter.round() as i64).rem_euclid(4);
            let (c, s) = match k {
                0 => (1.0, 0.0),
                1 => (0.0, 1.0),
                2 => (-1.0, 0.0),
                _ => (0.0, -1.0),
            };
            return LinearMap2::new(c, -s, s, c);
        }
        LinearMap2::rotation(deg.to_radians())
    }

    /// Reflection across the line through the origin at `deg` degrees.
    pub fn reflection_degrees(deg: f64) -> Self {
        let twice = 2.0 * deg;
        let r = LinearMap2::rotation_degrees(twice);
        // (cos 2φ  sin 2φ; sin 2φ  −cos 2φ)
        LinearMap2::new(r.a, r.c, r.c, -r.a)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> Result<LinearMap2> {
        let det = self.det();
        if det.abs() <= SINGULAR_EPS {
            return Err(Error::SingularMap {
                det,
                threshold: SINGULAR_EPS,
            });
        }
        Ok(LinearMap2::new(
            self.d / det,
            -self.b / det,
            -self.c / det,
            self.a / det,
        ))
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &LinearMap2) -> LinearMap2 {
        LinearMap2::new(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn transpose(&self) -> LinearMap2 {
        LinearMap2::new(self.a, self.c, self.b, self.d)
    }

    /// Largest singular value, from the closed-form eigenvalues of `TᵀT`.
    pub fn operator_norm(&self) -> f64 {
        let p = self.a * self.a + self.c * self.c;
        let q = self.a * self.b + self.c * self.d;
        let r = self.b * self.b + self.d * self.d;
        let half_tr = 0.5 * (p + r);
        let disc = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        (half_tr + disc).max(0.0).sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &LinearMap2) -> f64 {
        let da = self.a - other.a;
        let db = self.b - other.b;
        let dc = self.c - other.c;
        let dd = self.d - other.d;
        (da * da + db * db + dc * dc + dd * dd).sqrt()
    }

    /// `Tⁿ` by repeated squaring; negative powers go through the inverse.
    pub fn iterate(&self, n: i64) -> Result<LinearMap2> {
        let base = if n < 0 { self.inverse()? } else { *self };
        let mut e = n.unsigned_abs();
        let mut acc = LinearMap2::IDENTITY;
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&sq);
            }
            e >>= 1;
            if e > 0 {
                sq = sq.compose(&sq);
            }
        }
        Ok(acc)
    }

    /// `B · self · B⁻¹`.
    pub fn conjugate_by(&self, b: &LinearMap2) -> Result<LinearMap2> {
        Ok(b.compose(self).compose(&b.inverse()?))
    }

    /// Condition number in the operator norm.
    pub fn condition_number(&self) -> Result<f64> {
        Ok(self.operator_norm() * self.inverse()?.operator_norm())
    }
}

impl Mul for LinearMap2 {
    type Output = LinearMap2;
    fn mul(self, rhs: LinearMap2) -> LinearMap2 {
        self.compose(&rhs)
    }
}

impl fmt::Display for LinearMap2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {}; {} {})", self.a, self.b, self.c, self.d)
    }
}
