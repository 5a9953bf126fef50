//! Jordan-form classification of invertible 2×2 maps.
//!
//! The branches follow the dynamics of the iterates `Tⁿ`: elliptic maps are
//! rotations in a skewed basis, parabolic maps are unipotent shears,
//! hyperbolic maps stretch one eigendirection while contracting the other,
//! and maps with `|det| ≠ 1` contract or expand area outright.

use std::fmt;

use serde::{Serialize, Serializer};

use super::{LinearMap2, Vec2};

#[derive(Clone, Copy, Debug)]
pub struct ClassifyOptions {
    /// Relative tolerance; the absolute tolerance is `tol · ‖T‖`.
    pub tol: f64,
    /// Largest order tried when looking for `Tⁿ = I`.
    pub n_max: u32,
    /// Band around 1 inside which an eigenvalue modulus counts as 1.
    pub unit_band: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            tol: 1e-9,
            n_max: 360,
            unit_band: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    Identity,
    EllipticFiniteOrder(u32),
    EllipticInfinite,
    Parabolic,
    Hyperbolic,
    ReflectionConjugate,
    ContractingOrExpanding,
}

impl TransformKind {
    pub fn is_elliptic(self) -> bool {
        matches!(
            self,
            TransformKind::EllipticFiniteOrder(_) | TransformKind::EllipticInfinite
        )
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformKind::Identity => f.write_str("identity"),
            TransformKind::EllipticFiniteOrder(n) => write!(f, "elliptic_finite_order({n})"),
            TransformKind::EllipticInfinite => f.write_str("elliptic_infinite"),
            TransformKind::Parabolic => f.write_str("parabolic"),
            TransformKind::Hyperbolic => f.write_str("hyperbolic"),
            TransformKind::ReflectionConjugate => f.write_str("reflection_conjugate"),
            TransformKind::ContractingOrExpanding => f.write_str("contracting_or_expanding"),
        }
    }
}

impl Serialize for TransformKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransformClass {
    pub kind: TransformKind,
    /// `B` with `B·T·B⁻¹` in canonical form, when one was computed.
    pub conjugator: Option<LinearMap2>,
    /// Rotation angle of the canonical form, elliptic kinds only.
    pub canonical_angle: Option<f64>,
    /// Eigenvalues as `(re, im)` pairs.
    pub eigenvalues: [(f64, f64); 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceVerdict {
    YesWithInvariantFeatures,
    No,
}

impl fmt::Display for InvarianceVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvarianceVerdict::YesWithInvariantFeatures => f.write_str("yes_with_invariant_features"),
            InvarianceVerdict::No => f.write_str("no"),
        }
    }
}

fn eigenvalues(t: &LinearMap2) -> [(f64, f64); 2] {
    let tr = t.trace();
    let det = t.det();
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // Roots of x² − tr·x + det, avoiding cancellation in the smaller one.
        let sgn = if tr >= 0.0 { 1.0 } else { -1.0 };
        let q = 0.5 * (tr + sgn * s);
        let (l1, l2) = if q != 0.0 { (q, det / q) } else { (0.5 * s, -0.5 * s) };
        let (big, small) = if l1.abs() >= l2.abs() { (l1, l2) } else { (l2, l1) };
        [(big, 0.0), (small, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [(0.5 * tr, im), (0.5 * tr, -im)]
    }
}

/// Eigenvector of `t` for the real eigenvalue `lambda`.
fn eigenvector(t: &LinearMap2, lambda: f64) -> Vec2 {
    let u = Vec2::new(t.b, lambda - t.a);
    let v = Vec2::new(lambda - t.d, t.c);
    let w = if u.norm() >= v.norm() { u } else { v };
    let n = w.norm();
    if n == 0.0 {
        Vec2::new(1.0, 0.0)
    } else {
        w * (1.0 / n)
    }
}

/// `B = P⁻¹` for the basis `P = [p1 p2]` given by columns.
fn from_columns_inverse(p1: Vec2, p2: Vec2) -> Option<LinearMap2> {
    LinearMap2::new(p1.x, p2.x, p1.y, p2.y).inverse().ok()
}

/// Conjugator bringing a map with complex eigenvalues `ρ e^{±iθ}` to
/// `ρ·R(θ)`, using a positively oriented basis so `θ` keeps its sign.
fn rotation_conjugator(t: &LinearMap2, rho: f64) -> (LinearMap2, f64) {
    let cos = (t.trace() / (2.0 * rho)).clamp(-1.0, 1.0);
    let sin = (1.0 - cos * cos).sqrt().copysign(t.c);
    // p1 = e1, p2 = (T e1 / ρ − cos e1) / sin.
    let p1 = Vec2::new(1.0, 0.0);
    let p2 = Vec2::new((t.a / rho - cos) / sin, t.c / rho / sin);
    let b = from_columns_inverse(p1, p2).unwrap_or(LinearMap2::IDENTITY);
    (b, sin.atan2(cos))
}

fn real_conjugator(t: &LinearMap2, l1: f64, l2: f64) -> Option<LinearMap2> {
    if (l1 - l2).abs() > 1e-12 * (l1.abs() + l2.abs()).max(1.0) {
        from_columns_inverse(eigenvector(t, l1), eigenvector(t, l2))
    } else {
        // Repeated eigenvalue: Jordan basis when T is not scalar.
        let n = LinearMap2::new(t.a - l1, t.b, t.c, t.d - l1);
        let e1 = Vec2::new(1.0, 0.0);
        let e2 = Vec2::new(0.0, 1.0);
        let v2 = if n.apply(e1).norm() >= n.apply(e2).norm() { e1 } else { e2 };
        let v1 = n.apply(v2);
        if v1.norm() <= 1e-12 {
            Some(LinearMap2::IDENTITY)
        } else {
            from_columns_inverse(v1, v2)
        }
    }
}

/// Classify an invertible map. Every input receives a class; singular maps
/// land in `contracting_or_expanding`.
pub fn classify(t: &LinearMap2, opts: &ClassifyOptions) -> TransformClass {
    let norm = t.operator_norm();
    let tol = opts.tol * norm.max(f64::MIN_POSITIVE);
    let eig = eigenvalues(t);
    let det = t.det();
    let tr = t.trace();
    let mut class = TransformClass {
        kind: TransformKind::ContractingOrExpanding,
        conjugator: None,
        canonical_angle: None,
        eigenvalues: eig,
    };

    if t.distance(&LinearMap2::IDENTITY) <= tol {
        class.kind = TransformKind::Identity;
        class.conjugator = Some(LinearMap2::IDENTITY);
        return class;
    }

    let complex = eig[0].1 != 0.0;
    let unimodular = (det.abs() - 1.0).abs() <= opts.unit_band;
    if !unimodular {
        if complex {
            class.conjugator = Some(rotation_conjugator(t, det.abs().sqrt()).0);
        } else {
            class.conjugator = real_conjugator(t, eig[0].0, eig[1].0);
        }
        return class;
    }

    if det > 0.0 {
        if t.distance(&LinearMap2::scale(-1.0)) <= tol {
            class.kind = TransformKind::EllipticFiniteOrder(2);
            class.conjugator = Some(LinearMap2::IDENTITY);
            class.canonical_angle = Some(std::f64::consts::PI);
            return class;
        }
        let band = opts.unit_band * 2.0;
        if tr.abs() < 2.0 - band {
            let (b, angle) = rotation_conjugator(t, 1.0);
            class.conjugator = Some(b);
            class.canonical_angle = Some(angle);
            class.kind = match finite_order(t, tol, opts.n_max) {
                Some(n) => TransformKind::EllipticFiniteOrder(n),
                None => TransformKind::EllipticInfinite,
            };
        } else if tr.abs() > 2.0 + band {
            class.kind = TransformKind::Hyperbolic;
            class.conjugator = real_conjugator(t, eig[0].0, eig[1].0);
        } else {
            class.kind = TransformKind::Parabolic;
            let lambda = tr.signum();
            class.conjugator = real_conjugator(t, lambda, lambda);
        }
    } else {
        let sq = t.compose(t);
        if sq.distance(&LinearMap2::IDENTITY) <= tol * norm.max(1.0) {
            class.kind = TransformKind::ReflectionConjugate;
            class.conjugator = real_conjugator(t, 1.0, -1.0);
        } else {
            class.kind = TransformKind::Hyperbolic;
            class.conjugator = real_conjugator(t, eig[0].0, eig[1].0);
        }
    }
    class
}

/// Smallest `n ≤ n_max` with `‖Tⁿ − I‖ ≤ tol`.
fn finite_order(t: &LinearMap2, tol: f64, n_max: u32) -> Option<u32> {
    let mut p = LinearMap2::IDENTITY;
    for n in 1..=n_max {
        p = p.compose(t);
        if p.distance(&LinearMap2::IDENTITY) <= tol {
            return Some(n);
        }
    }
    None
}

/// Whether feature-map alignment under `t` is compatible with non-trivial
/// invariant features: only rotation- or reflection-conjugate maps qualify.
pub fn alignment_admits_invariance(t: &LinearMap2) -> InvarianceVerdict {
    let class = classify(t, &ClassifyOptions::default());
    match class.kind {
        TransformKind::Identity
        | TransformKind::EllipticFiniteOrder(_)
        | TransformKind::EllipticInfinite
        | TransformKind::ReflectionConjugate => InvarianceVerdict::YesWithInvariantFeatures,
        TransformKind::Parabolic
        | TransformKind::Hyperbolic
        | TransformKind::ContractingOrExpanding => InvarianceVerdict::No,
    }
}
