//! Filters with built-in symmetry: radial, n-fold averaged, elliptic rings.

use serde::{Deserialize, Serialize};

use super::Filter;
use crate::error::{Error, Result};
use crate::grid::{Geometry, Grid};
use crate::transform::{classify, ClassifyOptions, LinearMap2, TransformKind};

/// Radial profile `r ↦ value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// Unit-mass 2D Gaussian density.
    Gaussian { sigma: f64 },
    /// Smooth bump of half-width `width` centred on the circle `radius`.
    Ring { radius: f64, width: f64 },
    /// `e·exp(−1/(1 − (r/radius)²))`, peak value 1.
    Bump { radius: f64 },
    Zero,
    /// Piecewise linear through `(radii[i], values[i])`, zero past the end.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

fn smooth_bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

impl Profile {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Profile::Gaussian { sigma } => {
                (-(r * r) / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma)
            }
            Profile::Ring { radius, width } => smooth_bump((r - radius) / width),
            Profile::Bump { radius } => smooth_bump(r / radius),
            Profile::Zero => 0.0,
            Profile::Tabulated { radii, values } => {
                let i = radii.partition_point(|&x| x <= r);
                if i == 0 {
                    values.first().copied().filter(|_| radii.first() == Some(&r)).unwrap_or(0.0)
                } else if i == radii.len() {
                    if r == radii[i - 1] {
                        values[i - 1]
                    } else {
                        0.0
                    }
                } else {
                    let t = (r - radii[i - 1]) / (radii[i] - radii[i - 1]);
                    values[i - 1] + t * (values[i] - values[i - 1])
                }
            }
        }
    }

    /// Radius beyond which the profile vanishes (Gaussians: 4σ cutoff).
    pub fn natural_radius(&self) -> f64 {
        match self {
            Profile::Gaussian { sigma } => 4.0 * sigma,
            Profile::Ring { radius, width } => radius + width,
            Profile::Bump { radius } => *radius,
            Profile::Zero => 0.0,
            Profile::Tabulated { radii, .. } => radii.last().copied().unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Profile::Gaussian { sigma } => *sigma > 0.0,
            Profile::Ring { radius, width } => *radius >= 0.0 && *width > 0.0,
            Profile::Bump { radius } => *radius > 0.0,
            Profile::Zero => true,
            Profile::Tabulated { radii, values } => {
                radii.len() == values.len()
                    && !radii.is_empty()
                    && radii[0] >= 0.0
                    && radii.windows(2).all(|w| w[0] < w[1])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid profile {self:?}")))
        }
    }
}

/// `λ(x) = profile(|x|)` on the disc of `support_radius`.
pub fn radial_filter(profile: impl Fn(f64) -> f64, spacing: f64, support_radius: f64) -> Result<Filter> {
    Filter::from_fn(spacing, support_radius, |p| profile(p.norm()))
}

/// `λ(x) = profile(|Bx|)` where `|Bx| ≤ radius`; invariant under every
/// `B⁻¹·rot(θ)·B`.
pub fn elliptic_ring_filter(
    b: &LinearMap2,
    profile: impl Fn(f64) -> f64,
    spacing: f64,
    radius: f64,
) -> Result<Filter> {
    let support = b.inverse()?.operator_norm() * radius;
    Filter::from_fn(spacing, support, |p| {
        let s = b.apply(p).norm();
        if s <= radius {
            profile(s)
        } else {
            0.0
        }
    })
}

fn finite_order(t: &LinearMap2) -> Option<u32> {
    match classify(t, &ClassifyOptions::default()).kind {
        TransformKind::Identity => Some(1),
        TransformKind::EllipticFiniteOrder(k) => Some(k),
        TransformKind::ReflectionConjugate => Some(2),
        _ => None,
    }
}

/// `(1/n)·Σ_{j<n} λ(T⁻ʲx)`; the result is a fixed point of `λ ↦ λ∘T⁻¹`.
pub fn n_fold_symmetrize(lambda: &Filter, t: &LinearMap2, n: u32) -> Result<Filter> {
    let order = finite_order(t)
        .ok_or_else(|| Error::Classification(format!("{t} has no finite order")))?;
    if n == 0 || n % order != 0 {
        return Err(Error::Classification(format!(
            "{t} has order {order}, which does not divide {n}"
        )));
    }
    if n == 1 {
        return Ok(lambda.clone());
    }
    let h = lambda.spacing();
    let powers = (0..n as i64).map(|j| t.iterate(j)).collect::<Result<Vec<_>>>()?;
    let reach = powers
        .iter()
        .map(|p| p.operator_norm())
        .fold(0.0, f64::max)
        * (lambda.support_radius() + std::f64::consts::SQRT_2 * h);
    let base = if reach > lambda.grid().geometry().extent() {
        lambda.grid().regrid(Geometry::new(reach, h)?)?
    } else {
        lambda.grid().clone()
    };
    let mut acc = base.clone();
    for p in &powers[1..] {
        let term = base.resample_affine(p)?;
        for (a, v) in acc.data_mut().iter_mut().zip(term.data()) {
            *a += v;
        }
    }
    let inv = 1.0 / n as f64;
    let grid: Grid = acc.map(|v| v * inv);
    Ok(Filter::from_grid_measured(super::trimmed(grid, lambda.grid().geometry().half())?))
}
