//! Direct-sum convolution on the lattice and compactly supported filters.
//!
//! `convolve(f, λ)(x) = Σ_y λ(y)·f(x − y)·h²`. Each output sample sums its
//! taps in the same fixed order, so results do not depend on which part of
//! the grid is computed or how the work is split across threads. Input rows
//! and columns that are exactly zero are skipped.

mod file;
mod filters;
mod model;

pub use file::{FilterRef, LayerFile, ModelFile};
pub use filters::{elliptic_ring_filter, n_fold_symmetrize, radial_filter, Profile};
pub use model::{CnnModel, ConvLayer, Nonlinearity};

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Geometry, Grid};
use crate::transform::{LinearMap2, Vec2};

/// Samples of a filter may be non-zero only within this slack of the
/// declared support radius.
const SUPPORT_SLACK: f64 = 1e-9;

/// A compactly supported filter sampled at the image spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Filter {
    grid: Grid,
    support_radius: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Tap {
    /// Input offset: output `(r, c)` reads input `(r + dr, c + dc)`.
    pub dr: isize,
    pub dc: isize,
    /// `λ(y)·h²`.
    pub w: f64,
}

impl Filter {
    pub fn new(grid: Grid, support_radius: f64) -> Result<Self> {
        if !(support_radius >= 0.0) {
            return Err(Error::invalid(format!("support radius must be >= 0, got {support_radius}")));
        }
        let g = *grid.geometry();
        if support_radius > g.extent() * std::f64::consts::SQRT_2 + SUPPORT_SLACK {
            return Err(Error::invalid(format!(
                "support radius {support_radius} exceeds filter grid extent {}",
                g.extent()
            )));
        }
        let n = g.n();
        for r in 0..n {
            for c in 0..n {
                if grid.get(r, c) != 0.0 && g.point(r, c).norm() > support_radius + SUPPORT_SLACK {
                    return Err(Error::invalid(format!(
                        "filter sample at {:?} lies outside support radius {support_radius}",
                        g.point(r, c)
                    )));
                }
            }
        }
        Ok(Filter {
            grid,
            support_radius,
        })
    }

    /// Renders `value` inside the closed disc of `support_radius`; zero
    /// outside. The filter grid is the smallest one covering the disc.
    pub fn from_fn(spacing: f64, support_radius: f64, value: impl Fn(Vec2) -> f64) -> Result<Self> {
        let geom = Geometry::new(support_radius.max(spacing), spacing)?;
        let grid = Grid::from_fn(geom, |p| {
            if p.norm() <= support_radius {
                value(p)
            } else {
                0.0
            }
        });
        Filter::new(grid, support_radius)
    }

    /// Unit-mass discrete impulse: `1/h²` at the origin.
    pub fn impulse(spacing: f64) -> Result<Self> {
        let mut grid = Grid::zeros(Geometry::from_half(spacing, 1)?);
        let (r, c) = grid.geometry().origin_index();
        grid.set(r, c, 1.0 / (spacing * spacing));
        Filter::new(grid, 0.0)
    }

    pub fn zero(spacing: f64, support_radius: f64) -> Result<Self> {
        Filter::from_fn(spacing, support_radius, |_| 0.0)
    }

    /// Wraps a grid, taking the support radius from its non-zero samples.
    pub fn from_grid_measured(grid: Grid) -> Self {
        let radius = grid.support_estimate(0.0).radius;
        Filter {
            grid,
            support_radius: radius,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.l1_norm()
    }

    pub fn integral(&self) -> f64 {
        self.grid.integral()
    }

    pub fn is_zero(&self) -> bool {
        self.grid.data().iter().all(|&v| v == 0.0)
    }

    /// Non-zero taps in row-major filter order.
    pub(crate) fn taps(&self) -> Vec<Tap> {
        let g = self.grid.geometry();
        let n = g.n();
        let half = g.half() as isize;
        let w2 = g.spacing() * g.spacing();
        let mut taps = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = self.grid.get(r, c);
                if v != 0.0 {
                    taps.push(Tap {
                        dr: half - r as isize,
                        dc: half - c as isize,
                        w: v * w2,
                    });
                }
            }
        }
        taps
    }

    /// Largest index offset among the taps.
    pub(crate) fn reach(&self) -> usize {
        self.taps()
            .iter()
            .map(|t| t.dr.unsigned_abs().max(t.dc.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }

    /// Copy on a larger filter grid with the same spacing.
    pub fn grown(&self, extent: f64) -> Result<Filter> {
        let g = Geometry::new(extent, self.spacing())?;
        if g.half() <= self.grid.geometry().half() {
            return Ok(self.clone());
        }
        Ok(Filter {
            grid: self.grid.regrid(g)?,
            support_radius: self.support_radius,
        })
    }
}

fn check_spacing(f: &Grid, lambda: &Filter) -> Result<()> {
    let (a, b) = (f.spacing(), lambda.spacing());
    if (a - b).abs() > 1e-12 * a {
        return Err(Error::GeometryMismatch(format!(
            "image spacing {a} vs filter spacing {b}"
        )));
    }
    Ok(())
}

/// Convolution over the full grid of `f`; reads outside the square are 0.
pub fn convolve(f: &Grid, lambda: &Filter) -> Result<Grid> {
    check_spacing(f, lambda)?;
    let n = f.n();
    Ok(convolve_window(f, &lambda.taps(), 0..n, 0..n))
}

/// Convolution evaluated at one lattice sample. Agrees exactly with the
/// corresponding sample of [`convolve`].
pub fn convolve_at(f: &Grid, lambda: &Filter, row: usize, col: usize) -> Result<f64> {
    check_spacing(f, lambda)?;
    let mut acc = 0.0;
    for t in lambda.taps() {
        let v = f.get_signed(row as isize + t.dr, col as isize + t.dc);
        if v != 0.0 {
            acc += t.w * v;
        }
    }
    Ok(acc)
}

/// Convolution restricted to output rows × cols; other samples stay 0.
pub(crate) fn convolve_window(f: &Grid, taps: &[Tap], rows: Range<usize>, cols: Range<usize>) -> Grid {
    let n = f.n();
    let spans = f.row_spans();
    let mut out = Grid::zeros(*f.geometry());
    if cols.is_empty() {
        return out;
    }
    let (c_lo, c_hi) = (cols.start as isize, cols.end as isize - 1);
    out.data_mut()
        .par_chunks_mut(n)
        .enumerate()
        .filter(|(r, _)| rows.contains(r))
        .for_each(|(r, orow)| {
            for t in taps {
                let src = r as isize + t.dr;
                if src < 0 || src >= n as isize {
                    continue;
                }
                let Some((lo, hi)) = spans[src as usize] else {
                    continue;
                };
                let j_lo = (lo as isize - t.dc).max(c_lo);
                let j_hi = (hi as isize - t.dc).min(c_hi);
                if j_lo > j_hi {
                    continue;
                }
                let irow = f.row(src as usize);
                let o = &mut orow[j_lo as usize..=j_hi as usize];
                let s = &irow[(j_lo + t.dc) as usize..=(j_hi + t.dc) as usize];
                for (a, &b) in o.iter_mut().zip(s) {
                    *a += t.w * b;
                }
            }
        });
    out
}

/// `|det T|·λ(T x)`: the filter that makes `T⁻¹ Λ_λ T = Λ_{λ'}` hold.
///
/// The filter grid grows when the transformed support needs it; the
/// support radius is measured from the resampled values.
pub fn transform_filter(lambda: &Filter, t: &LinearMap2) -> Result<Filter> {
    let inv = t.inverse()?;
    if *t == LinearMap2::IDENTITY {
        return Ok(lambda.clone());
    }
    let h = lambda.spacing();
    let reach = inv.operator_norm() * (lambda.support_radius + std::f64::consts::SQRT_2 * h);
    let old = *lambda.grid.geometry();
    let geom = if reach > old.extent() {
        Geometry::new(reach, h)?
    } else {
        old
    };
    let scale = t.det().abs();
    let grid = Grid::from_fn(geom, |p| scale * lambda.grid.sample(t.apply(p)));
    Ok(Filter::from_grid_measured(trimmed(grid, old.half())?))
}

/// Crops a filter grid to the smallest centred square that keeps every
/// non-zero sample, but never below `min_half`.
pub(crate) fn trimmed(grid: Grid, min_half: usize) -> Result<Grid> {
    let g = *grid.geometry();
    let half = g.half();
    let mut need = min_half;
    for r in 0..g.n() {
        for c in 0..g.n() {
            if grid.get(r, c) != 0.0 {
                need = need.max(r.abs_diff(half)).max(c.abs_diff(half));
            }
        }
    }
    if need >= half {
        return Ok(grid);
    }
    grid.regrid(Geometry::from_half(g.spacing(), need)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_bump, Norm};

    fn gaussian(sigma: f64) -> impl Fn(Vec2) -> f64 {
        move |p: Vec2| {
            (-(p.dot(p)) / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma)
        }
    }

    #[test]
    fn impulse_is_identity() {
        let g = Geometry::new(1.0, 0.05).unwrap();
        let f = make_bump(Vec2::new(0.2, -0.1), 0.6, 1.0, g).unwrap();
        let out = convolve(&f, &Filter::impulse(0.05).unwrap()).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn constant_response_is_integral() {
        let h = 0.05;
        let g = Geometry::new(2.0, h).unwrap();
        let f = Grid::from_fn(g, |_| 3.0);
        let lambda = Filter::from_fn(h, 0.5, |p| 1.0 + p.x).unwrap();
        let out = convolve(&f, &lambda).unwrap();
        assert!((out.at_origin() - 3.0 * lambda.integral()).abs() < 1e-12);
    }

    #[test]
    fn gaussians_compose() {
        // Oracle: the convolution of N(σ1²) and N(σ2²) is N(σ1² + σ2²).
        let (s1, s2) = (0.2, 0.15);
        let s = (s1 * s1 + s2 * s2 as f64).sqrt();
        let h = s2 / 8.0;
        let g = Geometry::new(1.6, h).unwrap();
        let f = Grid::from_fn(g, gaussian(s1));
        let lambda = Filter::from_fn(h, 6.0 * s2, gaussian(s2)).unwrap();
        let out = convolve(&f, &lambda).unwrap();
        let want = Grid::from_fn(g, gaussian(s));
        let rel = out.distance(&want, Norm::L1).unwrap() / want.l1_norm();
        assert!(rel < 0.01, "relative L1 {rel}");
    }

    #[test]
    fn spacing_mismatch_is_rejected() {
        let f = Grid::zeros(Geometry::new(1.0, 0.1).unwrap());
        let lambda = Filter::impulse(0.05).unwrap();
        assert!(matches!(convolve(&f, &lambda), Err(Error::GeometryMismatch(_))));
    }

    #[test]
    fn point_evaluation_matches_full() {
        let h = 0.1;
        let g = Geometry::new(1.5, h).unwrap();
        let f = Grid::from_fn(g, |p| (p.x * 3.0).sin() + p.y);
        let lambda = Filter::from_fn(h, 0.45, |p| 1.0 - p.x + 0.3 * p.y).unwrap();
        let full = convolve(&f, &lambda).unwrap();
        for (r, c) in [(0, 0), (7, 9), (15, 15), (30, 2)] {
            assert_eq!(convolve_at(&f, &lambda, r, c).unwrap(), full.get(r, c));
        }
    }

    #[test]
    fn filter_rejects_samples_outside_support() {
        let g = Geometry::new(1.0, 0.1).unwrap();
        let grid = Grid::from_fn(g, |_| 1.0);
        assert!(Filter::new(grid.clone(), 0.5).is_err());
        assert!(Filter::new(grid.clone(), std::f64::consts::SQRT_2).is_ok());
        assert!(Filter::new(grid, 1.5).is_err());
    }

    #[test]
    fn transform_filter_examples() {
        let h = 0.02;
        let lambda = Filter::from_fn(h, 0.6, |p| {
            crate::grid::bump_value(p, Vec2::ZERO, 0.6, 1.0) * (1.0 + 0.5 * p.x)
        })
        .unwrap();
        assert_eq!(transform_filter(&lambda, &LinearMap2::IDENTITY).unwrap(), lambda);

        let radial = Filter::from_fn(h, 0.6, |p| crate::grid::bump_value(p, Vec2::ZERO, 0.6, 1.0)).unwrap();
        let rot = transform_filter(&radial, &LinearMap2::rotation_degrees(90.0)).unwrap();
        assert!(rot.grid().distance(radial.grid(), Norm::Sup).unwrap() < 1e-15);

        let doubled = transform_filter(&lambda, &LinearMap2::scale(2.0)).unwrap();
        let rel = (doubled.integral() - lambda.integral()).abs() / lambda.integral();
        assert!(rel < 0.01, "{rel}");
        assert!(doubled.support_radius() <= 0.3 + 2.0 * h);

        let shrunk = transform_filter(&lambda, &LinearMap2::scale(0.5)).unwrap();
        assert!(shrunk.support_radius() > 1.1);
        assert!(transform_filter(&lambda, &LinearMap2::diag(1.0, 0.0)).is_err());
    }
}
