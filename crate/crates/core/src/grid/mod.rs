//! Sampled scalar fields on a square lattice centred on the origin.
//!
//! A [`Grid`] covers `[−R, R]²` with `2⌈R/h⌉ + 1` samples per axis, so the
//! origin is always a lattice point. Samples are stored row-major with the
//! top row at `y = +R`. Reads outside the square return 0.

mod io;

pub use io::{read_grid_text, read_pgm, write_grid_text, write_pgm, write_pgm_seeded, PgmSidecar};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::{LinearMap2, Vec2};

/// Lattice coordinates within this distance of an integer are snapped to it.
const SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    spacing: f64,
    half: usize,
}

impl Geometry {
    pub fn new(extent: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::invalid(format!("extent must be positive, got {extent}")));
        }
        let half = (extent / spacing - SNAP).ceil().max(1.0) as usize;
        Ok(Geometry { spacing, half })
    }

    /// Geometry with `half` samples on each side of the origin.
    pub fn from_half(spacing: f64, half: usize) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) || half == 0 {
            return Err(Error::invalid("spacing must be positive and half >= 1"));
        }
        Ok(Geometry { spacing, half })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn half(&self) -> usize {
        self.half
    }

    /// Half-width of the covered square.
    pub fn extent(&self) -> f64 {
        self.half as f64 * self.spacing
    }

    /// Samples per axis.
    pub fn n(&self) -> usize {
        2 * self.half + 1
    }

    pub fn len(&self) -> usize {
        self.n() * self.n()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, row: usize, col: usize) -> Vec2 {
        let h = self.spacing;
        Vec2::new(
            (col as f64 - self.half as f64) * h,
            (self.half as f64 - row as f64) * h,
        )
    }

    pub fn origin_index(&self) -> (usize, usize) {
        (self.half, self.half)
    }

    /// Continuous (row, col) coordinates of a point, snapped to lattice
    /// values when within rounding distance.
    fn fractional_index(&self, p: Vec2) -> (f64, f64) {
        let snap = |v: f64| {
            let r = v.round();
            if (v - r).abs() < SNAP {
                r
            } else {
                v
            }
        };
        (
            snap(self.half as f64 - p.y / self.spacing),
            snap(p.x / self.spacing + self.half as f64),
        )
    }

    /// Index of `p` when it is a lattice point inside the square.
    pub fn lattice_index(&self, p: Vec2) -> Option<(usize, usize)> {
        let (r, c) = self.fractional_index(p);
        if r.fract() != 0.0 || c.fract() != 0.0 {
            return None;
        }
        let n = self.n() as f64;
        if r < 0.0 || c < 0.0 || r >= n || c >= n {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// Integer lattice offset `(d_row, d_col)` of a displacement when it is
    /// a multiple of the spacing in both axes.
    pub fn lattice_offset(&self, delta: Vec2) -> Option<(isize, isize)> {
        let snap = |v: f64| {
            let r = v.round();
            ((v - r).abs() < SNAP).then_some(r as isize)
        };
        let dc = snap(delta.x / self.spacing)?;
        let dr = snap(-delta.y / self.spacing)?;
        Some((dr, dc))
    }

    pub fn same_as(&self, other: &Geometry) -> bool {
        self.half == other.half && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
    }

    fn check_same(&self, other: &Geometry) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "(h={}, half={}) vs (h={}, half={})",
                self.spacing, self.half, other.spacing, other.half
            )))
        }
    }

    /// Distance from `p` to the nearest edge of the square (negative outside).
    pub fn inset(&self, p: Vec2) -> f64 {
        self.extent() - p.x.abs().max(p.y.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    Sup,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    geom: Geometry,
    data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupportEstimate {
    pub threshold: f64,
    /// Area of samples above threshold.
    pub measure: f64,
    /// Largest distance from the origin among those samples.
    pub radius: f64,
}

impl Grid {
    pub fn zeros(geom: Geometry) -> Self {
        Grid {
            geom,
            data: vec![0.0; geom.len()],
        }
    }

    pub fn from_vec(geom: Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::GeometryMismatch(format!(
                "{} samples for a {}x{} grid",
                data.len(),
                geom.n(),
                geom.n()
            )));
        }
        Ok(Grid { geom, data })
    }

    /// Samples `field` at every lattice point.
    pub fn from_fn(geom: Geometry, field: impl Fn(Vec2) -> f64) -> Self {
        let n = geom.n();
        let mut data = Vec::with_capacity(geom.len());
        for r in 0..n {
            for c in 0..n {
                data.push(field(geom.point(r, c)));
            }
        }
        Grid { geom, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn spacing(&self) -> f64 {
        self.geom.spacing
    }

    pub fn n(&self) -> usize {
        self.geom.n()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.n();
        &self.data[r * n..(r + 1) * n]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let n = self.n();
        self.data[row * n + col] = v;
    }

    /// Sample at signed indices; 0 outside the square.
    pub fn get_signed(&self, row: isize, col: isize) -> f64 {
        let n = self.n() as isize;
        if row < 0 || col < 0 || row >= n || col >= n {
            0.0
        } else {
            self.data[row as usize * self.n() + col as usize]
        }
    }

    pub fn at_origin(&self) -> f64 {
        let (r, c) = self.geom.origin_index();
        self.get(r, c)
    }

    /// Value at a lattice point; `None` outside the square or off the lattice.
    pub fn at_lattice(&self, p: Vec2) -> Option<f64> {
        self.geom.lattice_index(p).map(|(r, c)| self.get(r, c))
    }

    /// Bilinear interpolation at `p`, reading 0 outside the square.
    pub fn sample(&self, p: Vec2) -> f64 {
        let (fr, fc) = self.geom.fractional_index(p);
        let n = self.n() as f64;
        if fr <= -1.0 || fc <= -1.0 || fr >= n || fc >= n {
            return 0.0;
        }
        let r0 = fr.floor();
        let c0 = fc.floor();
        let tr = fr - r0;
        let tc = fc - c0;
        let (r0, c0) = (r0 as isize, c0 as isize);
        if tr == 0.0 && tc == 0.0 {
            return self.get_signed(r0, c0);
        }
        if tr == 0.0 {
            return (1.0 - tc) * self.get_signed(r0, c0) + tc * self.get_signed(r0, c0 + 1);
        }
        if tc == 0.0 {
            return (1.0 - tr) * self.get_signed(r0, c0) + tr * self.get_signed(r0 + 1, c0);
        }
        let top = (1.0 - tc) * self.get_signed(r0, c0) + tc * self.get_signed(r0, c0 + 1);
        let bot = (1.0 - tc) * self.get_signed(r0 + 1, c0) + tc * self.get_signed(r0 + 1, c0 + 1);
        (1.0 - tr) * top + tr * bot
    }

    /// `(T f)(x) = f(T⁻¹ x)`, bilinear, same geometry as `self`.
    pub fn resample_affine(&self, t: &LinearMap2) -> Result<Grid> {
        let inv = t.inverse()?;
        let g = self.geom;
        let n = g.n();
        let mut data = Vec::with_capacity(g.len());
        for r in 0..n {
            for c in 0..n {
                data.push(self.sample(inv.apply(g.point(r, c))));
            }
        }
        Ok(Grid { geom: g, data })
    }

    /// `(D_δ f)(x) = f(x − δ)`: an exact index shift for lattice `δ`,
    /// bilinear otherwise.
    pub fn translate(&self, delta: Vec2) -> Grid {
        match self.geom.lattice_offset(delta) {
            Some((dr, dc)) => self.shift(dr, dc),
            None => {
                let g = self.geom;
                let n = g.n();
                let mut data = Vec::with_capacity(g.len());
                for r in 0..n {
                    for c in 0..n {
                        data.push(self.sample(g.point(r, c) - delta));
                    }
                }
                Grid { geom: g, data }
            }
        }
    }

    /// Output sample `(r, c)` takes input `(r − dr, c − dc)`; zero fill.
    pub fn shift(&self, dr: isize, dc: isize) -> Grid {
        let n = self.n() as isize;
        let mut out = Grid::zeros(self.geom);
        if dr.abs() >= n || dc.abs() >= n {
            return out;
        }
        let c_lo = dc.max(0) as usize;
        let c_hi = (n + dc.min(0)) as usize;
        for r in 0..n {
            let src = r - dr;
            if src < 0 || src >= n {
                continue;
            }
            let src_row = self.row(src as usize);
            let dst = &mut out.data[r as usize * n as usize..(r as usize + 1) * n as usize];
            let s_lo = (c_lo as isize - dc) as usize;
            let s_hi = (c_hi as isize - dc) as usize;
            dst[c_lo..c_hi].copy_from_slice(&src_row[s_lo..s_hi]);
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Grid {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            geom: self.geom,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.geom.check_same(&other.geom)?;
        Ok(Grid {
            geom: self.geom,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Grid) -> Result<Grid> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Grid) -> Result<Grid> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Zero every sample outside the closed disc of `radius` around `center`.
    pub fn mask_disc(&self, center: Vec2, radius: f64) -> Grid {
        let g = self.geom;
        let n = g.n();
        let mut out = self.clone();
        for r in 0..n {
            for c in 0..n {
                if (g.point(r, c) - center).norm() > radius {
                    out.data[r * n + c] = 0.0;
                }
            }
        }
        out
    }

    /// Riemann-sum integral with weight `h²`.
    pub fn integral(&self) -> f64 {
        pairwise_sum(&self.data) * self.spacing() * self.spacing()
    }

    pub fn l1_norm(&self) -> f64 {
        let abs: Vec<f64> = self.data.iter().map(|v| v.abs()).collect();
        pairwise_sum(&abs) * self.spacing() * self.spacing()
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Distance under `norm`; geometries must match.
    pub fn distance(&self, other: &Grid, norm: Norm) -> Result<f64> {
        self.distance_where(other, norm, |_| true)
    }

    /// Distance restricted to samples whose position satisfies `keep`.
    pub fn distance_where(
        &self,
        other: &Grid,
        norm: Norm,
        keep: impl Fn(Vec2) -> bool,
    ) -> Result<f64> {
        self.geom.check_same(&other.geom)?;
        let g = self.geom;
        let n = g.n();
        let mut diffs = Vec::with_capacity(g.len());
        for r in 0..n {
            for c in 0..n {
                if keep(g.point(r, c)) {
                    let i = r * n + c;
                    diffs.push((self.data[i] - other.data[i]).abs());
                }
            }
        }
        Ok(match norm {
            Norm::L1 => pairwise_sum(&diffs) * g.spacing * g.spacing,
            Norm::Sup => diffs.iter().fold(0.0, |m: f64, &v| m.max(v)),
        })
    }

    pub fn support_estimate(&self, threshold: f64) -> SupportEstimate {
        let g = self.geom;
        let n = g.n();
        let mut count = 0usize;
        let mut radius: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                if self.data[r * n + c].abs() > threshold {
                    count += 1;
                    radius = radius.max(g.point(r, c).norm());
                }
            }
        }
        SupportEstimate {
            threshold,
            measure: count as f64 * g.spacing * g.spacing,
            radius,
        }
    }

    /// Bilinear refinement by an integer factor; coarse nodes are kept
    /// exactly.
    pub fn refine(&self, factor: usize) -> Result<Grid> {
        if factor < 2 {
            return Err(Error::invalid(format!("refine factor must be >= 2, got {factor}")));
        }
        let g = Geometry::from_half(self.spacing() / factor as f64, self.geom.half * factor)?;
        let n = g.n();
        let k = factor as isize;
        let mut data = Vec::with_capacity(g.len());
        for r in 0..n as isize {
            let (r0, rr) = (r.div_euclid(k), r.rem_euclid(k));
            let tr = rr as f64 / factor as f64;
            for c in 0..n as isize {
                let (c0, cr) = (c.div_euclid(k), c.rem_euclid(k));
                let tc = cr as f64 / factor as f64;
                let v = if rr == 0 && cr == 0 {
                    self.get_signed(r0, c0)
                } else {
                    let top = (1.0 - tc) * self.get_signed(r0, c0) + tc * self.get_signed(r0, c0 + 1);
                    let bot = (1.0 - tc) * self.get_signed(r0 + 1, c0)
                        + tc * self.get_signed(r0 + 1, c0 + 1);
                    (1.0 - tr) * top + tr * bot
                };
                data.push(v);
            }
        }
        Ok(Grid { geom: g, data })
    }

    /// Every `factor`-th sample; inverse of [`Grid::refine`] on the nodes.
    pub fn subsample(&self, factor: usize) -> Result<Grid> {
        if factor == 0 || self.geom.half % factor != 0 {
            return Err(Error::invalid(format!(
                "cannot subsample half={} by {factor}",
                self.geom.half
            )));
        }
        let g = Geometry::from_half(self.spacing() * factor as f64, self.geom.half / factor)?;
        let n = g.n();
        let mut data = Vec::with_capacity(g.len());
        for r in 0..n {
            for c in 0..n {
                data.push(self.get(r * factor, c * factor));
            }
        }
        Ok(Grid { geom: g, data })
    }

    /// Copy of `self` on a different geometry with the same spacing, by
    /// lattice position. Samples not covered by `self` read 0.
    pub fn regrid(&self, geom: Geometry) -> Result<Grid> {
        if (geom.spacing - self.spacing()).abs() > 1e-12 * self.spacing() {
            return Err(Error::GeometryMismatch("regrid needs equal spacing".into()));
        }
        let off = self.geom.half as isize - geom.half as isize;
        let n = geom.n();
        let mut data = Vec::with_capacity(geom.len());
        for r in 0..n as isize {
            for c in 0..n as isize {
                data.push(self.get_signed(r + off, c + off));
            }
        }
        Ok(Grid { geom, data })
    }

    /// Per row, the inclusive column range holding non-zero samples.
    pub(crate) fn row_spans(&self) -> Vec<Option<(usize, usize)>> {
        (0..self.n())
            .map(|r| {
                let row = self.row(r);
                let lo = row.iter().position(|&v| v != 0.0)?;
                let hi = row.iter().rposition(|&v| v != 0.0)?;
                Some((lo, hi))
            })
            .collect()
    }
}

/// Smooth bump `A·e·exp(−1/(1 − s²))` with `s = |x − c| / radius`, zero for
/// `s ≥ 1`; equals `A` at the centre.
pub fn bump_value(p: Vec2, center: Vec2, radius: f64, amplitude: f64) -> f64 {
    let s2 = ((p - center).norm() / radius).powi(2);
    if s2 >= 1.0 {
        0.0
    } else {
        amplitude * (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

pub fn make_bump(center: Vec2, radius: f64, amplitude: f64, geom: Geometry) -> Result<Grid> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("bump radius must be positive, got {radius}")));
    }
    let needed = center.x.abs().max(center.y.abs()) + radius;
    if needed > geom.extent() + 1e-12 {
        return Err(Error::domain("bump support", needed, geom.extent()));
    }
    match geom.lattice_index(center) {
        // Lattice centre: use index differences so translated copies agree
        // sample for sample.
        Some((cr, cc)) => {
            let n = geom.n();
            let h = geom.spacing();
            let mut data = Vec::with_capacity(geom.len());
            for r in 0..n {
                for c in 0..n {
                    let d = Vec2::new(
                        (c as f64 - cc as f64) * h,
                        (cr as f64 - r as f64) * h,
                    );
                    data.push(bump_value(d, Vec2::ZERO, radius, amplitude));
                }
            }
            Grid::from_vec(geom, data)
        }
        None => Ok(Grid::from_fn(geom, |p| bump_value(p, center, radius, amplitude))),
    }
}

/// Pairwise (cascade) summation in slice order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if v.len() <= BLOCK {
        let mut s = 0.0;
        for &x in v {
            s += x;
        }
        s
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

/// A `C`-channel stack of grids sharing one geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    channels: Vec<Grid>,
}

impl FeatureStack {
    pub fn new(channels: Vec<Grid>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("feature stack needs at least one channel"))?;
        for ch in &channels[1..] {
            first.geom.check_same(&ch.geom)?;
        }
        Ok(FeatureStack { channels })
    }

    pub fn single(g: Grid) -> Self {
        FeatureStack { channels: vec![g] }
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &Grid {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Grid] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Grid> {
        self.channels
    }

    pub fn geometry(&self) -> &Geometry {
        self.channels[0].geometry()
    }

    /// Applies a grid operation channel-wise.
    pub fn map_channels(&self, f: impl Fn(&Grid) -> Result<Grid>) -> Result<FeatureStack> {
        FeatureStack::new(self.channels.iter().map(f).collect::<Result<_>>()?)
    }
}
