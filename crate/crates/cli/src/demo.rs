//! Two illustrations of the alignment dichotomy, written as PGM triptychs.
//!
//! `wm-rotation`: a two-channel W/M detector on a W/M image. After turning
//! the input by 180° the responses realign only once the channels are
//! swapped, so no channel-wise spatial warp can align them.
//!
//! `scale-fov`: a fixed-size W template responds much more weakly to a W
//! drawn at twice the size, because its field of view no longer covers the
//! glyph.

use std::fs;
use std::path::Path;

use equiaudit_core::audit::TOL_FACTOR;
use equiaudit_core::grid::Norm;
use equiaudit_core::scene::Scene;
use equiaudit_core::{CnnModel, ConvLayer, Error, Filter, Geometry, Grid, LinearMap2, Nonlinearity, Result, Vec2};
use serde::Serialize;

pub const DEMOS: [&str; 2] = ["wm-rotation", "scale-fov"];

/// Relative residual above which a channel-wise comparison counts as
/// misaligned in the rotation demo.
pub const MISALIGNED_FLOOR: f64 = 0.25;

const SPACING: f64 = 0.02;
const GLYPH_SIZE: f64 = 0.3;
const GLYPH_STROKE: f64 = 0.08;

#[derive(Clone, Debug, Serialize)]
pub struct DemoSummary {
    pub name: String,
    pub spacing: f64,
    /// `wm-rotation`: channel-wise residual. `scale-fov`: peak response on
    /// the original image.
    pub primary: f64,
    /// `wm-rotation`: channel-swapped residual. `scale-fov`: peak response
    /// on the rescaled image.
    pub secondary: f64,
    pub threshold: f64,
    pub pass: bool,
    pub files: Vec<String>,
}

impl DemoSummary {
    pub fn line(&self) -> String {
        match self.name.as_str() {
            "wm-rotation" => format!(
                "wm-rotation: channel-wise residual {:.4} (floor {MISALIGNED_FLOOR}), swapped residual {:.3e} (tol {:.3e}) -> {}",
                self.primary,
                self.secondary,
                self.threshold,
                if self.pass { "pass" } else { "fail" }
            ),
            _ => format!(
                "scale-fov: peak response {:.4e} on original, {:.4e} on 2x rescaled (ratio {:.3}, limit {}) -> {}",
                self.primary,
                self.secondary,
                self.secondary / self.primary,
                self.threshold,
                if self.pass { "pass" } else { "fail" }
            ),
        }
    }
}

fn glyph(letter: char, center: Vec2, size: f64, stroke: f64) -> Scene {
    Scene::Glyph {
        letter,
        center,
        size,
        stroke,
    }
}

/// Matched filter for `letter`: convolution flips its argument, so the
/// detector for W is the W turned by 180°, i.e. an M.
fn detector(letter: char) -> Result<Filter> {
    let flipped = if letter == 'W' { 'M' } else { 'W' };
    let s = glyph(flipped, Vec2::ZERO, GLYPH_SIZE, GLYPH_STROKE);
    let geom = Geometry::new(s.support_radius() + 2.0 * SPACING, SPACING)?;
    Ok(Filter::from_grid_measured(s.render(geom)))
}

/// Three panels side by side, each stretched to the full 8-bit range.
pub fn write_triptych(panels: [&Grid; 3], path: &Path) -> Result<()> {
    let n = panels[0].geometry().n();
    if panels.iter().any(|p| p.geometry().n() != n) {
        return Err(Error::GeometryMismatch("triptych panels differ in size".into()));
    }
    let gap = 4;
    let width = 3 * n + 2 * gap;
    let mut bytes = format!("P5\n{width} {n}\n255\n").into_bytes();
    let ranges: Vec<(f64, f64)> = panels.iter().map(|p| (p.min_value(), p.max_value())).collect();
    for r in 0..n {
        for (k, p) in panels.iter().enumerate() {
            let (lo, hi) = ranges[k];
            for c in 0..n {
                let v = p.get(r, c);
                let q = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 0 };
                bytes.push(q);
            }
            if k < 2 {
                bytes.extend(std::iter::repeat(255).take(gap));
            }
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// The template minus its mean over its support disc, so flat regions of
/// ink give no response.
fn zero_mean(t: &Filter) -> Result<Filter> {
    let r = t.support_radius();
    let g = t.grid();
    let geom = *g.geometry();
    let n = geom.n();
    let inside: Vec<bool> = (0..n * n).map(|i| geom.point(i / n, i % n).norm() <= r).collect();
    let count = inside.iter().filter(|&&b| b).count() as f64;
    let mean = g.data().iter().zip(&inside).filter(|(_, &b)| b).map(|(v, _)| v).sum::<f64>() / count;
    let data = g.data().iter().zip(&inside).map(|(v, &b)| if b { v - mean } else { 0.0 }).collect();
    Filter::new(Grid::from_vec(geom, data)?, r)
}

fn rel_sup(a: &Grid, b: &Grid, scale: f64) -> Result<f64> {
    Ok(a.distance(b, Norm::Sup)? / scale)
}

fn wm_rotation(out: &Path) -> Result<DemoSummary> {
    let geom = Geometry::new(1.6, SPACING)?;
    let model = CnnModel::new(vec![ConvLayer::new(
        vec![vec![detector('W')?, detector('M')?]],
        vec![0.0, 0.0],
        Nonlinearity::Identity,
    )?])?;
    let f = Scene::Sum(vec![
        glyph('W', Vec2::new(-0.45, 0.1), GLYPH_SIZE, GLYPH_STROKE),
        glyph('M', Vec2::new(0.45, -0.1), GLYPH_SIZE, GLYPH_STROKE),
    ])
    .render(geom);
    let half_turn = LinearMap2::rotation_degrees(180.0);
    let turned = f.resample_affine(&half_turn)?;
    let base = model.forward(&f)?;
    let moved = model.forward(&turned)?;
    let back: Vec<Grid> = (0..2)
        .map(|c| moved.channel(c).resample_affine(&half_turn.inverse()?))
        .collect::<Result<_>>()?;
    let scale = base.channel(0).sup_norm().max(base.channel(1).sup_norm());
    let mut channelwise: f64 = 0.0;
    let mut swapped: f64 = 0.0;
    for c in 0..2 {
        channelwise = channelwise.max(rel_sup(&back[c], base.channel(c), scale)?);
        swapped = swapped.max(rel_sup(&back[c], base.channel(1 - c), scale)?);
    }
    let tol = TOL_FACTOR * SPACING;
    fs::create_dir_all(out)?;
    let diff_w = back[0].sub(base.channel(0))?;
    let diff_s = back[0].sub(base.channel(1))?;
    write_triptych([&f, &turned, &turned.sub(&f)?], &out.join("wm_inputs.pgm"))?;
    write_triptych([base.channel(0), &back[0], &diff_w], &out.join("wm_channelwise.pgm"))?;
    write_triptych([base.channel(1), &back[0], &diff_s], &out.join("wm_swapped.pgm"))?;
    Ok(DemoSummary {
        name: "wm-rotation".into(),
        spacing: SPACING,
        primary: channelwise,
        secondary: swapped,
        threshold: tol,
        pass: channelwise > MISALIGNED_FLOOR && swapped <= tol,
        files: vec!["wm_inputs.pgm".into(), "wm_channelwise.pgm".into(), "wm_swapped.pgm".into()],
    })
}

fn scale_fov(out: &Path) -> Result<DemoSummary> {
    let geom = Geometry::new(1.2, SPACING)?;
    let template = zero_mean(&detector('W')?)?;
    let small = glyph('W', Vec2::ZERO, GLYPH_SIZE, GLYPH_STROKE);
    let f = small.render(geom);
    let big = small.warped(LinearMap2::scale(2.0)).render(geom);
    let r_small = equiaudit_core::conv::convolve(&f, &template)?;
    let r_big = equiaudit_core::conv::convolve(&big, &template)?;
    let (p_small, p_big) = (r_small.max_value(), r_big.max_value());
    fs::create_dir_all(out)?;
    let t_panel = template.grid().regrid(geom)?;
    write_triptych([&f, &big, &t_panel], &out.join("fov_inputs.pgm"))?;
    write_triptych([&r_small, &r_big, &r_big.sub(&r_small)?], &out.join("fov_responses.pgm"))?;
    Ok(DemoSummary {
        name: "scale-fov".into(),
        spacing: SPACING,
        primary: p_small,
        secondary: p_big,
        threshold: 0.8,
        pass: p_big < 0.8 * p_small,
        files: vec!["fov_inputs.pgm".into(), "fov_responses.pgm".into()],
    })
}

/// Renders the named demo into `out` and writes `summary.json` next to the
/// images.
pub fn run_demo(name: &str, out: &Path) -> Result<DemoSummary> {
    let summary = match name {
        "wm-rotation" => wm_rotation(out)?,
        "scale-fov" => scale_fov(out)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown demo {other:?}; expected one of {}",
                DEMOS.join(", ")
            )))
        }
    };
    fs::write(
        out.join(format!("{}_summary.json", name)),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}

pub fn cmd_demo(name: &str, out: &Path) -> i32 {
    match run_demo(name, out) {
        Ok(s) => {
            println!("{}", s.line());
            if s.pass {
                crate::EXIT_OK
            } else {
                crate::EXIT_MISMATCH
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            crate::EXIT_CONFIG
        }
    }
}
