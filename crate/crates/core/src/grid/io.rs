//! Grid files: plain-text `GRID2` and 16-bit binary PGM with a JSON sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Geometry, Grid};
use crate::error::{Error, Result};

/// Header line `GRID2 <extent> <spacing> <n>`, then `n²` values row-major,
/// top row first.
pub fn write_grid_text(g: &Grid) -> String {
    let geom = g.geometry();
    let n = geom.n();
    let mut out = format!("GRID2 {} {} {}\n", geom.extent(), geom.spacing(), n);
    for r in 0..n {
        let row = g.row(r);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn read_grid_text(text: &str) -> Result<Grid> {
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some("GRID2") {
        return Err(Error::Parse("missing GRID2 header".into()));
    }
    let mut header = |name: &str| -> Result<f64> {
        tokens
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| Error::Parse(format!("bad or missing {name} in GRID2 header")))
    };
    let extent = header("extent")?;
    let spacing = header("spacing")?;
    let n = header("n")?;
    let geom = Geometry::new(extent, spacing)?;
    if n != geom.n() as f64 {
        return Err(Error::Parse(format!(
            "GRID2 n={n} inconsistent with extent {extent} and spacing {spacing}"
        )));
    }
    let data = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad sample `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Grid::from_vec(geom, data)
}

/// Affine dequantization data stored next to a PGM dump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgmSidecar {
    pub extent: f64,
    pub spacing: f64,
    pub value_min: f64,
    pub value_max: f64,
    /// Seed of the run that produced the image, when there was one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` as 16-bit P5 and `<path>.json` with the value range.
pub fn write_pgm(g: &Grid, path: &Path) -> Result<PgmSidecar> {
    write_pgm_seeded(g, path, None)
}

pub fn write_pgm_seeded(g: &Grid, path: &Path, seed: Option<u64>) -> Result<PgmSidecar> {
    let geom = g.geometry();
    let n = geom.n();
    let (lo, hi) = (g.min_value(), g.max_value());
    let span = hi - lo;
    let mut bytes = format!("P5\n{n} {n}\n65535\n").into_bytes();
    bytes.reserve(2 * geom.len());
    for &v in g.data() {
        let q = if span > 0.0 {
            ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, bytes)?;
    let side = PgmSidecar {
        extent: geom.extent(),
        spacing: geom.spacing(),
        value_min: lo,
        value_max: hi,
        seed,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(side)
}

pub fn read_pgm(path: &Path) -> Result<Grid> {
    let side: PgmSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    // Header: magic, width, height, maxval, each followed by whitespace.
    let mut fields = Vec::with_capacity(4);
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    i += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(Error::Parse("expected 16-bit P5 PGM".into()));
    }
    let w: usize = fields[1].parse().map_err(|_| Error::Parse("bad PGM width".into()))?;
    let h: usize = fields[2].parse().map_err(|_| Error::Parse("bad PGM height".into()))?;
    let geom = Geometry::new(side.extent, side.spacing)?;
    if w != geom.n() || h != geom.n() {
        return Err(Error::Parse(format!("PGM is {w}x{h}, sidecar implies {}", geom.n())));
    }
    let body = bytes
        .get(i..i + 2 * w * h)
        .ok_or_else(|| Error::Parse("truncated PGM body".into()))?;
    let span = side.value_max - side.value_min;
    let data = body
        .chunks_exact(2)
        .map(|b| side.value_min + u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0 * span)
        .collect();
    Grid::from_vec(geom, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_bump;
    use crate::transform::Vec2;

    #[test]
    fn text_round_trip_is_exact() {
        let g = make_bump(Vec2::new(0.1, -0.2), 0.5, 1.3, Geometry::new(1.0, 0.1).unwrap()).unwrap();
        let text = write_grid_text(&g);
        assert!(text.starts_with("GRID2 1 0.1 21\n"));
        assert_eq!(read_grid_text(&text).unwrap(), g);
    }

    #[test]
    fn text_rejects_bad_input() {
        assert!(read_grid_text("GRID3 1 0.1 21").is_err());
        assert!(read_grid_text("GRID2 1 0.1 5\n0 0").is_err());
        assert!(read_grid_text("GRID2 0.1 0.1 3\n1 2 3 4 5 6 7 8").is_err());
        assert!(read_grid_text("GRID2 0.1 0.1 3\n1 2 3 4 5 6 7 8 x").is_err());
    }

    #[test]
    fn pgm_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bump.pgm");
        let g = make_bump(Vec2::ZERO, 0.8, -2.0, Geometry::new(1.0, 0.05).unwrap()).unwrap();
        let side = write_pgm(&g, &path).unwrap();
        assert_eq!(side.value_min, -2.0);
        let back = read_pgm(&path).unwrap();
        let err = back.distance(&g, crate::grid::Norm::Sup).unwrap();
        assert!(err <= 2.0 / 65535.0, "{err}");
    }
}
