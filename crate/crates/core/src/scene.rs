//! Analytic test images and filter shapes that can be rendered at any
//! spacing, so refinement studies never interpolate their inputs.

use serde::{Deserialize, Serialize};

use crate::conv::{elliptic_ring_filter, n_fold_symmetrize, radial_filter, CnnModel, ConvLayer, Filter, Nonlinearity, Profile};
use crate::error::{Error, Result};
use crate::grid::{bump_value, make_bump, Geometry, Grid};
use crate::transform::{LinearMap2, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scene {
    Bump {
        center: Vec2,
        radius: f64,
        amplitude: f64,
    },
    /// Gaussian truncated at 4σ.
    Gaussian {
        center: Vec2,
        sigma: f64,
        amplitude: f64,
    },
    /// Smooth step across the line through the origin at `angle_deg`,
    /// windowed by a bump of `radius`.
    Edge {
        angle_deg: f64,
        width: f64,
        radius: f64,
    },
    /// A `W` or `M` stroke in a box of half-size `size`. `M` is `W` turned
    /// by 180°.
    Glyph {
        letter: char,
        center: Vec2,
        size: f64,
        stroke: f64,
    },
    /// `inner(T⁻¹x)`.
    Warped { t: LinearMap2, inner: Box<Scene> },
    Sum(Vec<Scene>),
}

const W_PATH: [(f64, f64); 5] = [(-1.0, 1.0), (-0.5, -1.0), (0.0, 0.4), (0.5, -1.0), (1.0, 1.0)];

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn smooth_step(t: f64) -> f64 {
    0.5 * (1.0 + t.tanh())
}

impl Scene {
    pub fn bump(center: Vec2, radius: f64, amplitude: f64) -> Scene {
        Scene::Bump {
            center,
            radius,
            amplitude,
        }
    }

    pub fn warped(self, t: LinearMap2) -> Scene {
        Scene::Warped {
            t,
            inner: Box::new(self),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Scene::Bump { radius, .. } => *radius > 0.0,
            Scene::Gaussian { sigma, .. } => *sigma > 0.0,
            Scene::Edge { width, radius, .. } => *width > 0.0 && *radius > 0.0,
            Scene::Glyph {
                letter, size, stroke, ..
            } => matches!(letter, 'W' | 'M') && *size > 0.0 && *stroke > 0.0,
            Scene::Warped { t, inner } => {
                t.inverse()?;
                return inner.validate();
            }
            Scene::Sum(parts) => return parts.iter().try_for_each(Scene::validate),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid scene {self:?}")))
        }
    }

    pub fn value(&self, p: Vec2) -> f64 {
        match self {
            Scene::Bump {
                center,
                radius,
                amplitude,
            } => bump_value(p, *center, *radius, *amplitude),
            Scene::Gaussian {
                center,
                sigma,
                amplitude,
            } => {
                let d = p - *center;
                let r2 = d.dot(d);
                if r2 <= 16.0 * sigma * sigma {
                    amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
                } else {
                    0.0
                }
            }
            Scene::Edge {
                angle_deg,
                width,
                radius,
            } => {
                let a = angle_deg.to_radians();
                let normal = Vec2::new(-a.sin(), a.cos());
                smooth_step(p.dot(normal) / width) * bump_value(p, Vec2::ZERO, *radius, 1.0)
            }
            Scene::Glyph {
                letter,
                center,
                size,
                stroke,
            } => {
                let sign = if *letter == 'M' { -1.0 } else { 1.0 };
                let q = (p - *center) * (sign / size);
                let d = W_PATH
                    .windows(2)
                    .map(|w| segment_distance(q, Vec2::new(w[0].0, w[0].1), Vec2::new(w[1].0, w[1].1)))
                    .fold(f64::INFINITY, f64::min);
                let s = d * size / stroke;
                if s < 1.0 {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            Scene::Warped { t, inner } => match t.inverse() {
                Ok(inv) => inner.value(inv.apply(p)),
                Err(_) => 0.0,
            },
            Scene::Sum(parts) => parts.iter().map(|s| s.value(p)).sum(),
        }
    }

    /// Radius about the origin outside which the scene vanishes.
    pub fn support_radius(&self) -> f64 {
        match self {
            Scene::Bump { center, radius, .. } => center.norm() + radius,
            Scene::Gaussian { center, sigma, .. } => center.norm() + 4.0 * sigma,
            Scene::Edge { radius, .. } => *radius,
            Scene::Glyph {
                center, size, stroke, ..
            } => center.norm() + size * std::f64::consts::SQRT_2 + stroke,
            Scene::Warped { t, inner } => t.operator_norm() * inner.support_radius(),
            Scene::Sum(parts) => parts.iter().map(Scene::support_radius).fold(0.0, f64::max),
        }
    }

    /// Samples the scene. Bumps centred on lattice points are rendered so
    /// that lattice translates of them are sample-identical.
    pub fn render(&self, geom: Geometry) -> Grid {
        match self {
            Scene::Bump {
                center,
                radius,
                amplitude,
            } if geom.inset(*center) >= 0.0 => {
                make_bump(*center, *radius, *amplitude, geom).unwrap_or_else(|_| Grid::from_fn(geom, |p| self.value(p)))
            }
            Scene::Sum(parts) => {
                let mut acc = Grid::zeros(geom);
                for part in parts {
                    let g = part.render(geom);
                    for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += v;
                    }
                }
                acc
            }
            _ => Grid::from_fn(geom, |p| self.value(p)),
        }
    }
}

/// Named scene family used by the audits: bumps at 5 positions × 3 radii,
/// one oriented edge and the W/M glyph pair. `scale` is the largest support
/// radius about the origin.
pub fn standard_corpus(scale: f64) -> Vec<(String, Scene)> {
    let mut out = Vec::new();
    let radii = [0.2, 0.3, 0.4].map(|r| r * scale);
    let dirs = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-0.6, -0.8), (0.6, -0.8)];
    for (i, (dx, dy)) in dirs.iter().enumerate() {
        for (j, r) in radii.iter().enumerate() {
            let offset = scale - r;
            let center = Vec2::new(dx * offset * 0.5, dy * offset * 0.5);
            out.push((format!("bump_p{i}_r{j}"), Scene::bump(center, *r, 1.0)));
        }
    }
    out.push((
        "edge".into(),
        Scene::Edge {
            angle_deg: 30.0,
            width: 0.1 * scale,
            radius: 0.9 * scale,
        },
    ));
    out.push((
        "glyph_wm".into(),
        Scene::Sum(vec![
            Scene::Glyph {
                letter: 'W',
                center: Vec2::new(-0.45 * scale, 0.0),
                size: 0.3 * scale,
                stroke: 0.08 * scale,
            },
            Scene::Glyph {
                letter: 'M',
                center: Vec2::new(0.45 * scale, 0.0),
                size: 0.3 * scale,
                stroke: 0.08 * scale,
            },
        ]),
    ));
    out
}

/// Analytic filter, rendered at the image spacing on demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterShape {
    Radial { profile: Profile, radius: f64 },
    /// `profile(|Bx|)` for `|Bx| ≤ radius`.
    Elliptic {
        b: LinearMap2,
        profile: Profile,
        radius: f64,
    },
    /// Off-centre bump with a linear tilt: `bump(x; c, r)·(1 + tilt·x₁)`.
    Offset { center: Vec2, radius: f64, tilt: f64 },
}

impl FilterShape {
    pub fn render(&self, spacing: f64) -> Result<Filter> {
        match self {
            FilterShape::Radial { profile, radius } => {
                profile.validate()?;
                radial_filter(|r| profile.eval(r), spacing, *radius)
            }
            FilterShape::Elliptic { b, profile, radius } => {
                profile.validate()?;
                elliptic_ring_filter(b, |r| profile.eval(r), spacing, *radius)
            }
            FilterShape::Offset {
                center,
                radius,
                tilt,
            } => Filter::from_fn(spacing, center.norm() + radius, |p| {
                bump_value(p, *center, *radius, 1.0) * (1.0 + tilt * p.x)
            }),
        }
    }

    pub fn support_radius(&self) -> f64 {
        match self {
            FilterShape::Radial { radius, .. } => *radius,
            FilterShape::Elliptic { b, radius, .. } => {
                b.inverse().map(|i| i.operator_norm() * radius).unwrap_or(f64::INFINITY)
            }
            FilterShape::Offset { center, radius, .. } => center.norm() + radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecipe {
    /// `kernels[m][c]`, as in [`ConvLayer`].
    pub kernels: Vec<Vec<FilterShape>>,
    pub biases: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

/// A CNN described by analytic filters, renderable at any spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecipe {
    pub layers: Vec<LayerRecipe>,
    /// Optional `(T, n)`: every rendered kernel is averaged over `T⁰…Tⁿ⁻¹`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetrize: Option<(LinearMap2, u32)>,
}

impl ModelRecipe {
    pub fn render(&self, spacing: f64) -> Result<CnnModel> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let kernels = l
                    .kernels
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|k| {
                                let f = k.render(spacing)?;
                                match &self.symmetrize {
                                    Some((t, n)) => n_fold_symmetrize(&f, t, *n),
                                    None => Ok(f),
                                }
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                ConvLayer::new(kernels, l.biases.clone(), l.nonlinearity)
            })
            .collect::<Result<Vec<_>>>()?;
        CnnModel::new(layers)
    }

    /// Receptive radius of the deepest layer, from the analytic supports.
    pub fn receptive_radius(&self) -> f64 {
        let mut r = vec![0.0];
        for l in &self.layers {
            let outs = l.biases.len();
            r = (0..outs)
                .map(|c| {
                    l.kernels
                        .iter()
                        .enumerate()
                        .map(|(m, row)| r.get(m).copied().unwrap_or(0.0) + row[c].support_radius())
                        .fold(0.0, f64::max)
                })
                .collect();
        }
        r.into_iter().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Norm;

    #[test]
    fn glyph_m_is_w_turned_half_way() {
        let w = Scene::Glyph {
            letter: 'W',
            center: Vec2::ZERO,
            size: 1.0,
            stroke: 0.2,
        };
        let m = Scene::Glyph {
            letter: 'M',
            center: Vec2::ZERO,
            size: 1.0,
            stroke: 0.2,
        };
        let geom = Geometry::new(1.6, 0.05).unwrap();
        let wr = w.render(geom).resample_affine(&LinearMap2::rotation_degrees(180.0)).unwrap();
        assert!(wr.distance(&m.render(geom), Norm::Sup).unwrap() < 1e-12);
        assert!(m.render(geom).sup_norm() > 0.9);
    }

    #[test]
    fn supports_are_respected() {
        let geom = Geometry::new(3.0, 0.05).unwrap();
        for (name, s) in standard_corpus(1.0) {
            s.validate().unwrap();
            let g = s.render(geom);
            let est = g.support_estimate(0.0);
            assert!(est.measure > 0.0, "{name}");
            assert!(est.radius <= s.support_radius() + 1e-12, "{name}: {} > {}", est.radius, s.support_radius());
            assert!(s.support_radius() <= 1.0 + 1e-12, "{name}");
        }
        assert_eq!(standard_corpus(1.0).len(), 17);
    }

    #[test]
    fn warped_scene_matches_resampling() {
        let geom = Geometry::new(2.0, 0.02).unwrap();
        let s = Scene::bump(Vec2::new(0.3, 0.1), 0.5, 1.0);
        let t = LinearMap2::rotation_degrees(30.0);
        let analytic = s.clone().warped(t).render(geom);
        let numeric = s.render(geom).resample_affine(&t).unwrap();
        assert!(analytic.distance(&numeric, Norm::Sup).unwrap() < 0.01);
    }

    #[test]
    fn filter_shapes_render() {
        let shape = FilterShape::Elliptic {
            b: LinearMap2::diag(1.0, 2.0),
            profile: Profile::Bump { radius: 1.0 },
            radius: 1.0,
        };
        let f = shape.render(0.05).unwrap();
        assert_eq!(f.support_radius(), shape.support_radius());
        assert!(f.grid().at_origin() == 1.0);
        let off = FilterShape::Offset {
            center: Vec2::new(0.2, 0.0),
            radius: 0.3,
            tilt: 1.0,
        };
        assert!((off.render(0.05).unwrap().support_radius() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn recipe_renders_at_each_spacing() {
        let radial = |r: f64| FilterShape::Radial {
            profile: Profile::Bump { radius: r },
            radius: r,
        };
        let recipe = ModelRecipe {
            layers: vec![
                LayerRecipe {
                    kernels: vec![vec![radial(0.3), radial(0.2)]],
                    biases: vec![0.0, -0.1],
                    nonlinearity: Nonlinearity::Relu,
                },
                LayerRecipe {
                    kernels: vec![vec![radial(0.25)], vec![radial(0.1)]],
                    biases: vec![0.0],
                    nonlinearity: Nonlinearity::Identity,
                },
            ],
            symmetrize: None,
        };
        assert!((recipe.receptive_radius() - 0.55).abs() < 1e-12);
        for h in [0.05, 0.025] {
            let m = recipe.render(h).unwrap();
            assert_eq!(m.spacing(), Some(h));
            assert!((m.receptive_radius(2).unwrap() - 0.55).abs() < 1e-12);
        }
        let json = serde_json::to_string(&recipe).unwrap();
        assert_eq!(serde_json::from_str::<ModelRecipe>(&json).unwrap(), recipe);
    }
}
