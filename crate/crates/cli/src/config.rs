//! Run configuration: one JSON document describing geometry, transforms,
//! model, corpus, output directory and seed.

use std::path::{Path, PathBuf};

use equiaudit_core::audit::{AuditConfig, ModelSource};
use equiaudit_core::conv::Profile;
use equiaudit_core::scene::{standard_corpus, FilterShape, LayerRecipe, ModelRecipe, Scene};
use equiaudit_core::transform::parse_transform;
use equiaudit_core::{CnnModel, Error, LinearMap2, Nonlinearity, Result, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "EQUIAUDIT_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Half-width of the square domain. A minimum: the audit grows it when
    /// the warped corpus would not fit.
    pub extent: f64,
    /// Coarsest spacing.
    pub spacing: f64,
    /// Number of spacings, each half the previous.
    #[serde(default = "default_refinements")]
    pub refinements: usize,
}

fn default_refinements() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    None,
    /// Radial profiles, invariant under every rotation and reflection.
    Radial,
    /// Off-centre kernels averaged over the cyclic group of `transform`.
    NFold { transform: String, n: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRecipe {
    pub layers: usize,
    /// Output channels of every layer.
    pub channels: usize,
    pub kernel_radius: f64,
    /// Applied to every layer; hidden layers use relu when this is softmax.
    pub nonlinearity: Nonlinearity,
    pub symmetrization: Symmetrization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelConfig {
    /// A model JSON file, relative paths taken from the config file.
    Path(PathBuf),
    Recipe(SynthRecipe),
    /// Explicit analytic filters.
    Analytic(ModelRecipe),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Largest support radius of the standard scenes.
    #[serde(default = "default_corpus_scale")]
    pub scale: f64,
    /// Subset of the standard scene names; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

fn default_corpus_scale() -> f64 {
    0.6
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            scale: default_corpus_scale(),
            names: None,
        }
    }
}

fn default_aligners() -> Vec<String> {
    vec!["rot:90".into(), "scale:1.25".into(), "shear:0.5".into()]
}

fn default_perturbations() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub transforms: Vec<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// `S` in the candidate aligners `T⁻¹∘S`.
    #[serde(default = "default_aligners")]
    pub aligners: Vec<String>,
    #[serde(default = "default_perturbations")]
    pub semilocal_perturbations: usize,
}

impl RunConfig {
    /// Parses a config file, resolving a relative model path against the
    /// file's directory and applying the seed override from the environment.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        if let ModelConfig::Path(p) = &mut cfg.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn spacings(&self) -> Result<Vec<f64>> {
        let g = &self.geometry;
        if g.refinements < 1 {
            return Err(Error::InvalidArgument("geometry.refinements must be at least 1".into()));
        }
        if !(g.spacing > 0.0 && g.extent > g.spacing) {
            return Err(Error::InvalidArgument(format!(
                "geometry needs 0 < spacing < extent, got spacing {} and extent {}",
                g.spacing, g.extent
            )));
        }
        Ok((0..g.refinements).map(|k| g.spacing / (1u64 << k) as f64).collect())
    }

    pub fn parsed_transforms(&self) -> Result<Vec<(String, LinearMap2)>> {
        self.transforms
            .iter()
            .map(|s| parse_transform(s).map(|t| (s.clone(), t)))
            .collect()
    }

    pub fn corpus(&self) -> Result<Vec<(String, Scene)>> {
        if !(self.corpus.scale > 0.0) {
            return Err(Error::InvalidArgument("corpus.scale must be positive".into()));
        }
        let all = standard_corpus(self.corpus.scale);
        let Some(names) = &self.corpus.names else {
            return Ok(all);
        };
        names
            .iter()
            .map(|n| {
                all.iter()
                    .find(|(m, _)| m == n)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown corpus scene {n:?}")))
            })
            .collect()
    }

    pub fn model_source(&self) -> Result<ModelSource> {
        match &self.model {
            ModelConfig::Path(p) => Ok(ModelSource::Fixed(CnnModel::load(p)?)),
            ModelConfig::Recipe(r) => Ok(ModelSource::Recipe(r.synthesize(self.seed)?)),
            ModelConfig::Analytic(r) => Ok(ModelSource::Recipe(r.clone())),
        }
    }

    pub fn audit_config(&self) -> Result<AuditConfig> {
        let aligner_candidates = self
            .aligners
            .iter()
            .map(|s| parse_transform(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(AuditConfig {
            extent: self.geometry.extent,
            spacings: self.spacings()?,
            corpus: self.corpus()?,
            seed: self.seed,
            aligner_candidates,
            semilocal_perturbations: self.semilocal_perturbations,
        })
    }
}

impl SynthRecipe {
    /// Deterministic analytic model for `seed`.
    pub fn synthesize(&self, seed: u64) -> Result<ModelRecipe> {
        if self.layers == 0 || self.channels == 0 {
            return Err(Error::InvalidArgument("recipe needs at least one layer and one channel".into()));
        }
        let kr = self.kernel_radius;
        if !(kr > 0.0) {
            return Err(Error::InvalidArgument("kernel_radius must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let symmetrize = match &self.symmetrization {
            Symmetrization::NFold { transform, n } => Some((parse_transform(transform)?, *n)),
            _ => None,
        };
        let radial = self.symmetrization == Symmetrization::Radial;
        let mut layers = Vec::with_capacity(self.layers);
        for i in 0..self.layers {
            let inputs = if i == 0 { 1 } else { self.channels };
            let last = i + 1 == self.layers;
            let nonlinearity = match self.nonlinearity {
                Nonlinearity::Softmax if !last => Nonlinearity::Relu,
                nl => nl,
            };
            let kernels = (0..inputs)
                .map(|_| (0..self.channels).map(|_| random_shape(&mut rng, kr, radial)).collect())
                .collect();
            layers.push(LayerRecipe {
                kernels,
                biases: vec![0.0; self.channels],
                nonlinearity,
            });
        }
        Ok(ModelRecipe { layers, symmetrize })
    }
}

fn random_shape(rng: &mut ChaCha8Rng, kr: f64, radial: bool) -> FilterShape {
    if radial {
        let profile = if rng.gen_bool(0.5) {
            Profile::Bump { radius: kr }
        } else {
            let radius = kr * rng.gen_range(0.4..0.55);
            Profile::Ring {
                radius,
                width: 0.9 * radius.min(kr - radius),
            }
        };
        FilterShape::Radial { profile, radius: kr }
    } else {
        let rho = kr * rng.gen_range(0.15..0.35);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        FilterShape::Offset {
            center: Vec2::new(rho * phi.cos(), rho * phi.sin()),
            radius: kr - rho,
            tilt: rng.gen_range(-0.8..0.8) / kr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
            "geometry": {"extent": 1.6, "spacing": 0.05},
            "transforms": ["rot:90", "shear:1"],
            "model": {"recipe": {"layers": 2, "channels": 2, "kernel_radius": 0.3,
                                 "nonlinearity": "relu", "symmetrization": "radial"}},
            "output_dir": "out",
            "seed": 7
        }"#
    }

    #[test]
    fn parses_with_defaults() {
        let cfg: RunConfig = serde_json::from_str(sample()).unwrap();
        assert_eq!(cfg.geometry.refinements, 2);
        assert_eq!(cfg.spacings().unwrap(), vec![0.05, 0.025]);
        assert_eq!(cfg.corpus().unwrap().len(), 17);
        assert_eq!(cfg.parsed_transforms().unwrap().len(), 2);
        let nfold: SynthRecipe = serde_json::from_str(
            r#"{"layers": 1, "channels": 1, "kernel_radius": 0.3, "nonlinearity": "identity",
                "symmetrization": {"n_fold": {"transform": "rot:90", "n": 4}}}"#,
        )
        .unwrap();
        assert!(nfold.synthesize(1).unwrap().symmetrize.is_some());
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg: RunConfig = serde_json::from_str(sample()).unwrap();
        cfg.geometry.refinements = 0;
        assert!(cfg.spacings().is_err());
        cfg.geometry.refinements = 1;
        cfg.transforms.push("rot:".into());
        assert!(cfg.parsed_transforms().is_err());
        cfg.corpus.names = Some(vec!["nope".into()]);
        assert!(cfg.corpus().is_err());
        assert!(serde_json::from_str::<RunConfig>(&sample().replace("\"seed\"", "\"sede\"")).is_err());
    }

    #[test]
    fn synthesis_is_seeded() {
        let cfg: RunConfig = serde_json::from_str(sample()).unwrap();
        let ModelConfig::Recipe(r) = &cfg.model else { unreachable!() };
        assert_eq!(r.synthesize(3).unwrap(), r.synthesize(3).unwrap());
        let asym = SynthRecipe {
            symmetrization: Symmetrization::None,
            ..r.clone()
        };
        assert_ne!(asym.synthesize(3).unwrap(), asym.synthesize(4).unwrap());
        let m = r.synthesize(3).unwrap();
        assert_eq!(m.layers.len(), 2);
        assert_eq!(m.layers[0].kernels.len(), 1);
        assert_eq!(m.layers[0].kernels[0].len(), 2);
        m.render(0.05).unwrap();
        assert_eq!(m.layers[1].kernels.len(), 2);
        assert_eq!(m.layers[1].kernels[0].len(), 2);
    }
}
