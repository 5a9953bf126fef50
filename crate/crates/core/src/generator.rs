//! Translation-covariant operators through their generator
//! `μ(f) = (Λf)(0̄)`, and the inverse construction `(Λ_μ f)(x) = μ(D_{−x}f)`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conv::{convolve, convolve_at, CnnModel, Filter};
use crate::error::{Error, Result};
use crate::grid::{Geometry, Grid};
use crate::transform::{classify, ClassifyOptions, LinearMap2, TransformKind, Vec2};

/// A deterministic map `Grid → Grid`. Implementations must be reentrant.
pub trait Operator: Send + Sync {
    fn apply(&self, f: &Grid) -> Result<Grid>;

    /// `(Λf)(0̄)`. Override when the origin sample is cheaper than `apply`.
    fn generator(&self, f: &Grid) -> Result<f64> {
        Ok(self.apply(f)?.at_origin())
    }

    /// Upper bound on the semi-locality radius, when known.
    fn declared_radius(&self) -> Option<f64> {
        None
    }

    fn label(&self) -> String;
}

pub type OperatorHandle = Arc<dyn Operator>;

pub struct IdentityOp;

impl Operator for IdentityOp {
    fn apply(&self, f: &Grid) -> Result<Grid> {
        Ok(f.clone())
    }

    fn generator(&self, f: &Grid) -> Result<f64> {
        Ok(f.at_origin())
    }

    fn declared_radius(&self) -> Option<f64> {
        Some(0.0)
    }

    fn label(&self) -> String {
        "identity".into()
    }
}

pub struct ConvolutionOp(pub Filter);

impl Operator for ConvolutionOp {
    fn apply(&self, f: &Grid) -> Result<Grid> {
        convolve(f, &self.0)
    }

    fn generator(&self, f: &Grid) -> Result<f64> {
        let (r, c) = f.geometry().origin_index();
        convolve_at(f, &self.0, r, c)
    }

    fn declared_radius(&self) -> Option<f64> {
        Some(self.0.support_radius())
    }

    fn label(&self) -> String {
        format!("convolution(r={})", self.0.support_radius())
    }
}

/// One feature channel of a CNN at a chosen depth.
pub struct CnnChannel {
    pub model: Arc<CnnModel>,
    pub depth: usize,
    pub channel: usize,
}

impl CnnChannel {
    pub fn new(model: Arc<CnnModel>, depth: usize, channel: usize) -> Result<Self> {
        if depth > model.depth() || channel >= model.channels_at(depth) {
            return Err(Error::invalid(format!(
                "no channel {channel} at depth {depth} in a {}-layer model",
                model.depth()
            )));
        }
        Ok(CnnChannel {
            model,
            depth,
            channel,
        })
    }
}

impl Operator for CnnChannel {
    fn apply(&self, f: &Grid) -> Result<Grid> {
        Ok(self
            .model
            .forward_to(f, self.depth)?
            .into_channels()
            .swap_remove(self.channel))
    }

    fn generator(&self, f: &Grid) -> Result<f64> {
        let (r, c) = f.geometry().origin_index();
        self.model.evaluate_at(f, self.depth, self.channel, r, c)
    }

    fn declared_radius(&self) -> Option<f64> {
        self.model
            .channel_receptive_radii(self.depth)
            .ok()
            .map(|r| r[self.channel])
    }

    fn label(&self) -> String {
        format!("cnn(depth={}, channel={})", self.depth, self.channel)
    }
}

type Functional = dyn Fn(&Grid) -> Result<f64> + Send + Sync;

/// `Λ_μ` built from a generator: `(Λ_μ f)(x) = μ(D_{−x} f)`.
pub struct GeneratorOp {
    mu: Box<Functional>,
    radius: Option<f64>,
    label: String,
}

pub fn operator_from_generator(
    mu: impl Fn(&Grid) -> Result<f64> + Send + Sync + 'static,
    label: impl Into<String>,
) -> GeneratorOp {
    GeneratorOp {
        mu: Box::new(mu),
        radius: None,
        label: label.into(),
    }
}

impl GeneratorOp {
    pub fn with_radius(mut self, r: f64) -> Self {
        self.radius = Some(r);
        self
    }
}

impl Operator for GeneratorOp {
    fn apply(&self, f: &Grid) -> Result<Grid> {
        let geom = *f.geometry();
        let n = geom.n();
        let half = geom.half() as isize;
        let mut data = Vec::with_capacity(geom.len());
        for r in 0..n {
            for c in 0..n {
                // D_{−x} moves sample x to the origin.
                let moved = f.shift(half - r as isize, half - c as isize);
                data.push((self.mu)(&moved)?);
            }
        }
        Grid::from_vec(geom, data)
    }

    fn generator(&self, f: &Grid) -> Result<f64> {
        (self.mu)(f)
    }

    fn declared_radius(&self) -> Option<f64> {
        self.radius
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// `T⁻¹ ∘ Λ ∘ T` with `(Tf)(x) = f(T⁻¹x)`.
pub struct Conjugated {
    pub inner: OperatorHandle,
    pub t: LinearMap2,
    t_inv: LinearMap2,
}

impl Conjugated {
    pub fn new(inner: OperatorHandle, t: LinearMap2) -> Result<Self> {
        let t_inv = t.inverse()?;
        Ok(Conjugated { inner, t, t_inv })
    }
}

impl Operator for Conjugated {
    fn apply(&self, f: &Grid) -> Result<Grid> {
        self.inner
            .apply(&f.resample_affine(&self.t)?)?
            .resample_affine(&self.t_inv)
    }

    fn generator(&self, f: &Grid) -> Result<f64> {
        self.inner.generator(&f.resample_affine(&self.t)?)
    }

    fn declared_radius(&self) -> Option<f64> {
        self.inner
            .declared_radius()
            .map(|r| self.t_inv.operator_norm() * r)
    }

    fn label(&self) -> String {
        format!("conj({}, {})", self.t, self.inner.label())
    }
}

/// Mean value over the whole domain at every sample; not semi-local.
pub struct GlobalMean;

impl Operator for GlobalMean {
    fn apply(&self, f: &Grid) -> Result<Grid> {
        let m = self.generator(f)?;
        Ok(f.map(|_| m))
    }

    fn generator(&self, f: &Grid) -> Result<f64> {
        let e = f.geometry().extent();
        Ok(f.integral() / (4.0 * e * e))
    }

    fn label(&self) -> String {
        "global_mean".into()
    }
}

/// `μ(f) = (Λf)(0̄)`, after checking that the declared receptive radius
/// leaves the origin inside the trusted interior.
pub fn generator_eval(op: &dyn Operator, f: &Grid) -> Result<f64> {
    if let Some(r) = op.declared_radius() {
        let extent = f.geometry().extent();
        if r >= extent {
            return Err(Error::domain(
                format!("receptive radius of {}", op.label()),
                r,
                extent,
            ));
        }
    }
    let v = op.generator(f)?;
    if !v.is_finite() {
        return Err(Error::invalid(format!("generator of {} is not finite", op.label())));
    }
    Ok(v)
}

#[derive(Clone, Debug, Serialize)]
pub struct SemilocalEstimate {
    /// Smallest tested radius that passed; `+∞` when none did.
    pub radius: f64,
    pub seed: u64,
    pub perturbations: usize,
    /// `(radius, largest observed |μ(f₁) − μ(f₂)|)` for each tested radius.
    pub deviations: Vec<(f64, f64)>,
}

impl SemilocalEstimate {
    pub fn is_semilocal(&self) -> bool {
        self.radius.is_finite()
    }
}

/// Copy of `f` with seeded noise added at every sample farther than
/// `radius` from the origin.
pub fn perturb_outside(f: &Grid, radius: f64, rng: &mut impl Rng) -> Grid {
    let geom = *f.geometry();
    let amp = rng.gen_range(0.5..2.0);
    let sparse = rng.gen_bool(0.5);
    let mut g = f.clone();
    let n = geom.n();
    for r in 0..n {
        for c in 0..n {
            if geom.point(r, c).norm() > radius && (!sparse || rng.gen_bool(0.1)) {
                let v = g.get(r, c) + amp * rng.gen_range(-1.0..1.0);
                g.set(r, c, v);
            }
        }
    }
    g
}

/// Randomized falsification of semi-locality: for each `r` in `radii`
/// (ascending), perturbs every probe outside the `r`-ball `k` times and
/// returns the first `r` where `μ` never moves by more than `tol`.
pub fn estimate_semilocal_radius(
    op: &dyn Operator,
    probes: &[Grid],
    radii: &[f64],
    tol: f64,
    k: usize,
    seed: u64,
) -> Result<SemilocalEstimate> {
    if probes.is_empty() {
        return Err(Error::invalid("semi-locality probing needs at least one probe"));
    }
    if radii.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("radii must be ascending"));
    }
    let extent = probes[0].geometry().extent();
    if let Some(&r) = radii.last() {
        if r >= extent {
            return Err(Error::domain("largest probe radius", r, extent));
        }
    }
    let base: Vec<f64> = probes.iter().map(|p| op.generator(p)).collect::<Result<_>>()?;
    let mut deviations = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        let mut worst: f64 = 0.0;
        'probes: for (pi, (p, &mu)) in probes.iter().zip(&base).enumerate() {
            for j in 0..k {
                let stream = ((ri as u64) << 40) ^ ((pi as u64) << 20) ^ j as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let q = perturb_outside(p, r, &mut rng);
                worst = worst.max((op.generator(&q)? - mu).abs());
                if worst > tol {
                    break 'probes;
                }
            }
        }
        deviations.push((r, worst));
        if worst <= tol {
            return Ok(SemilocalEstimate {
                radius: r,
                seed,
                perturbations: k,
                deviations,
            });
        }
    }
    Ok(SemilocalEstimate {
        radius: f64::INFINITY,
        seed,
        perturbations: k,
        deviations,
    })
}

/// Index of the first corpus element with `|μ(f) − μ(0)| > tol`.
pub fn is_nonconstant(op: &dyn Operator, corpus: &[Grid], tol: f64) -> Result<Option<usize>> {
    let Some(first) = corpus.first() else {
        return Ok(None);
    };
    let mu0 = op.generator(&Grid::zeros(*first.geometry()))?;
    for (i, f) in corpus.iter().enumerate() {
        if (op.generator(f)? - mu0).abs() > tol {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionStep {
    pub n: usize,
    pub support_measure: f64,
    pub mu: Option<f64>,
    #[serde(skip)]
    pub grid: Grid,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionTrace {
    pub transform: LinearMap2,
    pub chi_radius: f64,
    pub mu_zero: Option<f64>,
    pub steps: Vec<ContractionStep>,
}

impl ContractionTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,support_measure,mu_value\n");
        for s in &self.steps {
            let mu = s.mu.map(|v| format!("{v:?}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:?},{}", s.n, s.support_measure, mu);
        }
        out
    }

    /// First `n` from which every later term has empty support.
    pub fn vanishes_from(&self) -> Option<usize> {
        let mut from = None;
        for s in &self.steps {
            if s.support_measure == 0.0 {
                from.get_or_insert(s.n);
            } else {
                from = None;
            }
        }
        from
    }
}

/// `f_n = χ·Tⁿ(χ·f)` for `n = 0..=n_max`, with `χ` the indicator of the
/// `chi_radius` ball; `μ(f_n)` is recorded when `op` is given.
pub fn contraction_sequence(
    f: &Grid,
    t: &LinearMap2,
    chi_radius: f64,
    n_max: usize,
    op: Option<&dyn Operator>,
) -> Result<ContractionTrace> {
    let class = classify(t, &ClassifyOptions::default());
    let expanding = class
        .eigenvalues
        .iter()
        .any(|&(re, im)| re.hypot(im) > 1.0 + 1e-9);
    if !expanding && class.kind != TransformKind::Identity {
        return Err(Error::Classification(format!(
            "{t} has no eigenvalue of modulus > 1; pass its inverse instead"
        )));
    }
    let geom: Geometry = *f.geometry();
    if !(chi_radius > 0.0) || chi_radius > geom.extent() {
        return Err(Error::domain("cut-off ball", chi_radius, geom.extent()));
    }
    let chi_f = f.mask_disc(Vec2::ZERO, chi_radius);
    let mu_zero = op.map(|o| o.generator(&Grid::zeros(geom))).transpose()?;
    let mut steps = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let tn = t.iterate(n as i64)?;
        let grid = chi_f.resample_affine(&tn)?.mask_disc(Vec2::ZERO, chi_radius);
        let support_measure = grid.support_estimate(0.0).measure;
        let mu = op.map(|o| o.generator(&grid)).transpose()?;
        steps.push(ContractionStep {
            n,
            support_measure,
            mu,
            grid,
        });
    }
    Ok(ContractionTrace {
        transform: *t,
        chi_radius,
        mu_zero,
        steps,
    })
}
