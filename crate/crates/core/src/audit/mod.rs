//! Residual computations, refinement studies and counterexample
//! certificates for the covariance identities of convolutional models.
//!
//! Residuals are reported relative to a response scale (usually
//! `sup |Λf − Λ0|`) so thresholds of the form `c·h` are dimensionless.

mod certificates;
mod report;

pub use certificates::{
    mollifier_recover_filter, norot_counterexample, CounterexampleCertificate, MollifierStep,
    MollifierTrace, NorotOptions,
};
pub use report::{
    full_paper_audit, AuditConfig, CheckRecord, ModelSource, ReportBundle, TransformAudit,
};

use serde::Serialize;

use crate::conv::{convolve, transform_filter, Filter};
use crate::error::{Error, Result};
use crate::generator::Operator;
use crate::grid::{Geometry, Grid, Norm};
use crate::scene::{FilterShape, Scene};
use crate::transform::{LinearMap2, Vec2};

/// Relative residuals at or below this are treated as round-off.
pub const ROUNDOFF: f64 = 1e-11;

/// Default first-order tolerance factor: `tol(h) = 5·h` (relative).
pub const TOL_FACTOR: f64 = 5.0;

/// Residuals over a sequence of spacings, coarse to fine, with the
/// least-squares rate `p` in `residual ≈ C·hᵖ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualCurve {
    pub spacings: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `None` when the curve is exact or has fewer than two usable points.
    pub fitted_rate: Option<f64>,
    /// Every residual is at round-off level.
    pub exact: bool,
}

impl ResidualCurve {
    pub fn new(spacings: Vec<f64>, residuals: Vec<f64>) -> Result<Self> {
        if spacings.len() != residuals.len() || spacings.is_empty() {
            return Err(Error::invalid("residual curve needs matching, non-empty spacing and residual lists"));
        }
        if spacings.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::invalid("spacings must be strictly descending"));
        }
        if residuals.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::invalid("residuals must be finite and non-negative"));
        }
        let exact = residuals.iter().all(|&r| r <= ROUNDOFF);
        let fitted_rate = if exact { None } else { fit_rate(&spacings, &residuals) };
        Ok(ResidualCurve {
            spacings,
            residuals,
            fitted_rate,
            exact,
        })
    }

    pub fn finest(&self) -> (f64, f64) {
        let i = self.spacings.len() - 1;
        (self.spacings[i], self.residuals[i])
    }

    /// Exact, or converging at least at `min_rate`.
    pub fn converges(&self, min_rate: f64) -> bool {
        self.exact || self.fitted_rate.is_some_and(|p| p >= min_rate)
    }

    /// Finest residual within `TOL_FACTOR·h`.
    pub fn within_first_order_tol(&self) -> bool {
        let (h, r) = self.finest();
        r <= TOL_FACTOR * h
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("spacing,residual\n");
        for (h, r) in self.spacings.iter().zip(&self.residuals) {
            out.push_str(&format!("{h:?},{r:?}\n"));
        }
        out
    }
}

/// Slope of `ln r` against `ln h` over the points with `r > 0`.
fn fit_rate(h: &[f64], r: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(r)
        .filter(|(_, &r)| r > 0.0)
        .map(|(&h, &r)| (h.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AlignedWithinTol,
    Misaligned,
    Inconclusive,
    Pass,
    Fail,
    Skipped,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Two-spacing discrimination: a residual within `5h` at the finest
/// spacing is aligned; one above it that does not shrink under refinement
/// (finest ≥ 0.75 × previous) is a genuine misalignment; anything else is
/// inconclusive. Returns the verdict and the measured floor.
pub fn alignment_verdict(curve: &ResidualCurve) -> (Verdict, f64) {
    let (_, fine) = curve.finest();
    if curve.within_first_order_tol() {
        return (Verdict::AlignedWithinTol, fine);
    }
    let k = curve.residuals.len();
    if k >= 2 && fine >= 0.75 * curve.residuals[k - 2] {
        (Verdict::Misaligned, fine)
    } else {
        (Verdict::Inconclusive, fine)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlignmentResidual {
    /// Distance between `T_g Λ T_h f` and `Λf` over the trusted disc.
    pub residual: f64,
    /// `sup |Λf − Λ0|` over the same disc.
    pub scale: f64,
    pub trusted_radius: f64,
}

impl AlignmentResidual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.residual / self.scale
        } else {
            self.residual
        }
    }
}

/// Compares `T_g(Λ(T_h f))` with `Λf` on the disc where both outputs are
/// free of boundary effects: radius `extent − r(Λ) − 2h`, further limited to
/// points whose preimage under `T_g` lies in that disc.
pub fn alignment_residual(
    op: &dyn Operator,
    t_h: &LinearMap2,
    t_g: &LinearMap2,
    f: &Grid,
    norm: Norm,
) -> Result<AlignmentResidual> {
    let geom = *f.geometry();
    let h = geom.spacing();
    let extent = geom.extent();
    let r = op.declared_radius().unwrap_or(0.0);
    let s = f.support_estimate(0.0).radius;
    let need = (t_h.operator_norm() * (s + std::f64::consts::SQRT_2 * h)).max(s) + r;
    if need > extent {
        return Err(Error::domain(
            format!("warped input support plus receptive radius of {}", op.label()),
            need,
            extent,
        ));
    }
    let trusted = extent - r - 2.0 * h;
    let g_inv = t_g.inverse()?;
    let lhs = op.apply(&f.resample_affine(t_h)?)?.resample_affine(t_g)?;
    let rhs = op.apply(f)?;
    let zero = op.apply(&Grid::zeros(geom))?;
    let keep = |p: Vec2| p.norm() <= trusted && g_inv.apply(p).norm() <= trusted;
    Ok(AlignmentResidual {
        residual: lhs.distance_where(&rhs, norm, keep)?,
        scale: rhs.distance_where(&zero, Norm::Sup, keep)?,
        trusted_radius: trusted,
    })
}

/// `sup |T⁻¹Λ_λT f − Λ_{|det T|·λ∘T} f| / sup |Λ_{λ'} f|` at one spacing.
pub fn naturality_residual(lambda: &Filter, t: &LinearMap2, f: &Grid) -> Result<f64> {
    let geom = f.geometry();
    let h = geom.spacing();
    let s = f.support_estimate(0.0).radius;
    let lt = transform_filter(lambda, t)?;
    let need = (t.operator_norm() * (s + std::f64::consts::SQRT_2 * h) + lambda.support_radius())
        .max(s + lt.support_radius());
    if need > geom.extent() {
        return Err(Error::domain("naturality: warped support plus filter radius", need, geom.extent()));
    }
    let t_inv = t.inverse()?;
    let lhs = convolve(&f.resample_affine(t)?, lambda)?.resample_affine(&t_inv)?;
    let rhs = convolve(f, &lt)?;
    let scale = rhs.sup_norm().max(lhs.sup_norm());
    let d = lhs.distance(&rhs, Norm::Sup)?;
    Ok(if scale > 0.0 { d / scale } else { d })
}

/// Refinement study of [`naturality_residual`] with the filter and image
/// re-rendered analytically at each spacing.
pub fn naturality_check(
    shape: &FilterShape,
    t: &LinearMap2,
    scene: &Scene,
    extent: f64,
    spacings: &[f64],
) -> Result<ResidualCurve> {
    let residuals = spacings
        .iter()
        .map(|&h| {
            let f = scene.render(Geometry::new(extent, h)?);
            naturality_residual(&shape.render(h)?, t, &f)
        })
        .collect::<Result<Vec<_>>>()?;
    ResidualCurve::new(spacings.to_vec(), residuals)
}

/// `sup |T(D_δ f) − D_{Tδ}(T f)|`.
pub fn commutation_check(t: &LinearMap2, delta: Vec2, f: &Grid) -> Result<f64> {
    let lhs = f.translate(delta).resample_affine(t)?;
    let rhs = f.resample_affine(t)?.translate(t.apply(delta));
    lhs.distance(&rhs, Norm::Sup)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FixedPointResidual {
    /// `‖λ − |det T|·λ∘T‖₁ / ‖λ‖₁`.
    pub residual: f64,
    /// `| sup|λ'| − sup|λ| | / sup|λ|`; tends to `||det T| − 1|`.
    pub sup_gap: f64,
    /// The filter is zero; the check is vacuous.
    pub degenerate: bool,
}

pub fn filter_fixed_point_residual(lambda: &Filter, t: &LinearMap2) -> Result<FixedPointResidual> {
    let lt = transform_filter(lambda, t)?;
    if lambda.is_zero() {
        return Ok(FixedPointResidual {
            residual: 0.0,
            sup_gap: 0.0,
            degenerate: true,
        });
    }
    let half = lt.grid().geometry().half().max(lambda.grid().geometry().half());
    let geom = Geometry::from_half(lambda.spacing(), half)?;
    let a = lambda.grid().regrid(geom)?;
    let b = lt.grid().regrid(geom)?;
    let sup = a.sup_norm();
    Ok(FixedPointResidual {
        residual: a.distance(&b, Norm::L1)? / lambda.l1_norm(),
        sup_gap: (b.sup_norm() - sup).abs() / sup,
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceResidual {
    pub max_residual: f64,
    /// Corpus index attaining the maximum.
    pub argmax: usize,
    pub residuals: Vec<f64>,
}

/// `max_f |μ(T f) − μ(f)|` over the corpus.
pub fn generator_invariance_residual(
    op: &dyn Operator,
    t: &LinearMap2,
    corpus: &[Grid],
) -> Result<InvarianceResidual> {
    if corpus.is_empty() {
        return Err(Error::invalid("invariance residual needs a non-empty corpus"));
    }
    let residuals = corpus
        .iter()
        .map(|f| Ok((op.generator(&f.resample_affine(t)?)? - op.generator(f)?).abs()))
        .collect::<Result<Vec<f64>>>()?;
    let (argmax, max_residual) = residuals
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, r)| if r > best.1 { (i, r) } else { best });
    Ok(InvarianceResidual {
        max_residual,
        argmax,
        residuals,
    })
}
