//! Constructive certificates: the displaced-bump counterexample showing a
//! spatial aligner other than `T⁻¹` cannot work, and filter recovery from a
//! shrinking mollifier family.

use serde::Serialize;

use crate::conv::{convolve, Filter};
use crate::error::{Error, Result};
use crate::grid::{make_bump, Geometry, Grid, Norm};
use crate::transform::{LinearMap2, Vec2};

#[derive(Clone, Copy, Debug)]
pub struct NorotOptions {
    /// Extra displacement beyond `r(f) + r(λ₂)`; default `max(1, 2h)`.
    pub margin: Option<f64>,
    /// `|rhs|` must stay below `tol_rel · scale`.
    pub tol_rel: f64,
    /// `|lhs|` must reach `floor_factor · tol`.
    pub floor_factor: f64,
}

impl Default for NorotOptions {
    fn default() -> Self {
        NorotOptions {
            margin: None,
            tol_rel: 1e-6,
            floor_factor: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleCertificate {
    pub transform: LinearMap2,
    pub bump_center: Vec2,
    /// Support radius of the test image.
    pub bump_radius: f64,
    /// Whether the test image is the reflected `λ₁` instead of a bump.
    pub reflected_filter: bool,
    pub p: Vec2,
    /// `|T⁻¹p − p|`.
    pub displacement: f64,
    /// `r(f) + r(λ₂) + margin`.
    pub required: f64,
    pub extent_used: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub separation: f64,
    /// `sup |λ₁ ⋆ f|`.
    pub scale: f64,
    pub tol: f64,
    pub floor: f64,
    pub valid: bool,
}

const DIRECTIONS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (0.0, 1.0),
    (1.0, 1.0),
    (1.0, -1.0),
    (-1.0, 0.0),
    (0.0, -1.0),
    (-1.0, -1.0),
    (-1.0, 1.0),
];

/// Builds `f` with `(λ₁ ⋆ f)(0̄) ≠ 0` and a lattice displacement `p` with
/// `|T⁻¹p − p| > r(f) + r(λ₂) + margin`, then evaluates
/// `lhs = (D_p Λ_{λ₁} D_{−p} f)(0̄)` and `rhs = (D_p T Λ_{λ₂} D_{−p} f)(0̄)`.
/// The supports make `rhs` vanish while `lhs` equals `(λ₁ ⋆ f)(0̄)`.
pub fn norot_counterexample(
    l1: &Filter,
    l2: &Filter,
    t: &LinearMap2,
    geom: Geometry,
    opts: &NorotOptions,
) -> Result<CounterexampleCertificate> {
    if t.distance(&LinearMap2::IDENTITY) <= 1e-9 * t.operator_norm().max(1.0) {
        return Err(Error::NoCounterexample(
            "the identity aligns every operator with itself".into(),
        ));
    }
    if l1.is_zero() {
        return Err(Error::invalid("λ₁ must be non-zero"));
    }
    let h = geom.spacing();
    for l in [l1, l2] {
        if (l.spacing() - h).abs() > 1e-12 * h {
            return Err(Error::GeometryMismatch(format!(
                "filter spacing {} vs image spacing {h}",
                l.spacing()
            )));
        }
    }
    let t_inv = t.inverse()?;

    // A centred bump covering λ₁'s support; if its response vanishes at 0̄,
    // fall back to the reflected filter, whose response is Σλ₁²h² > 0.
    let r_bump = l1.support_radius().max(2.0 * h);
    let mut reflected = false;
    let mut r_f = r_bump;
    let probe_geom = Geometry::new(r_bump + l1.support_radius() + 2.0 * h, h)?;
    let bump = make_bump(Vec2::ZERO, r_bump, 1.0, probe_geom)?;
    let lhs_probe = convolve(&bump, l1)?.at_origin();
    if lhs_probe.abs() <= 1e-9 * l1.l1_norm() {
        reflected = true;
        r_f = l1.support_radius();
    }
    let render = |g: Geometry| -> Result<Grid> {
        if reflected {
            Ok(Grid::from_fn(g, |p| l1.grid().sample(-p)))
        } else {
            make_bump(Vec2::ZERO, r_bump, 1.0, g)
        }
    };

    let margin = opts.margin.unwrap_or(1f64.max(2.0 * h));
    let r_max = l1.support_radius().max(l2.support_radius());
    let required = r_f + l2.support_radius() + margin;
    let sup = |v: Vec2| v.x.abs().max(v.y.abs());
    let mut best: Option<(f64, Vec2, f64)> = None;
    for (dx, dy) in DIRECTIONS {
        let d = Vec2::new(dx * h, dy * h);
        let step = (t_inv.apply(d) - d).norm();
        if step <= 1e-12 * h {
            continue;
        }
        let k = (required / step).floor() + 1.0;
        let p = d * k;
        let disp = (t_inv.apply(p) - p).norm();
        let need = (sup(p) + r_f + r_max).max(sup(t_inv.apply(p))) + 2.0 * h;
        if disp > required && best.is_none_or(|b| need < b.0) {
            best = Some((need, p, disp));
        }
    }
    let (need, p, displacement) = best.ok_or_else(|| {
        Error::NoCounterexample(format!("{t} moves no lattice direction"))
    })?;
    if need > geom.extent() {
        return Err(Error::domain(
            format!("counterexample displacement |T⁻¹p − p| > {required:.3}"),
            need,
            geom.extent(),
        ));
    }

    let f = render(geom)?;
    let fp = f.translate(-p);
    let lhs = convolve(&fp, l1)?.translate(p).at_origin();
    let rhs = convolve(&fp, l2)?.resample_affine(t)?.translate(p).at_origin();
    let scale = convolve(&f, l1)?.sup_norm();
    let tol = opts.tol_rel * scale;
    let floor = opts.floor_factor * tol;
    Ok(CounterexampleCertificate {
        transform: *t,
        bump_center: Vec2::ZERO,
        bump_radius: r_f,
        reflected_filter: reflected,
        p,
        displacement,
        required,
        extent_used: geom.extent(),
        lhs,
        rhs,
        separation: (lhs - rhs).abs(),
        scale,
        tol,
        floor,
        valid: lhs.abs() >= floor && rhs.abs() <= tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MollifierStep {
    pub n: usize,
    pub sigma: f64,
    /// `‖λ ⋆ f_n − λ‖₁`.
    pub l1_error: f64,
    /// `l1_error / ‖λ‖₁`.
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MollifierTrace {
    pub steps: Vec<MollifierStep>,
    pub lambda_l1: f64,
    pub warning: Option<String>,
}

impl MollifierTrace {
    pub fn final_relative_error(&self) -> f64 {
        self.steps.last().map(|s| s.relative_error).unwrap_or(f64::NAN)
    }

    /// Errors never increase over the last `k` steps.
    pub fn decreasing_over_last(&self, k: usize) -> bool {
        let s = &self.steps[self.steps.len().saturating_sub(k)..];
        s.windows(2).all(|w| w[1].l1_error <= w[0].l1_error)
    }
}

/// Unit-mass Gaussian on the lattice, truncated at `4σ`.
pub fn mollifier(geom: Geometry, sigma: f64) -> Grid {
    let cut = 4.0 * sigma;
    let g = Grid::from_fn(geom, |p| {
        let r2 = p.dot(p);
        if r2 <= cut * cut {
            (-r2 / (2.0 * sigma * sigma)).exp()
        } else {
            0.0
        }
    });
    let mass = g.integral();
    g.map(|v| v / mass)
}

/// `‖λ ⋆ f_n − λ‖₁` for Gaussian mollifiers `σ_n = σ₀·2⁻ⁿ`, `n = 0..=n_steps`.
pub fn mollifier_recover_filter(lambda: &Filter, sigma0: f64, n_steps: usize) -> Result<MollifierTrace> {
    if !(sigma0 > 0.0) {
        return Err(Error::invalid(format!("σ₀ must be positive, got {sigma0}")));
    }
    if lambda.is_zero() {
        return Err(Error::invalid("cannot recover a zero filter"));
    }
    let h = lambda.spacing();
    let geom = Geometry::new(lambda.support_radius() + 4.0 * sigma0 + 2.0 * h, h)?;
    let target = lambda.grid().regrid(geom)?;
    let lambda_l1 = lambda.l1_norm();
    let mut steps = Vec::with_capacity(n_steps + 1);
    for n in 0..=n_steps {
        let sigma = sigma0 * 0.5f64.powi(n as i32);
        let smoothed = convolve(&target, &Filter::from_grid_measured(mollifier(
            Geometry::new((4.0 * sigma).max(h), h)?,
            sigma,
        )))?;
        let l1_error = smoothed.distance(&target, Norm::L1)?;
        steps.push(MollifierStep {
            n,
            sigma,
            l1_error,
            relative_error: l1_error / lambda_l1,
        });
    }
    let sigma_final = steps.last().map(|s| s.sigma).unwrap_or(sigma0);
    let warning = (sigma_final < 2.0 * h).then(|| {
        format!("final mollifier width {sigma_final} is below 2h = {}; it is not resolved by the grid", 2.0 * h)
    });
    Ok(MollifierTrace {
        steps,
        lambda_l1,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::{radial_filter, Profile};

    fn gaussian(h: f64, sigma: f64) -> Filter {
        radial_filter(|r| Profile::Gaussian { sigma }.eval(r), h, 4.0 * sigma).unwrap()
    }

    #[test]
    fn rotation_certificate() {
        let h = 0.05;
        let l = gaussian(h, 0.25);
        let geom = Geometry::new(4.5, h).unwrap();
        let c = norot_counterexample(&l, &l, &LinearMap2::rotation_degrees(90.0), geom, &NorotOptions::default()).unwrap();
        assert!(c.valid, "{c:?}");
        assert!(c.rhs.abs() <= 1e-6);
        assert!(c.lhs.abs() > 0.01);
        assert!(c.displacement > c.required);
        assert!(geom.lattice_offset(c.p).is_some());
    }

    #[test]
    fn scaling_certificate_and_domain_report() {
        let h = 0.05;
        let l = gaussian(h, 0.125);
        let t = LinearMap2::scale(1.5);
        let small = Geometry::new(2.0, h).unwrap();
        let err = norot_counterexample(&l, &l, &t, small, &NorotOptions::default()).unwrap_err();
        let Error::DomainFit { needed, .. } = err else {
            panic!("expected domain error, got {err}");
        };
        let c = norot_counterexample(&l, &l, &t, Geometry::new(needed, h).unwrap(), &NorotOptions::default()).unwrap();
        assert!(c.valid, "{c:?}");
        assert!(c.separation > c.tol, "{c:?}");
    }

    #[test]
    fn identity_has_no_counterexample() {
        let l = gaussian(0.05, 0.25);
        let geom = Geometry::new(3.0, 0.05).unwrap();
        let err = norot_counterexample(&l, &l, &LinearMap2::IDENTITY, geom, &NorotOptions::default());
        assert!(matches!(err, Err(Error::NoCounterexample(_))));
    }

    #[test]
    fn reflected_filter_fallback() {
        // Antisymmetric filter: a centred bump has zero response at 0̄.
        let h = 0.05;
        let l = Filter::from_fn(h, 0.4, |p| p.x * Profile::Bump { radius: 0.4 }.eval(p.norm())).unwrap();
        let geom = Geometry::new(4.0, h).unwrap();
        let c = norot_counterexample(&l, &l, &LinearMap2::rotation_degrees(180.0), geom, &NorotOptions::default()).unwrap();
        assert!(c.reflected_filter && c.valid, "{c:?}");
    }

    #[test]
    fn mollifier_recovers_gaussian() {
        let h = 0.02;
        let l = gaussian(h, 0.5);
        let trace = mollifier_recover_filter(&l, 0.5, 3).unwrap();
        assert!(trace.warning.is_none());
        assert!(trace.final_relative_error() <= 0.05, "{trace:?}");
        assert!(trace.decreasing_over_last(4));
        let zero_steps = mollifier_recover_filter(&l, 0.5, 0).unwrap();
        assert_eq!(zero_steps.steps.len(), 1);
        assert!(zero_steps.steps[0].relative_error > trace.final_relative_error());
    }

    #[test]
    fn unresolved_mollifier_warns() {
        let l = gaussian(0.05, 0.2);
        let trace = mollifier_recover_filter(&l, 0.2, 3).unwrap();
        assert!(trace.warning.is_some());
    }
}
