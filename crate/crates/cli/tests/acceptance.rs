//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use equiaudit_core::audit::{
    filter_fixed_point_residual, generator_invariance_residual, mollifier_recover_filter, naturality_check,
    norot_counterexample, NorotOptions, ROUNDOFF, TOL_FACTOR,
};
use equiaudit_core::conv::{n_fold_symmetrize, radial_filter, transform_filter, Profile};
use equiaudit_core::generator::{
    contraction_sequence, estimate_semilocal_radius, is_nonconstant, operator_from_generator, CnnChannel,
    Conjugated, ConvolutionOp, IdentityOp, Operator, OperatorHandle,
};
use equiaudit_core::grid::make_bump;
use equiaudit_core::scene::{standard_corpus, FilterShape, Scene};
use equiaudit_core::transform::{
    alignment_admits_invariance, classify, ClassifyOptions, InvarianceVerdict, TransformKind,
};
use equiaudit_core::{CnnModel, ConvLayer, Error, Filter, Geometry, Grid, LinearMap2, Nonlinearity, Norm, Vec2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Error>;

fn polynomial_bump(h: f64, radius: f64, rng: &mut ChaCha8Rng) -> Filter {
    let c: [f64; 4] = [rng.gen_range(0.5..1.5), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-5.0..5.0)];
    Filter::from_fn(h, radius, |p| {
        Profile::Bump { radius }.eval(p.norm()) * (c[0] + c[1] * p.x + c[2] * p.y + c[3] * p.x * p.y)
    })
    .unwrap()
}

fn layer(
    ins: usize,
    outs: usize,
    nl: Nonlinearity,
    make: &mut impl FnMut() -> Filter,
    bias: &mut impl FnMut() -> f64,
) -> Result<ConvLayer, Error> {
    let kernels = (0..ins).map(|_| (0..outs).map(|_| make()).collect()).collect();
    ConvLayer::new(kernels, (0..outs).map(|_| bias()).collect(), nl)
}

fn random_models(h: f64, seed: u64) -> Result<Vec<CnnModel>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut brng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let mut k = || polynomial_bump(h, 0.2, &mut rng);
    let mut b = || brng.gen_range(-0.05..0.05);
    Ok(vec![
        CnnModel::new(vec![layer(1, 2, Nonlinearity::Relu, &mut k, &mut b)?])?,
        CnnModel::new(vec![
            layer(1, 2, Nonlinearity::Sigmoid(1.0), &mut k, &mut b)?,
            layer(2, 1, Nonlinearity::Relu, &mut k, &mut b)?,
        ])?,
        CnnModel::new(vec![
            layer(1, 2, Nonlinearity::Relu, &mut k, &mut b)?,
            layer(2, 2, Nonlinearity::Sigmoid(2.0), &mut k, &mut b)?,
            layer(2, 3, Nonlinearity::Softmax, &mut k, &mut b)?,
        ])?,
    ])
}

fn translation_covariance() -> Outcome {
    let h = 0.05;
    let geom = Geometry::new(2.0, h)?;
    let f = Scene::Sum(vec![
        standard_corpus(0.6).pop().unwrap().1,
        Scene::bump(Vec2::new(0.2, -0.3), 0.3, 0.7),
    ])
    .render(geom);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let shifts: Vec<(isize, isize)> = (0..20).map(|_| (rng.gen_range(-8..=8), rng.gen_range(-8..=8))).collect();
    let mut worst: f64 = 0.0;
    for model in random_models(h, 7)? {
        let r = model.receptive_radius(model.depth())?;
        let base = model.forward(&f)?;
        for &(dr, dc) in &shifts {
            let moved = model.forward(&f.shift(dr, dc))?;
            let reach = r + (dr.unsigned_abs().max(dc.unsigned_abs()) as f64 + 2.0) * h;
            let keep = |p: Vec2| p.x.abs().max(p.y.abs()) <= geom.extent() - reach;
            for c in 0..base.channel_count() {
                let scale = base.channel(c).sup_norm().max(f64::MIN_POSITIVE);
                let d = base.channel(c).shift(dr, dc).distance_where(moved.channel(c), Norm::Sup, keep)?;
                worst = worst.max(d / scale);
            }
        }
    }
    Ok((worst <= 1e-9, format!("3 models x 20 lattice shifts, worst relative sup residual {worst:.2e}")))
}

fn naturality() -> Outcome {
    let transforms = [
        ("rot 30", LinearMap2::rotation_degrees(30.0)),
        ("rot 90", LinearMap2::rotation_degrees(90.0)),
        ("diag(2,1)", LinearMap2::diag(2.0, 1.0)),
        ("shear 1", LinearMap2::shear(1.0)),
        ("diag(2,2)", LinearMap2::diag(2.0, 2.0)),
    ];
    let filters = [
        FilterShape::Radial {
            profile: Profile::Bump { radius: 0.25 },
            radius: 0.25,
        },
        FilterShape::Elliptic {
            b: LinearMap2::diag(1.0, 2.0),
            profile: Profile::Bump { radius: 0.25 },
            radius: 0.25,
        },
        FilterShape::Offset {
            center: Vec2::new(0.06, 0.03),
            radius: 0.18,
            tilt: 1.0,
        },
    ];
    let scene = Scene::bump(Vec2::new(0.05, -0.03), 0.3, 1.0);
    let spacings = [0.04, 0.02, 0.01];
    let mut ok = true;
    let mut min_rate = f64::INFINITY;
    let mut worst_ratio: f64 = 0.0;
    let mut exact = 0;
    for (name, t) in &transforms {
        for (i, shape) in filters.iter().enumerate() {
            let curve = naturality_check(shape, t, &scene, 1.1, &spacings)?;
            let (h, r) = curve.finest();
            let pass = curve.converges(0.9) && curve.within_first_order_tol();
            if !pass {
                println!("    naturality {name} filter {i}: {:?} rate {:?}", curve.residuals, curve.fitted_rate);
            }
            ok &= pass;
            if curve.exact {
                exact += 1;
            } else if let Some(p) = curve.fitted_rate {
                min_rate = min_rate.min(p);
            }
            worst_ratio = worst_ratio.max(r / (TOL_FACTOR * h));
        }
    }
    Ok((
        ok,
        format!(
            "15 curves over h = 0.04/0.02/0.01: {exact} exact, slowest fitted rate {min_rate:.2}, worst finest/(5h) {worst_ratio:.3}"
        ),
    ))
}

fn norot() -> Outcome {
    let h = 0.05;
    let l = radial_filter(|r| Profile::Bump { radius: 0.25 }.eval(r), h, 0.25)?;
    let opts = NorotOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, t) in [
        ("rot 90", LinearMap2::rotation_degrees(90.0)),
        ("rot 180", LinearMap2::rotation_degrees(180.0)),
        ("diag(1.5,1.5)", LinearMap2::diag(1.5, 1.5)),
    ] {
        let c = match norot_counterexample(&l, &l, &t, Geometry::new(3.0, h)?, &opts) {
            Err(Error::DomainFit { needed, .. }) => norot_counterexample(&l, &l, &t, Geometry::new(needed + h, h)?, &opts)?,
            other => other?,
        };
        let tol = 1e-6 * c.scale;
        let pass = c.valid && c.rhs.abs() <= tol && c.lhs.abs() >= 100.0 * tol;
        ok &= pass;
        parts.push(format!("{name}: |lhs|/scale {:.3}, |rhs|/scale {:.1e}", c.lhs.abs() / c.scale, c.rhs.abs() / c.scale));
    }
    Ok((ok, parts.join("; ")))
}

fn mollifier_recovery() -> Outcome {
    let h = 0.01;
    let filters = [
        ("gaussian", radial_filter(|r| Profile::Gaussian { sigma: 0.25 }.eval(r), h, 1.0)?),
        (
            "ring",
            radial_filter(|r| Profile::Ring { radius: 0.4, width: 0.3 }.eval(r), h, 0.7)?,
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, l) in &filters {
        let trace = mollifier_recover_filter(l, 0.1, 2)?;
        let e = trace.final_relative_error();
        ok &= trace.decreasing_over_last(3) && e <= 0.05 && trace.warning.is_none();
        let errs: Vec<String> = trace.steps.iter().map(|s| format!("{:.4}", s.relative_error)).collect();
        parts.push(format!("{name}: relative L1 errors [{}]", errs.join(", ")));
    }
    Ok((ok, parts.join("; ")))
}

fn fixed_points() -> Outcome {
    let h = 0.02;
    let tol = TOL_FACTOR * h;
    let mut worst_inv: f64 = 0.0;
    let radial = [
        Profile::Bump { radius: 0.3 },
        Profile::Ring { radius: 0.15, width: 0.12 },
        Profile::Gaussian { sigma: 0.075 },
    ];
    let rotations = [
        LinearMap2::rotation_degrees(30.0),
        LinearMap2::rotation_degrees(90.0),
        LinearMap2::rotation_degrees(45.0),
        LinearMap2::reflection_degrees(20.0),
    ];
    for p in &radial {
        let l = radial_filter(|r| p.eval(r), h, 0.3)?;
        for t in &rotations {
            worst_inv = worst_inv.max(filter_fixed_point_residual(&l, t)?.residual);
        }
    }
    let seed_filter = FilterShape::Offset {
        center: Vec2::new(0.07, 0.02),
        radius: 0.15,
        tilt: 2.0,
    }
    .render(h)?;
    let skew = LinearMap2::rotation_degrees(90.0).conjugate_by(&LinearMap2::new(1.0, 0.3, 0.0, 1.2))?;
    for (t, n) in [
        (LinearMap2::rotation_degrees(90.0), 4),
        (LinearMap2::rotation_degrees(60.0), 6),
        (LinearMap2::rotation_degrees(120.0), 3),
        (LinearMap2::reflection_degrees(30.0), 2),
        (skew, 4),
    ] {
        let s = n_fold_symmetrize(&seed_filter, &t, n)?;
        worst_inv = worst_inv.max(filter_fixed_point_residual(&s, &t)?.residual);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let dilation = LinearMap2::diag(2.0, 2.0);
    let mut weakest = f64::INFINITY;
    for i in 0..10 {
        let l = if i % 2 == 0 {
            polynomial_bump(h, rng.gen_range(0.15..0.3), &mut rng)
        } else {
            let radius = rng.gen_range(0.1..0.2);
            radial_filter(|r| Profile::Ring { radius, width: 0.08 }.eval(r), h, radius + 0.08)?
        };
        weakest = weakest.min(filter_fixed_point_residual(&l, &dilation)?.residual);
    }
    Ok((
        worst_inv <= tol && weakest >= 0.5,
        format!(
            "invariant filters: worst residual {worst_inv:.2e} (tol {tol}); random battery under diag(2,2): smallest residual {weakest:.3}"
        ),
    ))
}

fn oracle_kind(t: &LinearMap2) -> TransformKind {
    let eps = 1e-9 * t.operator_norm();
    if (t.a - 1.0).abs().max(t.b.abs()).max(t.c.abs()).max((t.d - 1.0).abs()) <= eps {
        return TransformKind::Identity;
    }
    let det = t.a * t.d - t.b * t.c;
    let half_tr = 0.5 * (t.a + t.d);
    let root = Complex64::new(half_tr * half_tr - det, 0.0).sqrt();
    let l1 = Complex64::new(half_tr, 0.0) + root;
    let l2 = Complex64::new(half_tr, 0.0) - root;
    if (det.abs() - 1.0).abs() > 1e-9 {
        return TransformKind::ContractingOrExpanding;
    }
    if det < 0.0 {
        // Real eigenvalues λ and −1/λ; an involution iff they are ±1.
        return if (l1.norm() - 1.0).abs() <= 1e-9 && (l2.norm() - 1.0).abs() <= 1e-9 {
            TransformKind::ReflectionConjugate
        } else {
            TransformKind::Hyperbolic
        };
    }
    if l1.im.abs() > 1e-12 {
        let turns = l1.arg().abs() / std::f64::consts::TAU;
        return (1..=360u32)
            .find(|&n| {
                let x = n as f64 * turns;
                (x - x.round()).abs() <= 1e-9
            })
            .map(TransformKind::EllipticFiniteOrder)
            .unwrap_or(TransformKind::EllipticInfinite);
    }
    if (l1 - l2).norm() <= 1e-6 {
        let minus_identity = (t.a + 1.0).abs().max(t.b.abs()).max(t.c.abs()).max((t.d + 1.0).abs()) <= eps;
        return if minus_identity {
            TransformKind::EllipticFiniteOrder(2)
        } else {
            TransformKind::Parabolic
        };
    }
    TransformKind::Hyperbolic
}

fn classification() -> Outcome {
    let mut battery = Vec::new();
    let vals = [-2.0, -1.0, 0.0, 1.0, 2.0];
    for a in vals {
        for b in vals {
            for c in vals {
                for d in vals {
                    if a * d - b * c != 0.0 {
                        battery.push(LinearMap2::new(a, b, c, d));
                    }
                }
            }
        }
    }
    let bases = [
        LinearMap2::IDENTITY,
        LinearMap2::new(1.0, 0.5, 0.0, 1.0),
        LinearMap2::new(2.0, 0.0, 0.3, 0.5),
        LinearMap2::new(1.0, -0.4, 0.7, 1.5),
    ];
    for deg in [0.0, 15.0, 30.0, 36.0, 45.0, 60.0, 72.0, 90.0, 120.0, 135.0, 150.0, 180.0, 37.0, 57.2957795130823] {
        for b in &bases {
            battery.push(LinearMap2::rotation_degrees(deg).conjugate_by(b)?);
            battery.push(LinearMap2::reflection_degrees(deg).conjugate_by(b)?);
        }
    }
    for s in [0.5, 0.8, 1.25, 3.0] {
        battery.push(LinearMap2::scale(s));
        battery.push(LinearMap2::diag(s, 1.0 / s));
        battery.push(LinearMap2::shear(s));
        battery.push(LinearMap2::shear(s).compose(&LinearMap2::scale(-1.0)));
        battery.push(LinearMap2::rotation_degrees(40.0).compose(&LinearMap2::scale(s)));
        battery.push(LinearMap2::diag(s, -1.0 / s));
    }
    let mut branches = std::collections::BTreeSet::new();
    let mut disagreements = Vec::new();
    for t in &battery {
        let got = classify(t, &ClassifyOptions::default()).kind;
        let want = oracle_kind(t);
        let name = match want {
            TransformKind::EllipticFiniteOrder(_) => "elliptic_finite_order".to_string(),
            k => k.to_string(),
        };
        branches.insert(name);
        let yes = want.is_elliptic() || matches!(want, TransformKind::Identity | TransformKind::ReflectionConjugate);
        let verdict_ok = (alignment_admits_invariance(t) == InvarianceVerdict::YesWithInvariantFeatures) == yes;
        if got != want || !verdict_ok {
            disagreements.push(format!("{t}: classify {got}, oracle {want}"));
        }
    }
    for d in disagreements.iter().take(5) {
        println!("    {d}");
    }
    Ok((
        disagreements.is_empty() && battery.len() >= 200 && branches.len() == 7,
        format!(
            "{} matrices, {} branches covered, {} disagreements",
            battery.len(),
            branches.len(),
            disagreements.len()
        ),
    ))
}

fn generator_laws() -> Outcome {
    let h = 0.05;
    let geom = Geometry::new(1.2, h)?;
    let f = Scene::Sum(vec![
        Scene::bump(Vec2::new(0.2, 0.1), 0.4, 1.0),
        Scene::bump(Vec2::new(-0.3, -0.2), 0.3, -0.6),
    ])
    .render(geom);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let models = random_models(h, 9)?;
    let ops: Vec<OperatorHandle> = vec![
        Arc::new(IdentityOp),
        Arc::new(ConvolutionOp(radial_filter(|r| Profile::Bump { radius: 0.3 }.eval(r), h, 0.3)?)),
        Arc::new(ConvolutionOp(polynomial_bump(h, 0.25, &mut rng))),
        Arc::new(CnnChannel::new(Arc::new(models[1].clone()), 2, 0)?),
        Arc::new(CnnChannel::new(Arc::new(models[2].clone()), 3, 1)?),
    ];
    let mut worst_round_trip: f64 = 0.0;
    for op in &ops {
        let direct = op.apply(&f)?;
        let inner = op.clone();
        let rebuilt = operator_from_generator(move |g| inner.generator(g), "rebuilt");
        let again = rebuilt.apply(&f)?;
        let r = op.declared_radius().unwrap_or(0.0);
        let keep = |p: Vec2| p.x.abs().max(p.y.abs()) <= geom.extent() - r - h;
        worst_round_trip = worst_round_trip.max(direct.distance_where(&again, Norm::Sup, keep)?);
        worst_round_trip = worst_round_trip.max((rebuilt.generator(&f)? - op.generator(&f)?).abs());
    }

    // Conjugating by a rotation gives the generator μ∘T, which must match the
    // generator of the model with transformed filters.
    let h = 0.02;
    let geom = Geometry::new(1.2, h)?;
    let t = LinearMap2::rotation_degrees(30.0);
    let lam = FilterShape::Offset {
        center: Vec2::new(0.05, 0.02),
        radius: 0.2,
        tilt: 1.5,
    }
    .render(h)?;
    let model = CnnModel::new(vec![
        ConvLayer::new(vec![vec![lam.clone(), polynomial_bump(h, 0.2, &mut rng)]], vec![0.0, -0.01], Nonlinearity::Relu)?,
        ConvLayer::new(vec![vec![polynomial_bump(h, 0.2, &mut rng)], vec![lam.clone()]], vec![0.0], Nonlinearity::Identity)?,
    ])?;
    let natural = model.map_kernels(|k| transform_filter(k, &t))?;
    let pairs: Vec<(OperatorHandle, OperatorHandle)> = vec![
        (Arc::new(ConvolutionOp(lam.clone())), Arc::new(ConvolutionOp(transform_filter(&lam, &t)?))),
        (
            Arc::new(CnnChannel::new(Arc::new(model), 2, 0)?),
            Arc::new(CnnChannel::new(Arc::new(natural), 2, 0)?),
        ),
    ];
    let bumps: Vec<Grid> = [(0.0, 0.0, 0.3), (0.15, -0.1, 0.25), (-0.2, 0.2, 0.35), (0.3, 0.05, 0.2)]
        .iter()
        .map(|&(x, y, r)| make_bump(Vec2::new(x, y), r, 1.0, geom))
        .collect::<Result<_, _>>()?;
    let mut worst_conj: f64 = 0.0;
    for (op, transformed) in &pairs {
        let conj = Conjugated::new(op.clone(), t)?;
        let mu0 = op.generator(&Grid::zeros(geom))?;
        let mut scale: f64 = 0.0;
        let mut diff: f64 = 0.0;
        for b in &bumps {
            let via_conj = conj.generator(b)?;
            let via_filters = transformed.generator(b)?;
            scale = scale.max((op.generator(b)? - mu0).abs());
            diff = diff.max((via_conj - via_filters).abs());
        }
        worst_conj = worst_conj.max(diff / scale);
    }
    Ok((
        worst_round_trip == 0.0 && worst_conj <= TOL_FACTOR * h,
        format!(
            "round trip over 5 operators: max deviation {worst_round_trip:e}; rot 30 conjugate generator: relative residual {worst_conj:.2e} (tol {})",
            TOL_FACTOR * h
        ),
    ))
}

fn semilocality() -> Outcome {
    let h = 0.05;
    let geom = Geometry::new(1.5, h)?;
    let probes = vec![
        make_bump(Vec2::new(0.1, 0.0), 0.5, 1.0, geom)?,
        standard_corpus(0.8).pop().unwrap().1.render(geom),
    ];
    let radii = |top: f64| -> Vec<f64> {
        (0..)
            .map(|i| i as f64 * h)
            .take_while(|&r| r <= top && r < geom.extent())
            .collect()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, model) in random_models(h, 13)?.into_iter().enumerate() {
        let depth = model.depth();
        let bound = model.receptive_radius(depth)?;
        let model = Arc::new(model);
        let op: OperatorHandle = Arc::new(CnnChannel::new(model.clone(), depth, 0)?);
        let est = estimate_semilocal_radius(op.as_ref(), &probes, &radii(bound + 4.0 * h), ROUNDOFF, 3, 17 + i as u64)?;
        let pass = est.radius <= bound + 2.0 * h && est.radius > 0.0;
        ok &= pass;
        parts.push(format!("model {}: {:.2} <= {:.2}", i + 1, est.radius, bound));
        if i == 1 {
            for (name, t) in [
                ("diag(0.5,1)", LinearMap2::diag(0.5, 1.0)),
                ("rot 30", LinearMap2::rotation_degrees(30.0)),
                ("shear 0.5", LinearMap2::shear(0.5)),
            ] {
                let conj = Conjugated::new(op.clone(), t)?;
                let scaled = t.inverse()?.operator_norm() * bound;
                let est = estimate_semilocal_radius(&conj, &probes, &radii(scaled + 4.0 * h), ROUNDOFF, 3, 5)?;
                let pass = est.radius <= scaled + 2.0 * h;
                ok &= pass;
                parts.push(format!("conj {name}: {:.2} <= {:.2}", est.radius, scaled));
            }
        }
    }
    Ok((ok, parts.join("; ")))
}

fn contraction() -> Outcome {
    let h = 0.02;
    let geom = Geometry::new(1.2, h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let radial_kernel = |rng: &mut ChaCha8Rng| -> Result<Filter, Error> {
        let r = rng.gen_range(0.12..0.2);
        if rng.gen_bool(0.5) {
            radial_filter(|s| Profile::Bump { radius: r }.eval(s), h, r)
        } else {
            let c = r * rng.gen_range(0.4..0.6);
            radial_filter(|s| Profile::Ring { radius: c, width: 0.9 * c.min(r - c) }.eval(s), h, r)
        }
    };
    let mut kernels = Vec::new();
    for _ in 0..4 {
        kernels.push(radial_kernel(&mut rng)?);
    }
    let b = [rng.gen_range(-0.01..0.0), rng.gen_range(-0.01..0.0)];
    let model = Arc::new(CnnModel::new(vec![
        ConvLayer::new(vec![vec![kernels[0].clone(), kernels[1].clone()]], b.to_vec(), Nonlinearity::Relu)?,
        ConvLayer::new(vec![vec![kernels[2].clone()], vec![kernels[3].clone()]], vec![0.01], Nonlinearity::Sigmoid(1.0))?,
    ])?);
    let op = CnnChannel::new(model, 2, 0)?;

    let ring = Grid::from_fn(geom, |p| Profile::Ring { radius: 0.75, width: 0.2 }.eval(p.norm()));
    let offset = make_bump(Vec2::new(0.75, 0.0), 0.2, 1.0, geom)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, f, t) in [
        ("annulus / scale 2", ring, LinearMap2::scale(2.0)),
        ("offset bump / diag(2,1)", offset, LinearMap2::diag(2.0, 1.0)),
    ] {
        let trace = contraction_sequence(&f, &t, 1.0, 5, Some(&op))?;
        let from = trace.vanishes_from();
        let mu_settled = trace
            .steps
            .iter()
            .filter(|s| from.is_some_and(|n| s.n >= n))
            .all(|s| s.mu == trace.mu_zero);
        let pass = from.is_some_and(|n| n <= 3) && mu_settled && trace.steps[0].support_measure > 0.0;
        ok &= pass;
        parts.push(format!("{name}: support empty from n = {from:?}"));
    }

    let corpus: Vec<Grid> = standard_corpus(0.5)
        .iter()
        .take(15)
        .map(|(_, s)| s.render(geom))
        .collect();
    let nonconstant = is_nonconstant(&op, &corpus, 1e-9)?.is_some();
    let dil = generator_invariance_residual(&op, &LinearMap2::diag(2.0, 2.0), &corpus)?.max_residual;
    let rot = generator_invariance_residual(&op, &LinearMap2::rotation_degrees(30.0), &corpus)?.max_residual;
    ok &= nonconstant && dil > 10.0 * rot;
    parts.push(format!("invariance residual diag(2,2) {dil:.3e} vs rot 30 {rot:.3e}"));
    Ok((ok, parts.join("; ")))
}

fn end_to_end() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/dichotomy.json");
    let mut reports = Vec::new();
    let mut codes = Vec::new();
    for jobs in ["1", "2"] {
        let dir = tempfile::tempdir()?;
        let out = Command::new(env!("CARGO_BIN_EXE_equiaudit"))
            .current_dir(dir.path())
            .env_remove("EQUIAUDIT_SEED")
            .args(["audit", "--config", config.to_str().unwrap(), "--deterministic", "--jobs", jobs])
            .output()?;
        codes.push(out.status.code());
        reports.push(std::fs::read(dir.path().join("out/dichotomy/report.json"))?);
    }
    let report: serde_json::Value = serde_json::from_slice(&reports[0])?;
    let observed: Vec<String> = report["transforms"]
        .as_array()
        .map(|ts| ts.iter().map(|t| format!("{} {}", t["spec"].as_str().unwrap_or("?"), t["observed"].as_str().unwrap_or("?"))).collect())
        .unwrap_or_default();
    let identical = reports[0] == reports[1];
    let ok = codes.iter().all(|c| *c == Some(0))
        && identical
        && observed == ["rot:90 aligned_within_tol", "shear:1 misaligned", "scale:2 misaligned"];
    Ok((
        ok,
        format!("exit codes {codes:?}, byte-identical reports: {identical}, verdicts [{}]", observed.join(", ")),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("translation covariance", translation_covariance),
        ("naturality under refinement", naturality),
        ("displaced-bump counterexample", norot),
        ("filter recovery by mollifiers", mollifier_recovery),
        ("filter fixed-point dichotomy", fixed_points),
        ("classification against eigenvalue oracle", classification),
        ("generator laws", generator_laws),
        ("semi-locality radii", semilocality),
        ("contraction sequences", contraction),
        ("end-to-end audit dichotomy", end_to_end),
    ];
    let mut failed = 0;
    let total = Instant::now();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<42} {} ({:.1}s) {}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
