use fxdiff_core::{
    integrate, synthesize_gains, DegreeConfig, Differentiator, ErrorState, GainLadder, Injection,
    IntegrationSettings, InternalGains, LyapunovFunction, LyapunovParams, RhsKind, SamplingPlan,
    SignalSpec, SynthesisSettings,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn injection(order: usize, d0: f64, dinf: f64) -> Injection {
    Injection::new(
        DegreeConfig::new(order, d0, dinf).unwrap(),
        InternalGains::ones(order),
    )
    .unwrap()
}

fn reference() -> LyapunovFunction {
    LyapunovFunction::with_defaults(injection(3, -1.0, 0.2)).unwrap()
}

fn continuous() -> LyapunovFunction {
    LyapunovFunction::with_defaults(injection(3, -0.2, 0.25)).unwrap()
}

fn signed_log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = 10f64.powf(rng.random_range(lo..hi));
    if rng.random() {
        m
    } else {
        -m
    }
}

/// Central difference of `f` at `x` with a relative step, plus its rounding scale.
fn central(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
    let h = 1e-6 * x.abs().max(1e-3);
    let (fp, fm) = (f(x + h), f(x - h));
    (
        (fp - fm) / (2.0 * h),
        f64::EPSILON * (fp.abs() + fm.abs()) / h,
    )
}

fn gradients_match(lf: &LyapunovFunction, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = lf.order();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let i = rng.random_range(1..=n);
        let zi = signed_log_uniform(&mut rng, -2.0, 2.0);
        let next = if i < n {
            signed_log_uniform(&mut rng, -2.0, 2.0)
        } else {
            0.0
        };

        let sigma = lf.sigma(i, zi, next).unwrap();
        let (fd, noise) = central(|x| lf.z_term(i, x, next).unwrap(), zi);
        let err = (sigma - fd).abs();
        // Near the manifold both sides vanish; compare absolutely there.
        assert!(
            err <= 1e-4 * sigma.abs() + 1e-8 + 100.0 * noise,
            "sigma_{i}({zi:e}, {next:e}) = {sigma:e}, finite difference {fd:e}"
        );
        worst = worst.max(err / sigma.abs().max(1e-300));

        if i < n {
            let s = lf.s(i, zi, next).unwrap();
            let (fd, noise) = central(|x| lf.z_term(i, zi, x).unwrap(), next);
            assert!(
                (s - fd).abs() <= 1e-4 * s.abs() + 1e-8 + 100.0 * noise,
                "s_{i}({zi:e}, {next:e}) = {s:e}, finite difference {fd:e}"
            );
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn sigma_and_s_match_finite_differences() {
    gradients_match(&reference(), 1);
    gradients_match(&continuous(), 2);
}

#[test]
fn gradient_assembles_the_partials() {
    let lf = reference();
    let z = [0.4, -1.3, 2.2];
    let g = lf.gradient(&z).unwrap();
    for (k, gk) in g.iter().enumerate() {
        let (fd, _) = central(
            |x| {
                let mut w = z;
                w[k] = x;
                lf.value(&w).unwrap()
            },
            z[k],
        );
        assert!(
            (gk - fd).abs() <= 1e-6 * gk.abs(),
            "component {k}: {gk} vs {fd}"
        );
    }
}

#[test]
fn z_terms_are_nonnegative_and_vanish_only_on_the_manifold() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for lf in [reference(), continuous()] {
        let inj = lf.injection().clone();
        let n = lf.order();
        for _ in 0..50_000 {
            let i = rng.random_range(1..=n);
            let zi = signed_log_uniform(&mut rng, -6.0, 6.0);
            let next = if i < n {
                signed_log_uniform(&mut rng, -6.0, 6.0)
            } else {
                0.0
            };
            let z = lf.z_term(i, zi, next).unwrap();
            let xi = if i < n {
                inj.varphi_inverse(i, next).unwrap()
            } else {
                0.0
            };
            assert!(z >= 0.0, "Z_{i}({zi:e}, {next:e}) = {z:e}");
            if (zi - xi).abs() > 1e-6 * xi.abs().max(zi.abs()) {
                assert!(
                    z > 0.0,
                    "Z_{i} vanished off the manifold at ({zi:e}, {next:e})"
                );
            }
            // On the manifold the term cancels to zero up to rounding of its summands.
            let on = lf.z_term(i, xi, next).unwrap();
            let scale = lf.z_term(i, 2.0 * xi, next).unwrap();
            assert!(
                on.abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE),
                "Z_{i} on manifold: {on:e} vs {scale:e}"
            );
        }
    }
}

#[test]
fn v_is_positive_definite_across_twelve_decades() {
    let plan = SamplingPlan {
        directions: 500,
        log10_radii: (-12..=12).map(|k| k as f64 * 0.5).collect(),
    };
    for lf in [reference(), continuous()] {
        let w = lf.injection().weights().clone();
        assert_eq!(lf.value(&vec![0.0; lf.order()]).unwrap(), 0.0);
        for p in plan.points(&[w.state_r0(), w.state_rinf()]) {
            let v = lf.value(&p.z).unwrap();
            assert!(v > 0.0 && v.is_finite(), "V({:?}) = {v:e}", p.z);
        }
    }
}

#[test]
fn v_grows_without_bound_along_rays() {
    let lf = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let dir: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..=12)
            .map(|k| {
                let c = 10f64.powi(k - 6);
                lf.value(&dir.iter().map(|d| c * d).collect::<Vec<_>>())
                    .unwrap()
            })
            .collect();
        let inner = values[..12].iter().copied().fold(0.0, f64::max);
        assert!(values[12] > inner, "ray {dir:?}: {values:?}");
        assert!(values[12] > 1e6 * values[6], "ray {dir:?}: {values:?}");
    }
}

fn synthesized_second_order(delta: f64) -> (LyapunovFunction, GainLadder) {
    let inj = injection(2, -1.0, 0.2);
    let params = LyapunovParams::with_defaults(inj.weights());
    let report = synthesize_gains(&inj, delta, &params, &SynthesisSettings::default()).unwrap();
    (LyapunovFunction::new(inj, params).unwrap(), report.ladder)
}

/// Affine signal: the last derivative vanishes, so the error system is unperturbed.
fn affine() -> SignalSpec {
    SignalSpec::new(
        fxdiff_core::BaseSignal::Polynomial {
            coefficients: vec![0.3, -1.2],
        },
        0.0,
    )
}

#[test]
fn v_decreases_along_certified_trajectories() {
    let (lf, ladder) = synthesized_second_order(1.0);
    let cert = lf
        .estimate_eta(&ladder, 0.0, &fxdiff_core::CertifySettings::default())
        .unwrap();
    let (a, b) = lf.decay_exponents();
    let diff = Differentiator::new(lf.injection().clone(), ladder.clone()).unwrap();
    let settings = IntegrationSettings::new(1e-5, 0.5, 1);
    for e0 in [[2.0, -3.0], [-0.5, 40.0], [0.01, 0.2]] {
        let z0 = ErrorState::from_e(&e0, &ladder).z;
        let traj = integrate(&diff, RhsKind::Error, &z0, &affine(), &settings, Some(&lf)).unwrap();
        for w in traj.samples.windows(2) {
            let (v0, v1) = (w[0].v.unwrap(), w[1].v.unwrap());
            if v0 < 1e-8 {
                break;
            }
            let slope = (v1 - v0) / settings.dt;
            let w_star = lf.w_star(&w[0].state, &ladder, 0.0).unwrap();
            let tol = 1e-2 * slope.abs().max(1.0);
            assert!(
                slope <= w_star + tol,
                "t = {}: slope {slope:e}, W* {w_star:e}",
                w[0].t
            );
            let decay = -cert.eta0 * v0.powf(a) - cert.etainf * v0.powf(b);
            assert!(
                slope <= decay + tol,
                "t = {}: slope {slope:e}, decay bound {decay:e}",
                w[0].t
            );
            assert!(v1 <= v0, "V increased at t = {}: {v0:e} -> {v1:e}", w[0].t);
        }
    }
}
