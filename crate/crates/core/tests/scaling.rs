use fxdiff_core::{
    scale_gains, simulate_from_error, DegreeConfig, Differentiator, GainLadder, Injection,
    IntegrationSettings, InternalGains, ScalingParams, SignalSpec,
};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn base() -> (DegreeConfig, InternalGains, GainLadder) {
    (
        DegreeConfig::new(3, -1.0, 0.2).unwrap(),
        InternalGains::new(vec![1.0, 0.8, 1.3], vec![0.6, 1.0, 2.0]).unwrap(),
        GainLadder::from_k(vec![3.0, 1.5 * 3f64.sqrt(), 1.1]).unwrap(),
    )
}

fn assert_close(lhs: &(InternalGains, GainLadder), rhs: &(InternalGains, GainLadder), tol: f64) {
    let pairs = lhs
        .0
        .kappa
        .iter()
        .zip(&rhs.0.kappa)
        .chain(lhs.0.theta.iter().zip(&rhs.0.theta))
        .chain(lhs.1.k.iter().zip(&rhs.1.k))
        .chain(lhs.1.ktilde.iter().zip(&rhs.1.ktilde));
    for (a, b) in pairs {
        assert!(rel(*a, *b) <= tol, "{a} vs {b}");
    }
}

proptest! {
    #[test]
    fn scaling_composes_as_a_group(
        a1 in 0.1f64..10.0, l1 in 0.1f64..10.0, a2 in 0.1f64..10.0, l2 in 0.1f64..10.0,
        d0 in -1.0f64..0.0, dinf in 0.0f64..0.45,
    ) {
        let (_, gains, ladder) = base();
        let deg = DegreeConfig::new(3, d0, dinf).unwrap();
        let s1 = ScalingParams::new(a1, l1).unwrap();
        let s2 = ScalingParams::new(a2, l2).unwrap();
        let once = scale_gains(&deg, &gains, &ladder, s1).unwrap();
        let twice = scale_gains(&deg, &once.0, &once.1, s2).unwrap();
        let composed = scale_gains(&deg, &gains, &ladder, ScalingParams::new(a1 * a2, l1 * l2).unwrap()).unwrap();
        assert_close(&twice, &composed, 1e-12);

        let back = scale_gains(&deg, &once.0, &once.1, ScalingParams::new(1.0 / a1, 1.0 / l1).unwrap()).unwrap();
        assert_close(&back, &(gains, ladder), 1e-12);
    }
}

#[test]
fn identity_leaves_the_design_unchanged() {
    let (deg, gains, ladder) = base();
    let same = scale_gains(&deg, &gains, &ladder, ScalingParams::default()).unwrap();
    assert_eq!(same, (gains, ladder));
}

/// Runs the original design on `[0, l t_final]` and the scaled one on `[0, t_final]`
/// at the same step, returning the largest per-component deviation relative to the
/// component's peak.
fn trajectory_deviation(s: ScalingParams, e0: &[f64], t_final: f64, dt: f64) -> f64 {
    let (deg, gains, ladder) = base();
    let n = deg.order;
    let signal = SignalSpec::reference_example();
    let original =
        Differentiator::new(Injection::new(deg, gains.clone()).unwrap(), ladder.clone()).unwrap();
    let (sg, sl) = scale_gains(&deg, &gains, &ladder, s).unwrap();
    let scaled = Differentiator::new(Injection::new(deg, sg).unwrap(), sl).unwrap();

    let ratio = s.l.round() as usize;
    assert_eq!(
        ratio as f64, s.l,
        "time ratio must be an integer so that samples align"
    );
    let orig = simulate_from_error(
        &original,
        e0,
        &signal,
        &IntegrationSettings::new(dt, s.l * t_final, ratio),
        None,
    )
    .unwrap();
    let scaled_signal = signal.rescaled(s.alpha / s.l.powi(n as i32), s.l, n);
    let mapped_e0 = s.map_error(e0);
    let run = simulate_from_error(
        &scaled,
        &mapped_e0,
        &scaled_signal,
        &IntegrationSettings::new(dt, t_final, 1),
        None,
    )
    .unwrap();
    assert_eq!(orig.samples.len(), run.samples.len());

    let factor: Vec<f64> = (0..n).map(|i| s.alpha / s.l.powi((n - i) as i32)).collect();
    let mut worst = 0.0f64;
    for (i, f) in factor.iter().enumerate() {
        let peak = orig
            .samples
            .iter()
            .map(|p| (f * p.e[i]).abs())
            .fold(0.0, f64::max);
        for (a, b) in orig.samples.iter().zip(&run.samples) {
            worst = worst.max((f * a.e[i] - b.e[i]).abs() / peak);
        }
    }
    worst
}

#[test]
fn scaled_design_reproduces_the_time_scaled_trajectory() {
    for s in [
        ScalingParams::new(1.0, 2.0).unwrap(),
        ScalingParams::new(3.0, 3.0).unwrap(),
        ScalingParams::new(0.5, 1.0).unwrap(),
    ] {
        let dev = trajectory_deviation(s, &[1.0, -5.0, 1.0], 2.0, 1e-5);
        assert!(
            dev <= 1e-3,
            "alpha = {}, L = {}: relative deviation {dev:e}",
            s.alpha,
            s.l
        );
    }
}
