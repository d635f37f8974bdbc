//! Shared fixtures for the kernel benchmarks.

use fxdiff_core::{
    DegreeConfig, Differentiator, GainLadder, Injection, InternalGains, LyapunovFunction,
};

/// Third-order injection with `d0 = -1`, `dinf = 1/5` and unit internal gains.
pub fn reference_injection() -> Injection {
    Injection::new(
        DegreeConfig::new(3, -1.0, 0.2).unwrap(),
        InternalGains::ones(3),
    )
    .unwrap()
}

pub fn reference_ladder() -> GainLadder {
    GainLadder::from_k(vec![3.0, 1.5 * 3f64.sqrt(), 1.1]).unwrap()
}

pub fn reference_differentiator() -> Differentiator {
    Differentiator::new(reference_injection(), reference_ladder()).unwrap()
}

pub fn reference_lyapunov() -> LyapunovFunction {
    LyapunovFunction::with_defaults(reference_injection()).unwrap()
}

/// Deterministic points spread over six decades with alternating signs.
pub fn spread(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| {
            let e = -3.0 + 6.0 * k as f64 / count as f64;
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            s * 10f64.powf(e)
        })
        .collect()
}
