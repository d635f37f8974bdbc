//! Base signals with analytic derivatives and bounded measurement noise.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One term `amplitude * sin(frequency * t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// The base signal `f0` to be differentiated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseSignal {
    /// `sum_j coefficients[j] t^j`.
    Polynomial { coefficients: Vec<f64> },
    /// Sum of sinusoids.
    SinusoidMix { components: Vec<Sinusoid> },
    /// `offset + sum_k cosine[k-1] cos(k w t) + sine[k-1] sin(k w t)`.
    CustomHarmonic {
        fundamental: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        cosine: Vec<f64>,
        #[serde(default)]
        sine: Vec<f64>,
    },
}

impl BaseSignal {
    /// Exact `k`-th time derivative at `t`.
    pub fn derivative(&self, t: f64, k: usize) -> f64 {
        match self {
            BaseSignal::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(k)
                .map(|(j, &c)| {
                    let falling: f64 = ((j - k + 1)..=j).map(|m| m as f64).product();
                    c * falling * t.powi((j - k) as i32)
                })
                .sum(),
            BaseSignal::SinusoidMix { components } => components
                .iter()
                .map(|c| {
                    c.amplitude
                        * c.frequency.powi(k as i32)
                        * (c.frequency * t + c.phase + k as f64 * FRAC_PI_2).sin()
                })
                .sum(),
            BaseSignal::CustomHarmonic {
                fundamental,
                offset,
                cosine,
                sine,
            } => {
                let mut acc = if k == 0 { *offset } else { 0.0 };
                let shift = k as f64 * FRAC_PI_2;
                for (m, a) in cosine.iter().enumerate() {
                    let w = (m + 1) as f64 * fundamental;
                    acc += a * w.powi(k as i32) * (w * t + shift).cos();
                }
                for (m, b) in sine.iter().enumerate() {
                    let w = (m + 1) as f64 * fundamental;
                    acc += b * w.powi(k as i32) * (w * t + shift).sin();
                }
                acc
            }
        }
    }

    /// Maps `f0(t)` to `amplitude * f0(time_factor * t)`.
    pub fn rescaled(&self, amplitude: f64, time_factor: f64) -> Self {
        match self {
            BaseSignal::Polynomial { coefficients } => BaseSignal::Polynomial {
                coefficients: coefficients
                    .iter()
                    .enumerate()
                    .map(|(j, c)| amplitude * c * time_factor.powi(j as i32))
                    .collect(),
            },
            BaseSignal::SinusoidMix { components } => BaseSignal::SinusoidMix {
                components: components
                    .iter()
                    .map(|c| Sinusoid {
                        amplitude: amplitude * c.amplitude,
                        frequency: time_factor * c.frequency,
                        phase: c.phase,
                    })
                    .collect(),
            },
            BaseSignal::CustomHarmonic {
                fundamental,
                offset,
                cosine,
                sine,
            } => BaseSignal::CustomHarmonic {
                fundamental: fundamental * time_factor,
                offset: amplitude * offset,
                cosine: cosine.iter().map(|a| amplitude * a).collect(),
                sine: sine.iter().map(|b| amplitude * b).collect(),
            },
        }
    }

    fn polynomial_degree(&self) -> Option<usize> {
        match self {
            BaseSignal::Polynomial { coefficients } => {
                Some(coefficients.iter().rposition(|&c| c != 0.0).unwrap_or(0))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    UniformBounded,
    Sinusoidal,
}

/// Additive measurement noise with `|nu(t)| <= epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Angular frequency of the sinusoidal kind (rad/s).
    #[serde(default = "default_noise_frequency")]
    pub frequency: f64,
    /// When set, the amplitude is multiplied by `decay_factor` every `decay_period` seconds.
    #[serde(default)]
    pub decay_period: Option<f64>,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
}

fn default_decay_factor() -> f64 {
    1.0
}

fn default_noise_frequency() -> f64 {
    100.0
}

impl NoiseSpec {
    pub fn uniform(epsilon: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::UniformBounded,
            epsilon,
            seed,
            frequency: default_noise_frequency(),
            decay_period: None,
            decay_factor: 1.0,
        }
    }

    pub fn sinusoidal(epsilon: f64, frequency: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Sinusoidal,
            epsilon,
            seed,
            frequency,
            decay_period: None,
            decay_factor: 1.0,
        }
    }

    /// Step-decaying amplitude: `epsilon * factor^floor(t / period)`.
    pub fn with_step_decay(mut self, period: f64, factor: f64) -> Self {
        self.decay_period = Some(period);
        self.decay_factor = factor;
        self
    }

    /// Amplitude bound in effect at time `t`.
    pub fn amplitude_at(&self, t: f64) -> f64 {
        let eps = self.epsilon.abs();
        match self.decay_period {
            Some(period) if period > 0.0 => {
                eps * self.decay_factor.powi((t / period).floor().max(0.0) as i32)
            }
            _ => eps,
        }
    }

    /// Deterministic in `(seed, t)`; never exceeds `epsilon` in magnitude.
    pub fn sample(&self, t: f64) -> f64 {
        let eps = self.amplitude_at(t);
        if eps == 0.0 {
            return 0.0;
        }
        let v = match self.kind {
            NoiseKind::UniformBounded => {
                let key = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t.to_bits();
                let mut rng = ChaCha8Rng::seed_from_u64(key);
                rng.random_range(-eps..=eps)
            }
            NoiseKind::Sinusoidal => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let phase = rng.random_range(0.0..2.0 * PI);
                eps * (self.frequency * t + phase).sin()
            }
        };
        v.clamp(-eps, eps)
    }
}

/// Membership of a signal in the polynomial or the n-Lipschitz class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalClass {
    /// `f^{(n)} == 0`.
    Polynomial,
    /// `|f^{(n)}| <= Delta`.
    Lipschitz,
}

/// Number of grid points used to check the declared bound on `|f0^{(n)}|`.
pub const DELTA_GRID_POINTS: usize = 100_000;
/// Inflation applied to the grid maximum when a bound is estimated.
pub const DELTA_INFLATION: f64 = 1.01;

/// A base signal, the declared bound `delta` on `|f0^{(n)}|`, and optional noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub base: BaseSignal,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

impl SignalSpec {
    pub fn new(base: BaseSignal, delta: f64) -> Self {
        Self {
            base,
            delta,
            noise: None,
        }
    }

    /// `0.5 sin(t/2) + 0.5 cos(t)` with the bound `5/8` on its third derivative.
    pub fn reference_example() -> Self {
        Self::new(
            BaseSignal::SinusoidMix {
                components: vec![
                    Sinusoid {
                        amplitude: 0.5,
                        frequency: 0.5,
                        phase: 0.0,
                    },
                    Sinusoid {
                        amplitude: 0.5,
                        frequency: 1.0,
                        phase: FRAC_PI_2,
                    },
                ],
            },
            5.0 / 8.0,
        )
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = Some(noise);
        self
    }

    /// `f0^{(k)}(t)`, rejecting `k > order`.
    pub fn eval(&self, t: f64, k: usize, order: usize) -> Result<f64> {
        if k > order {
            return Err(Error::Signal(format!(
                "derivative order {k} exceeds differentiator order {order}"
            )));
        }
        Ok(self.base.derivative(t, k))
    }

    /// Fills `out[k] = f0^{(k)}(t)` for `k = 0..out.len()`.
    pub fn derivatives(&self, t: f64, out: &mut [f64]) {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.base.derivative(t, k);
        }
    }

    pub fn noise_at(&self, t: f64) -> f64 {
        self.noise.as_ref().map_or(0.0, |nz| nz.sample(t))
    }

    /// The measured signal `f(t) = f0(t) + nu(t)`.
    pub fn measured(&self, t: f64) -> f64 {
        self.base.derivative(t, 0) + self.noise_at(t)
    }

    /// `delta(t) = -f0^{(n)}(t)`.
    pub fn perturbation(&self, t: f64, order: usize) -> f64 {
        -self.base.derivative(t, order)
    }

    pub fn class(&self, order: usize) -> SignalClass {
        match self.base.polynomial_degree() {
            Some(deg) if deg < order => SignalClass::Polynomial,
            _ => SignalClass::Lipschitz,
        }
    }

    fn grid_max(&self, order: usize, horizon: f64) -> f64 {
        let m = DELTA_GRID_POINTS;
        (0..m)
            .map(|j| {
                let t = horizon * j as f64 / (m - 1) as f64;
                self.base.derivative(t, order).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Checks `max |f0^{(n)}| <= delta` on a dense grid over `[0, horizon]`.
    pub fn check_delta(&self, order: usize, horizon: f64) -> Result<()> {
        let observed = self.grid_max(order, horizon);
        if observed > self.delta {
            return Err(Error::Signal(format!(
                "declared delta = {} is below the observed max |f0^({order})| = {observed}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Grid maximum of `|f0^{(n)}|`, inflated by 1%.
    pub fn estimate_delta(&self, order: usize, horizon: f64) -> f64 {
        DELTA_INFLATION * self.grid_max(order, horizon)
    }

    /// `f~0(t) = amplitude * f0(time_factor * t)` with the bound rescaled accordingly.
    pub fn rescaled(&self, amplitude: f64, time_factor: f64, order: usize) -> Self {
        Self {
            base: self.base.rescaled(amplitude, time_factor),
            delta: self.delta * amplitude.abs() * time_factor.abs().powi(order as i32),
            noise: self.noise.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_signal_values() {
        let s = SignalSpec::reference_example();
        assert_relative_eq!(s.eval(0.0, 0, 3).unwrap(), 0.5, epsilon = 1e-15);
        // f0''' = -cos(t/2)/16 + sin(t)/2
        let t = 0.3;
        assert_relative_eq!(
            s.eval(t, 3, 3).unwrap(),
            -(t / 2.0).cos() / 16.0 + t.sin() / 2.0,
            epsilon = 1e-14
        );
        assert!(s.eval(0.0, 4, 3).is_err());
    }

    #[test]
    fn reference_bound_holds() {
        let s = SignalSpec::reference_example();
        s.check_delta(3, 4.0 * PI * 10.0).unwrap();
        let est = s.estimate_delta(3, 4.0 * PI * 10.0);
        assert!((0.54 * 1.01..=0.5625 * 1.01 + 1e-9).contains(&est), "{est}");
    }

    #[test]
    fn step_decay_shrinks_the_bound() {
        let nz = NoiseSpec::uniform(1e-2, 3).with_step_decay(2.0, 0.1);
        assert_eq!(nz.amplitude_at(1.9), 1e-2);
        assert!((nz.amplitude_at(4.5) - 1e-4).abs() < 1e-18);
        for k in 0..1000 {
            let t = 4.0 + k as f64 * 1e-3;
            assert!(nz.sample(t).abs() <= nz.amplitude_at(t));
        }
    }

    #[test]
    fn undeclared_bound_is_rejected() {
        let mut s = SignalSpec::reference_example();
        s.delta = 0.5;
        assert!(s.check_delta(3, 50.0).is_err());
    }

    #[test]
    fn polynomial_class() {
        let s = SignalSpec::new(
            BaseSignal::Polynomial {
                coefficients: vec![0.0, 0.0, 1.0],
            },
            0.0,
        );
        assert_eq!(s.class(3), SignalClass::Polynomial);
        for t in [0.0, 1.0, -3.5, 1e3] {
            assert_eq!(s.eval(t, 3, 3).unwrap(), 0.0);
        }
        assert_eq!(s.eval(2.0, 1, 3).unwrap(), 4.0);
        assert_eq!(s.class(2), SignalClass::Lipschitz);
    }

    #[test]
    fn harmonic_derivatives_match_sinusoids() {
        let h = BaseSignal::CustomHarmonic {
            fundamental: 2.0,
            offset: 1.0,
            cosine: vec![0.5],
            sine: vec![0.0, 0.25],
        };
        let s = BaseSignal::SinusoidMix {
            components: vec![
                Sinusoid {
                    amplitude: 0.5,
                    frequency: 2.0,
                    phase: FRAC_PI_2,
                },
                Sinusoid {
                    amplitude: 0.25,
                    frequency: 4.0,
                    phase: 0.0,
                },
            ],
        };
        for k in 1..4 {
            assert_relative_eq!(h.derivative(0.7, k), s.derivative(0.7, k), epsilon = 1e-12);
        }
        assert_relative_eq!(
            h.derivative(0.7, 0),
            1.0 + s.derivative(0.7, 0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn noise_zero_and_determinism() {
        let z = NoiseSpec::uniform(0.0, 3);
        assert_eq!(z.sample(1.234), 0.0);
        let a = NoiseSpec::uniform(0.1, 42);
        let b = NoiseSpec::uniform(0.1, 42);
        for j in 0..100 {
            let t = j as f64 * 1e-3;
            assert_eq!(a.sample(t).to_bits(), b.sample(t).to_bits());
        }
        let c = NoiseSpec::uniform(0.1, 43);
        assert!((0..100).any(|j| c.sample(j as f64) != a.sample(j as f64)));
    }

    #[test]
    fn uniform_noise_fills_its_bound() {
        let eps = 0.3;
        let nz = NoiseSpec::uniform(eps, 7);
        let mut max = 0.0f64;
        for j in 0..1_000_000 {
            let v = nz.sample(j as f64 * 1e-4);
            assert!(v.abs() <= eps);
            max = max.max(v.abs());
        }
        assert!(max >= 0.99 * eps, "{max}");
    }

    #[test]
    fn sinusoidal_noise_bounded() {
        let nz = NoiseSpec::sinusoidal(1e-3, 50.0, 1);
        for j in 0..10_000 {
            assert!(nz.sample(j as f64 * 1e-3).abs() <= 1e-3);
        }
    }

    #[test]
    fn rescaling_matches_definition() {
        let s = SignalSpec::reference_example();
        let r = s.rescaled(0.25, 2.0, 3);
        for k in 0..=3 {
            let t = 0.9;
            assert_relative_eq!(
                r.eval(t, k, 3).unwrap(),
                0.25 * 2f64.powi(k as i32) * s.eval(2.0 * t, k, 3).unwrap(),
                epsilon = 1e-13
            );
        }
        assert_relative_eq!(r.delta, s.delta * 0.25 * 8.0);
    }
}
