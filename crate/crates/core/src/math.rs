//! Weights, injection maps and their homogeneous approximations.
//!
//! Stage indices in the public API are 1-based (`i = 1..=n`), mirroring the
//! way the differentiator rows are numbered. Internally everything is stored
//! 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed power `sign(s) * |s|^p`, with `sign(0) = 0`.
///
/// Computed from `|s|` so that `spow(-s, p) == -spow(s, p)` holds bit for bit.
#[inline]
pub fn spow(s: f64, p: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let m = if p == 0.0 { 1.0 } else { s.abs().powf(p) };
    if s > 0.0 {
        m
    } else {
        -m
    }
}

/// `|s|^p` with the convention `0^p = 0` for `p > 0`.
#[inline]
pub fn apow(s: f64, p: f64) -> f64 {
    if s == 0.0 {
        if p == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        s.abs().powf(p)
    }
}

/// Order and the pair of homogeneity degrees at the origin and at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeConfig {
    pub order: usize,
    pub d0: f64,
    pub dinf: f64,
}

impl DegreeConfig {
    /// Validates `-1 <= d0 <= dinf < 1/(n-1)`.
    pub fn new(order: usize, d0: f64, dinf: f64) -> Result<Self> {
        let cfg = Self { order, d0, dinf };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.order;
        if n == 0 {
            return Err(Error::InvalidConfig("order must be at least 1".into()));
        }
        if !self.d0.is_finite() || !self.dinf.is_finite() {
            return Err(Error::InvalidConfig("degrees must be finite".into()));
        }
        if self.d0 < -1.0 {
            return Err(Error::InvalidConfig(format!(
                "d0 = {} violates lower bound d0 >= -1",
                self.d0
            )));
        }
        if self.d0 > self.dinf {
            return Err(Error::InvalidConfig(format!(
                "d0 = {} violates ordering d0 <= dinf = {}",
                self.d0, self.dinf
            )));
        }
        if n >= 2 {
            let upper = 1.0 / (n as f64 - 1.0);
            if self.dinf >= upper {
                return Err(Error::InvalidConfig(format!(
                    "dinf = {} violates upper bound dinf < 1/(n-1) = {}",
                    self.dinf, upper
                )));
            }
        } else if self.dinf <= -1.0 {
            return Err(Error::InvalidConfig(format!(
                "dinf = {} must exceed -1 for order 1",
                self.dinf
            )));
        }
        Ok(())
    }

    /// The discontinuous (sliding-mode) case `d0 = -1`.
    pub fn is_discontinuous(&self) -> bool {
        self.d0 == -1.0
    }
}

/// Dilation weights `r0[i] = 1 - (n-i) d0` and `rinf[i] = 1 - (n-i) dinf`, `i = 1..=n+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVectors {
    pub r0: Vec<f64>,
    pub rinf: Vec<f64>,
}

impl WeightVectors {
    pub fn order(&self) -> usize {
        self.r0.len() - 1
    }

    /// Weights of the first `n` coordinates (the dilation acting on the state).
    pub fn state_r0(&self) -> &[f64] {
        &self.r0[..self.order()]
    }

    pub fn state_rinf(&self) -> &[f64] {
        &self.rinf[..self.order()]
    }
}

pub fn compute_weights(cfg: &DegreeConfig) -> Result<WeightVectors> {
    cfg.validate()?;
    let n = cfg.order as f64;
    let w = |d: f64| -> Vec<f64> {
        (1..=cfg.order + 1)
            .map(|i| 1.0 - (n - i as f64) * d)
            .collect()
    };
    Ok(WeightVectors {
        r0: w(cfg.d0),
        rinf: w(cfg.dinf),
    })
}

/// Internal gains weighting the low-power (`kappa`) and high-power (`theta`) terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalGains {
    pub kappa: Vec<f64>,
    pub theta: Vec<f64>,
}

impl InternalGains {
    pub fn new(kappa: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if kappa.len() != theta.len() {
            return Err(Error::InvalidConfig(format!(
                "kappa has {} entries but theta has {}",
                kappa.len(),
                theta.len()
            )));
        }
        if let Some(i) = kappa
            .iter()
            .chain(theta.iter())
            .position(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidConfig(format!(
                "internal gains must be strictly positive (entry {})",
                i % kappa.len().max(1) + 1
            )));
        }
        Ok(Self { kappa, theta })
    }

    /// `kappa_i = mu`, `theta_i = 1 - mu` for all stages.
    pub fn weighted(order: usize, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "mu = {mu} must lie in (0, 1)"
            )));
        }
        Self::new(vec![mu; order], vec![1.0 - mu; order])
    }

    pub fn ones(order: usize) -> Self {
        Self {
            kappa: vec![1.0; order],
            theta: vec![1.0; order],
        }
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }
}

/// Coefficients and exponents of the homogeneous 0- and infinity-limit
/// approximations `phi_{i,0}(s) = K0[i] ceil(s)^exponents0[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousApprox {
    pub k0: Vec<f64>,
    pub kinf: Vec<f64>,
    pub exponents0: Vec<f64>,
    pub exponents_inf: Vec<f64>,
}

impl HomogeneousApprox {
    pub fn eval0(&self, i: usize, s: f64) -> f64 {
        self.k0[i - 1] * spow(s, self.exponents0[i - 1])
    }

    pub fn eval_inf(&self, i: usize, s: f64) -> f64 {
        self.kinf[i - 1] * spow(s, self.exponents_inf[i - 1])
    }
}

/// Relative tolerance of [`Injection::varphi_inverse`].
pub const INVERSE_RTOL: f64 = 1e-12;
/// Absolute floor of [`Injection::varphi_inverse`].
pub const INVERSE_ATOL: f64 = f64::MIN_POSITIVE;
/// Iteration cap of [`Injection::varphi_inverse`].
pub const INVERSE_MAX_ITER: usize = 200;

/// The injection maps `varphi_i` and their compositions `phi_i` for one
/// configuration, with exponents cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    degrees: DegreeConfig,
    weights: WeightVectors,
    gains: InternalGains,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl Injection {
    pub fn new(degrees: DegreeConfig, gains: InternalGains) -> Result<Self> {
        let weights = compute_weights(&degrees)?;
        if gains.len() != degrees.order {
            return Err(Error::InvalidConfig(format!(
                "expected {} internal gain pairs, got {}",
                degrees.order,
                gains.len()
            )));
        }
        let gains = InternalGains::new(gains.kappa, gains.theta)?;
        let n = degrees.order;
        let low = (0..n).map(|i| weights.r0[i + 1] / weights.r0[i]).collect();
        let high = (0..n)
            .map(|i| weights.rinf[i + 1] / weights.rinf[i])
            .collect();
        Ok(Self {
            degrees,
            weights,
            gains,
            low,
            high,
        })
    }

    pub fn order(&self) -> usize {
        self.degrees.order
    }

    pub fn degrees(&self) -> &DegreeConfig {
        &self.degrees
    }

    pub fn weights(&self) -> &WeightVectors {
        &self.weights
    }

    pub fn gains(&self) -> &InternalGains {
        &self.gains
    }

    /// Exponents `(r0_{i+1}/r0_i, rinf_{i+1}/rinf_i)` of stage `i`.
    pub fn exponents(&self, i: usize) -> (f64, f64) {
        (self.low[i - 1], self.high[i - 1])
    }

    #[inline]
    fn check(&self, i: usize) {
        assert!(
            i >= 1 && i <= self.order(),
            "stage index {i} outside 1..={}",
            self.order()
        );
    }

    /// `varphi_i(s) = kappa_i ceil(s)^{r0_{i+1}/r0_i} + theta_i ceil(s)^{rinf_{i+1}/rinf_i}`.
    #[inline]
    pub fn varphi(&self, i: usize, s: f64) -> f64 {
        self.check(i);
        let k = i - 1;
        if s == 0.0 {
            return 0.0;
        }
        let a = s.abs();
        let lo = if self.low[k] == 0.0 {
            1.0
        } else {
            a.powf(self.low[k])
        };
        let m = self.gains.kappa[k] * lo + self.gains.theta[k] * a.powf(self.high[k]);
        if s > 0.0 {
            m
        } else {
            -m
        }
    }

    /// Derivative of `varphi_i` for `s != 0` (infinite at 0 when an exponent is below one).
    pub fn varphi_derivative(&self, i: usize, s: f64) -> f64 {
        self.check(i);
        let k = i - 1;
        let a = s.abs();
        let (p, q) = (self.low[k], self.high[k]);
        let lo = if p == 0.0 {
            0.0
        } else {
            self.gains.kappa[k] * p * a.powf(p - 1.0)
        };
        lo + self.gains.theta[k] * q * a.powf(q - 1.0)
    }

    /// `phi_i(z) = varphi_i o ... o varphi_1 (z)`.
    pub fn phi(&self, i: usize, z: f64) -> f64 {
        self.check(i);
        (1..=i).fold(z, |acc, j| self.varphi(j, acc))
    }

    /// Fills `out[i-1] = phi_i(z)` for every stage.
    pub fn phi_all(&self, z: f64, out: &mut [f64]) {
        let mut acc = z;
        for (j, slot) in out.iter_mut().enumerate().take(self.order()) {
            acc = self.varphi(j + 1, acc);
            *slot = acc;
        }
    }

    /// `varphi_j o ... o varphi_i (s)` for `j >= i`.
    pub fn chain(&self, from: usize, to: usize, s: f64) -> f64 {
        (from..=to).fold(s, |acc, j| self.varphi(j, acc))
    }

    /// Numerical inverse of `varphi_i` for `i = 1..n-1` by geometric bisection.
    pub fn varphi_inverse(&self, i: usize, y: f64) -> Result<f64> {
        let n = self.order();
        if i == 0 || i >= n.max(1) {
            return Err(Error::IndexOutOfRange {
                index: i,
                max: n.saturating_sub(1),
            });
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let target = y.abs();
        let k = i - 1;
        let (a, b) = (self.low[k], self.high[k]);
        let (kap, th) = (self.gains.kappa[k], self.gains.theta[k]);
        let tol = INVERSE_ATOL + INVERSE_RTOL * target;

        // Each power term alone bounds the root from above; half of the
        // target on each term bounds it from below.
        let mut hi = (target / kap)
            .powf(1.0 / a)
            .min((target / th).powf(1.0 / b));
        let mut lo = (0.5 * target / kap)
            .powf(1.0 / a)
            .min((0.5 * target / th).powf(1.0 / b));
        if !hi.is_finite() {
            hi = f64::MAX;
        }
        if !(lo > 0.0) {
            lo = f64::MIN_POSITIVE;
        }
        let sign = if y > 0.0 { 1.0 } else { -1.0 };
        for _ in 0..INVERSE_MAX_ITER {
            let mid = (lo * hi).sqrt();
            let mid = if mid > lo && mid < hi {
                mid
            } else {
                0.5 * (lo + hi)
            };
            let v = self.varphi(i, mid);
            if (v - target).abs() <= tol {
                return Ok(sign * mid);
            }
            if v < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                let best =
                    if (self.varphi(i, lo) - target).abs() < (self.varphi(i, hi) - target).abs() {
                        lo
                    } else {
                        hi
                    };
                return Ok(sign * best);
            }
        }
        Err(Error::InverseNotConverged {
            index: i,
            target: y,
            iterations: INVERSE_MAX_ITER,
        })
    }

    /// Coefficients of the homogeneous approximations of every `phi_i`.
    pub fn homogeneous_approx(&self) -> HomogeneousApprox {
        let n = self.order();
        let (r0, rinf) = (&self.weights.r0, &self.weights.rinf);
        let product = |gains: &[f64], r: &[f64], i: usize| -> f64 {
            (1..=i)
                .map(|j| {
                    let e = if j == i { 1.0 } else { r[i] / r[j] };
                    gains[j - 1].powf(e)
                })
                .product()
        };
        HomogeneousApprox {
            k0: (1..=n).map(|i| product(&self.gains.kappa, r0, i)).collect(),
            kinf: (1..=n)
                .map(|i| product(&self.gains.theta, rinf, i))
                .collect(),
            exponents0: (1..=n).map(|i| r0[i] / r0[0]).collect(),
            exponents_inf: (1..=n).map(|i| rinf[i] / rinf[0]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> Injection {
        let cfg = DegreeConfig::new(3, -1.0, 0.2).unwrap();
        Injection::new(cfg, InternalGains::ones(3)).unwrap()
    }

    #[test]
    fn weights_discontinuous_order_three() {
        let w = compute_weights(&DegreeConfig::new(3, -1.0, 0.2).unwrap()).unwrap();
        let expect0 = [3.0, 2.0, 1.0, 0.0];
        let expect_inf = [0.6, 0.8, 1.0, 1.2];
        for i in 0..4 {
            assert_relative_eq!(w.r0[i], expect0[i], epsilon = 1e-15);
            assert_relative_eq!(w.rinf[i], expect_inf[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn weights_linear_case() {
        let w = compute_weights(&DegreeConfig::new(2, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(w.r0, vec![1.0; 3]);
        assert_eq!(w.rinf, vec![1.0; 3]);
    }

    #[test]
    fn degree_bounds_are_enforced() {
        let err = DegreeConfig::new(3, 0.0, 0.5).unwrap_err();
        assert!(err.to_string().contains("1/(n-1)"), "{err}");
        let err = DegreeConfig::new(3, -1.5, 0.1).unwrap_err();
        assert!(err.to_string().contains("d0 >= -1"), "{err}");
        let err = DegreeConfig::new(3, 0.2, 0.1).unwrap_err();
        assert!(err.to_string().contains("d0 <= dinf"), "{err}");
    }

    #[test]
    fn varphi_examples() {
        let inj = reference();
        assert_relative_eq!(inj.varphi(1, 8.0), 20.0, max_relative = 1e-14);
        assert_eq!(inj.varphi(1, 0.0), 0.0);
        // 4^(1/2) + 4^(5/4) = 2 + 4 sqrt(2)
        assert_relative_eq!(
            inj.varphi(2, 4.0),
            2.0 + 4.0 * 2f64.sqrt(),
            max_relative = 1e-14
        );
        assert_relative_eq!(inj.varphi(2, 4.0), 7.656854249492381, max_relative = 1e-14);
    }

    #[test]
    fn phi_examples() {
        let inj = reference();
        assert_relative_eq!(
            inj.phi(2, 1.0),
            2f64.sqrt() + 2f64.powf(1.25),
            max_relative = 1e-14
        );
        assert_relative_eq!(inj.phi(2, 1.0), 3.7926, max_relative = 1e-4);
        assert_relative_eq!(inj.phi(1, 8.0), 20.0, max_relative = 1e-14);
        assert_eq!(inj.phi(3, 0.0), 0.0);
        let mut all = [0.0; 3];
        inj.phi_all(0.7, &mut all);
        for i in 1..=3 {
            assert_eq!(all[i - 1], inj.phi(i, 0.7));
        }
    }

    #[test]
    fn sign_term_of_last_stage() {
        let inj = reference();
        // d0 = -1: varphi_3(s) = sign(s) + |s|^{6/5} sign(s)
        assert_eq!(inj.varphi(3, 1e-300), 1.0 + 1e-300f64.powf(1.2));
        assert_eq!(inj.varphi(3, -1e-300), -(1.0 + 1e-300f64.powf(1.2)));
        assert_eq!(inj.varphi(3, 0.0), 0.0);
    }

    #[test]
    fn inverse_examples() {
        let inj = reference();
        assert_relative_eq!(
            inj.varphi_inverse(1, 20.0).unwrap(),
            8.0,
            max_relative = 1e-11
        );
        assert_eq!(inj.varphi_inverse(1, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            inj.varphi_inverse(1, 2.0).unwrap(),
            1.0,
            max_relative = 1e-11
        );
        assert_relative_eq!(
            inj.varphi_inverse(1, -20.0).unwrap(),
            -8.0,
            max_relative = 1e-11
        );
        assert!(matches!(
            inj.varphi_inverse(3, 1.0),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn homogeneous_coefficients() {
        let inj = reference();
        let h = inj.homogeneous_approx();
        assert!(h.k0.iter().chain(h.kinf.iter()).all(|&k| k == 1.0));

        let cfg = DegreeConfig::new(2, -0.5, 0.3).unwrap();
        let inj = Injection::new(
            cfg,
            InternalGains::new(vec![2.0, 3.0], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let w = inj.weights().clone();
        let h = inj.homogeneous_approx();
        // K_{2,0} = kappa_1^{r0_3/r0_2} kappa_2
        assert_relative_eq!(
            h.k0[1],
            3.0 * 2f64.powf(w.r0[2] / w.r0[1]),
            max_relative = 1e-15
        );
        assert_relative_eq!(h.k0[0], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn last_stage_approx_in_sliding_case() {
        let cfg = DegreeConfig::new(3, -1.0, 0.2).unwrap();
        let inj = Injection::new(
            cfg,
            InternalGains::new(vec![2.0, 3.0, 5.0], vec![1.0, 1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let h = inj.homogeneous_approx();
        assert_eq!(h.k0[2], 5.0);
        assert_eq!(h.exponents0[2], 0.0);
    }

    #[test]
    fn limit_ratio_tends_to_one() {
        let inj = reference();
        let h = inj.homogeneous_approx();
        for i in 1..=3 {
            let small = 1e-12;
            let r = inj.phi(i, small) / h.eval0(i, small);
            assert!((r - 1.0).abs() < 1e-2, "i={i} ratio {r}");
        }
    }
}
