//! The bl-homogeneous Lyapunov function of the normalized error system, its
//! partial derivatives, the worst-case derivative bound `W*`, sampled decay
//! constants and the fixed-time bound.
//!
//! `Z_i` is a sum over the two limits `j in {0, inf}` of Bregman-type terms
//! `beta_{j,i} [ (r/p)|z_i|^{p/r} - z_i ceil(xi)^{(p-r)/r} + ((p-r)/p)|xi|^{p/r} ]`
//! with `xi = varphi_i^{-1}(z_{i+1})` (and `xi = 0` for the last stage).
//! Each term vanishes exactly on the manifold `varphi_i(z_i) = z_{i+1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::GainLadder;
use crate::math::{apow, spow, Injection, WeightVectors};
use crate::sampling::SamplingPlan;

/// Exponents and coefficients of the Lyapunov function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub p0: f64,
    pub pinf: f64,
    pub beta0: Vec<f64>,
    pub betainf: Vec<f64>,
}

/// Multiplicative step used to grow `pinf` until the ordering condition holds.
pub const PINF_INFLATION: f64 = 1.05;

fn dinf_of(weights: &WeightVectors) -> f64 {
    let n = weights.order();
    weights.rinf[n] - weights.rinf[n - 1]
}

fn p0_lower_bound(weights: &WeightVectors) -> f64 {
    let dinf = dinf_of(weights);
    (0..weights.order())
        .map(|i| weights.r0[i] / weights.rinf[i] * (2.0 * weights.rinf[i] + dinf))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn pinf_lower_bound(weights: &WeightVectors) -> f64 {
    let dinf = dinf_of(weights);
    2.0 * weights
        .state_rinf()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        + dinf
}

fn ordering_holds(p0: f64, pinf: f64, weights: &WeightVectors) -> bool {
    (0..weights.order()).all(|i| p0 / weights.r0[i] < pinf / weights.rinf[i])
}

/// Smallest `p0`, `pinf` meeting the lower bounds, with `pinf` then grown by
/// [`PINF_INFLATION`] until `p0/r0_i < pinf/rinf_i` for every stage.
///
/// In the homogeneous case `d0 = dinf` the ordering can never be strict;
/// the lower bounds are returned unchanged and [`check_p`] reports it.
pub fn default_p(weights: &WeightVectors) -> (f64, f64) {
    let p0 = p0_lower_bound(weights);
    let mut pinf = pinf_lower_bound(weights);
    if weights.r0 == weights.rinf {
        return (p0, pinf.max(p0));
    }
    while !ordering_holds(p0, pinf, weights) {
        pinf *= PINF_INFLATION;
    }
    (p0, pinf)
}

/// Result of [`check_p`].
#[derive(Debug, Clone, PartialEq)]
pub struct PCheck {
    pub ok: bool,
    pub diagnostics: Vec<String>,
}

pub fn check_p(p0: f64, pinf: f64, weights: &WeightVectors) -> PCheck {
    let mut diagnostics = Vec::new();
    let lb0 = p0_lower_bound(weights);
    let lbinf = pinf_lower_bound(weights);
    if p0 < lb0 {
        diagnostics.push(format!("p0 = {p0} is below its lower bound {lb0}"));
    }
    if pinf < lbinf {
        diagnostics.push(format!("pinf = {pinf} is below its lower bound {lbinf}"));
    }
    if let Some(i) = (0..weights.order()).find(|&i| !(p0 / weights.r0[i] < pinf / weights.rinf[i]))
    {
        let mut msg = format!(
            "ordering p0/r0_i < pinf/rinf_i fails at i = {}: {} >= {}",
            i + 1,
            p0 / weights.r0[i],
            pinf / weights.rinf[i]
        );
        if weights.r0 == weights.rinf {
            msg.push_str(" (homogeneous case: both approximations coincide)");
        }
        diagnostics.push(msg);
    }
    PCheck {
        ok: diagnostics.is_empty(),
        diagnostics,
    }
}

impl LyapunovParams {
    /// Default exponents with all `beta = 1`.
    pub fn with_defaults(weights: &WeightVectors) -> Self {
        let n = weights.order();
        let (p0, pinf) = default_p(weights);
        Self {
            p0,
            pinf,
            beta0: vec![1.0; n],
            betainf: vec![1.0; n],
        }
    }
}

/// Certificate of the sampled decay inequality `V' <= -eta0 V^a - etainf V^b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub eta0: f64,
    pub etainf: f64,
    /// Fixed-time bound; `None` unless `d0 < 0 < dinf`.
    pub tbar: Option<f64>,
    pub sample_count: usize,
    pub skipped: usize,
    pub min_margin: f64,
    /// Largest sampled `W*` (negative when certified).
    pub max_w_star: f64,
}

/// Safety factor dividing the sampled minimum decay ratio.
pub const ETA_SAFETY: f64 = 2.0;

/// Settings of [`LyapunovFunction::estimate_eta`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifySettings {
    pub plan: SamplingPlan,
    /// Samples with `V^a + V^b` below this floor are skipped.
    pub denominator_floor: f64,
    pub safety: f64,
}

impl Default for CertifySettings {
    fn default() -> Self {
        Self {
            plan: SamplingPlan::default(),
            denominator_floor: 1e-300,
            safety: ETA_SAFETY,
        }
    }
}

/// The Lyapunov function bound to one injection configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovFunction {
    injection: Injection,
    params: LyapunovParams,
}

/// Split of the restricted derivative `W_{i-1} = -kt_i * head + rest`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedTerms {
    /// `sigma_i (varphi_i(z_i) - z_{i+1})`, nonnegative.
    pub head: f64,
    /// Magnitude scale of `head`'s factors, for cancellation tests.
    pub head_scale: f64,
    /// Contribution of stages `i+1..n` (worst case over the set-valued term).
    pub rest: f64,
}

impl LyapunovFunction {
    pub fn new(injection: Injection, params: LyapunovParams) -> Result<Self> {
        let n = injection.order();
        if params.beta0.len() != n || params.betainf.len() != n {
            return Err(Error::InvalidConfig(format!(
                "beta arrays must have {n} entries"
            )));
        }
        if params
            .beta0
            .iter()
            .chain(&params.betainf)
            .any(|b| !(*b > 0.0 && b.is_finite()))
        {
            return Err(Error::InvalidConfig("beta entries must be positive".into()));
        }
        if !(params.p0 > 0.0 && params.pinf > 0.0) {
            return Err(Error::InvalidConfig("p0 and pinf must be positive".into()));
        }
        Ok(Self { injection, params })
    }

    pub fn with_defaults(injection: Injection) -> Result<Self> {
        let params = LyapunovParams::with_defaults(injection.weights());
        Self::new(injection, params)
    }

    pub fn injection(&self) -> &Injection {
        &self.injection
    }

    pub fn params(&self) -> &LyapunovParams {
        &self.params
    }

    pub fn order(&self) -> usize {
        self.injection.order()
    }

    /// `(beta, p, r)` for both limits at stage `i`.
    fn branches(&self, i: usize) -> [(f64, f64, f64); 2] {
        let w = self.injection.weights();
        let k = i - 1;
        [
            (self.params.beta0[k], self.params.p0, w.r0[k]),
            (self.params.betainf[k], self.params.pinf, w.rinf[k]),
        ]
    }

    fn xi(&self, i: usize, z_next: f64) -> Result<f64> {
        if i == self.order() {
            Ok(0.0)
        } else {
            self.injection.varphi_inverse(i, z_next)
        }
    }

    /// `Z_i(z_i, z_{i+1})`; `z_next` is ignored for `i = n`.
    pub fn z_term(&self, i: usize, zi: f64, z_next: f64) -> Result<f64> {
        let xi = self.xi(i, z_next)?;
        Ok(self
            .branches(i)
            .iter()
            .map(|&(beta, p, r)| {
                let m = p / r;
                beta * ((r / p) * apow(zi, m) - zi * spow(xi, m - 1.0)
                    + ((p - r) / p) * apow(xi, m))
            })
            .sum())
    }

    /// `dZ_i/dz_i`.
    pub fn sigma(&self, i: usize, zi: f64, z_next: f64) -> Result<f64> {
        let xi = self.xi(i, z_next)?;
        Ok(self.sigma_with_xi(i, zi, xi))
    }

    fn sigma_with_xi(&self, i: usize, zi: f64, xi: f64) -> f64 {
        self.branches(i)
            .iter()
            .map(|&(beta, p, r)| {
                let m = p / r - 1.0;
                beta * (spow(zi, m) - spow(xi, m))
            })
            .sum()
    }

    /// `dZ_i/dz_{i+1}`; identically zero for `i = n`.
    pub fn s(&self, i: usize, zi: f64, z_next: f64) -> Result<f64> {
        if i == self.order() {
            return Ok(0.0);
        }
        let xi = self.xi(i, z_next)?;
        Ok(self.s_with_xi(i, zi, xi))
    }

    fn s_with_xi(&self, i: usize, zi: f64, xi: f64) -> f64 {
        if xi == 0.0 {
            return 0.0;
        }
        let (low, high) = self.injection.exponents(i);
        let g = self.injection.gains();
        let (kap, th) = (g.kappa[i - 1], g.theta[i - 1]);
        let a = xi.abs();
        self.branches(i)
            .iter()
            .map(|&(beta, p, r)| {
                // |xi|^e / varphi_i'(xi) written as one reciprocal so that the
                // limits at xi -> 0 and xi -> inf stay finite.
                let e = (p - 2.0 * r) / r;
                let lo = if low == 0.0 {
                    0.0
                } else {
                    kap * low * a.powf(low - 1.0 - e)
                };
                let denom = lo + th * high * a.powf(high - 1.0 - e);
                -beta * ((p - r) / r) * (zi - xi) / denom
            })
            .sum()
    }

    /// `V(z) = sum_i Z_i`.
    pub fn value(&self, z: &[f64]) -> Result<f64> {
        let n = self.order();
        let mut acc = 0.0;
        for i in 1..=n {
            let next = if i < n { z[i] } else { 0.0 };
            acc += self.z_term(i, z[i - 1], next)?;
        }
        Ok(acc)
    }

    /// `dV/dz_i = sigma_i + s_{i-1}`.
    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.order();
        let mut grad = vec![0.0; n];
        for i in 1..=n {
            let next = if i < n { z[i] } else { 0.0 };
            let xi = self.xi(i, next)?;
            grad[i - 1] += self.sigma_with_xi(i, z[i - 1], xi);
            if i < n {
                grad[i] += self.s_with_xi(i, z[i - 1], xi);
            }
        }
        Ok(grad)
    }

    /// Terms of `W` restricted to the manifold on which stages `1..start-1`
    /// are eliminated; `tail = (z_start, ..., z_n)`.
    ///
    /// `delta_bar` bounds `|f0^{(n)}| / k_n`; the perturbation enters through
    /// its worst case. The sign term is single-valued with `sign(0) = 0`.
    pub fn restricted_terms(
        &self,
        start: usize,
        tail: &[f64],
        ktilde: &[f64],
        delta_bar: f64,
    ) -> Result<RestrictedTerms> {
        let n = self.order();
        debug_assert_eq!(tail.len(), n - start + 1);
        let z = |j: usize| -> f64 {
            if j <= n {
                tail[j - start]
            } else {
                0.0
            }
        };

        let mut psi_prev = z(start);
        let mut s_prev = 0.0;
        let mut head = 0.0;
        let mut head_scale = 0.0;
        let mut rest = 0.0;
        for j in start..=n {
            let psi = self.injection.varphi(j, psi_prev);
            let xi = self.xi(j, z(j + 1))?;
            let sigma = self.sigma_with_xi(j, z(j), xi);
            let g = sigma + s_prev;
            let term = if j < n {
                -ktilde[j - 1] * g * (psi - z(j + 1))
            } else {
                -ktilde[j - 1] * g * psi + ktilde[j - 1] * g.abs() * delta_bar
            };
            if j == start && j < n {
                head = g * (psi - z(j + 1));
                head_scale = g.abs() * (psi.abs() + z(j + 1).abs());
            } else {
                rest += term;
            }
            if j < n {
                s_prev = self.s_with_xi(j, z(j), xi);
            }
            psi_prev = psi;
        }
        Ok(RestrictedTerms {
            head,
            head_scale,
            rest,
        })
    }

    /// Largest element of the set-valued derivative of `V` along the error
    /// system with `|delta| <= delta`.
    pub fn w_star(&self, z: &[f64], ladder: &GainLadder, delta: f64) -> Result<f64> {
        self.check_delta(ladder, delta)?;
        let n = self.order();
        let t = self.restricted_terms(1, z, &ladder.ktilde, delta / ladder.k[n - 1])?;
        if n == 1 {
            Ok(t.rest)
        } else {
            Ok(-ladder.ktilde[0] * t.head + t.rest)
        }
    }

    fn check_delta(&self, ladder: &GainLadder, delta: f64) -> Result<()> {
        let n = self.order();
        if !(delta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delta = {delta} must be nonnegative"
            )));
        }
        if self.injection.degrees().is_discontinuous() {
            let bound = self.injection.gains().kappa[n - 1] * ladder.k[n - 1];
            if delta >= bound {
                return Err(Error::PerturbationTooLarge { delta, bound });
            }
        } else if delta > 0.0 {
            return Err(Error::InvalidConfig(
                "a nonzero perturbation bound requires d0 = -1".into(),
            ));
        }
        Ok(())
    }

    /// Exponents `a = (p0+d0)/p0` and `b = (pinf+dinf)/pinf` of the decay inequality.
    pub fn decay_exponents(&self) -> (f64, f64) {
        let d = self.injection.degrees();
        (
            (self.params.p0 + d.d0) / self.params.p0,
            (self.params.pinf + d.dinf) / self.params.pinf,
        )
    }

    /// Samples `-W* / (V^a + V^b)` over the plan and derives the decay constants.
    ///
    /// This is a numerical certificate over a finite sample, not a proof.
    pub fn estimate_eta(
        &self,
        ladder: &GainLadder,
        delta: f64,
        settings: &CertifySettings,
    ) -> Result<DecayCertificate> {
        self.check_delta(ladder, delta)?;
        let w = self.injection.weights();
        let points = settings.plan.points(&[w.state_r0(), w.state_rinf()]);
        let (a, b) = self.decay_exponents();
        let evaluated: Vec<Result<(f64, f64)>> = points
            .par_iter()
            .map(|p| {
                let ws = self.w_star(&p.z, ladder, delta)?;
                let v = self.value(&p.z)?;
                Ok((ws, v.powf(a) + v.powf(b)))
            })
            .collect();

        let mut min_margin = f64::INFINITY;
        let mut max_w = f64::NEG_INFINITY;
        let mut used = 0;
        let mut skipped = 0;
        let mut violations = 0;
        let mut worst: Option<(f64, usize)> = None;
        let mut values = Vec::with_capacity(points.len());
        for (k, r) in evaluated.into_iter().enumerate() {
            let (ws, denom) = r?;
            if !(ws < 0.0) {
                violations += 1;
                let score = if denom > 0.0 { ws / denom } else { ws };
                if worst.is_none_or(|(s, _)| !(score <= s)) {
                    worst = Some((score, k));
                }
            }
            values.push((ws, denom));
        }
        if let Some((_, k)) = worst {
            return Err(Error::NotCertified {
                z: points[k].z.clone(),
                w_star: values[k].0,
                violations,
            });
        }
        for (ws, denom) in values {
            max_w = max_w.max(ws);
            if !(denom >= settings.denominator_floor) || !denom.is_finite() {
                skipped += 1;
                continue;
            }
            used += 1;
            min_margin = min_margin.min(-ws / denom);
        }
        if used == 0 {
            return Err(Error::InvalidConfig("no usable samples in the plan".into()));
        }
        let eta = min_margin / settings.safety;
        let d = self.injection.degrees();
        let tbar = if d.d0 < 0.0 && d.dinf > 0.0 {
            Some(fixed_time_bound(
                eta,
                eta,
                self.params.p0,
                self.params.pinf,
                d.d0,
                d.dinf,
            )?)
        } else {
            None
        };
        Ok(DecayCertificate {
            eta0: eta,
            etainf: eta,
            tbar,
            sample_count: used,
            skipped,
            min_margin,
            max_w_star: max_w,
        })
    }
}

/// Fixed-time bound for `V' <= -eta0 V^{(p0+d0)/p0} - etainf V^{(pinf+dinf)/pinf}`:
/// `(p0/(d0 etainf)) (m - 1) (eta0/etainf)^{1/(m-1)}` with `m = pinf d0 / (p0 dinf)`.
pub fn fixed_time_bound(
    eta0: f64,
    etainf: f64,
    p0: f64,
    pinf: f64,
    d0: f64,
    dinf: f64,
) -> Result<f64> {
    if !(d0 < 0.0) {
        return Err(Error::BoundAnomaly(format!("requires d0 < 0, got {d0}")));
    }
    if !(dinf > 0.0) {
        return Err(Error::BoundAnomaly(format!(
            "requires dinf > 0, got {dinf}"
        )));
    }
    if !(eta0 > 0.0 && etainf > 0.0) {
        return Err(Error::BoundAnomaly(format!(
            "decay constants must be positive, got {eta0}, {etainf}"
        )));
    }
    let m = pinf * d0 / (p0 * dinf) - 1.0;
    let t = p0 / (d0 * etainf) * m * (eta0 / etainf).powf(1.0 / m);
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::BoundAnomaly(format!("bound evaluated to {t}")));
    }
    Ok(t)
}
