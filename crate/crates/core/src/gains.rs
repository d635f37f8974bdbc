//! Output-injection gain ladders: validation, `(alpha, L)` rescaling,
//! target-driven design and recursive synthesis from sampled ratios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{CertifySettings, DecayCertificate, LyapunovFunction, LyapunovParams};
use crate::math::{DegreeConfig, Injection, InternalGains};
use crate::sampling::SamplingPlan;

/// Gains `k_i` and their successive ratios `kt_i = k_i / k_{i-1}` (`k_0 = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainLadder {
    pub k: Vec<f64>,
    pub ktilde: Vec<f64>,
}

fn check_positive(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidConfig(format!("{name} is empty")));
    }
    if let Some((i, x)) = v
        .iter()
        .enumerate()
        .find(|(_, x)| !(**x > 0.0 && x.is_finite()))
    {
        return Err(Error::InvalidConfig(format!(
            "{name}[{}] = {x} must be positive and finite",
            i + 1
        )));
    }
    Ok(())
}

impl GainLadder {
    pub fn from_k(k: Vec<f64>) -> Result<Self> {
        check_positive("k", &k)?;
        let ktilde = k
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 0 { *v } else { v / k[i - 1] })
            .collect();
        Ok(Self { k, ktilde })
    }

    pub fn from_ktilde(ktilde: Vec<f64>) -> Result<Self> {
        check_positive("ktilde", &ktilde)?;
        let mut k = Vec::with_capacity(ktilde.len());
        let mut acc = 1.0;
        for kt in &ktilde {
            acc *= kt;
            k.push(acc);
        }
        Ok(Self { k, ktilde })
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Last ratios `(kt_j, ..., kt_n)` as the ladder of an order `n - j + 1` differentiator.
    pub fn tail(&self, j: usize) -> Result<Self> {
        if j == 0 || j > self.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                max: self.len(),
            });
        }
        Self::from_ktilde(self.ktilde[j - 1..].to_vec())
    }
}

/// Lipschitz-scale `alpha` and time-scale `l` of a gain rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub alpha: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self { alpha: 1.0, l: 1.0 }
    }
}

impl ScalingParams {
    pub fn new(alpha: f64, l: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scaling factors must be positive, got alpha = {alpha}, L = {l}"
            )));
        }
        Ok(Self { alpha, l })
    }

    pub fn is_identity(&self) -> bool {
        self.alpha == 1.0 && self.l == 1.0
    }

    /// Argument scale `L^n / alpha` of the injection maps.
    pub fn argument_scale(&self, order: usize) -> f64 {
        self.l.powi(order as i32) / self.alpha
    }

    /// Initial error of the scaled design whose trajectory is the image of
    /// the original one started at `e0`: `e_i -> alpha e_i / L^{n-i+1}`.
    pub fn map_error(&self, e0: &[f64]) -> Vec<f64> {
        let n = e0.len();
        e0.iter()
            .enumerate()
            .map(|(i, e)| self.alpha * e / self.l.powi((n - i) as i32))
            .collect()
    }
}

/// Rescales the internal gains and the ladder:
/// `kappa_i *= M^{d0/r0_i}`, `theta_i *= M^{dinf/rinf_i}`, `k_i *= L^i`, `M = L^n/alpha`.
///
/// The scaled error trajectory from `alpha e_i(0) / L^{n-i+1}` is
/// `alpha e_i(L t) / L^{n-i+1}` for the signal `alpha f(L t) / L^n`.
pub fn scale_gains(
    degrees: &DegreeConfig,
    gains: &InternalGains,
    ladder: &GainLadder,
    s: ScalingParams,
) -> Result<(InternalGains, GainLadder)> {
    let n = degrees.order;
    let weights = crate::math::compute_weights(degrees)?;
    let m = s.argument_scale(n);
    let kappa = (0..n)
        .map(|i| gains.kappa[i] * m.powf(degrees.d0 / weights.r0[i]))
        .collect();
    let theta = (0..n)
        .map(|i| gains.theta[i] * m.powf(degrees.dinf / weights.rinf[i]))
        .collect();
    let k = ladder
        .k
        .iter()
        .enumerate()
        .map(|(i, k)| k * s.l.powi(i as i32 + 1))
        .collect();
    Ok((InternalGains::new(kappa, theta)?, GainLadder::from_k(k)?))
}

/// `alpha = max(1, delta_target / delta_base)`, `L = max(1, tbar / t_target)`.
pub fn design_for_targets(
    tbar: f64,
    delta_base: f64,
    t_target: f64,
    delta_target: f64,
) -> Result<ScalingParams> {
    if !(tbar > 0.0 && t_target > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "times must be positive, got tbar = {tbar}, target = {t_target}"
        )));
    }
    let alpha = if delta_target <= 0.0 {
        1.0
    } else if delta_base <= 0.0 {
        return Err(Error::InvalidConfig(
            "a base design with zero perturbation bound cannot be scaled to a positive one".into(),
        ));
    } else {
        (delta_target / delta_base).max(1.0)
    };
    ScalingParams::new(alpha, (tbar / t_target).max(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderCheck {
    pub ok: bool,
    pub diagnostics: Vec<String>,
}

/// Relative tolerance of the `k_i = prod kt_j` consistency check.
pub const LADDER_CONSISTENCY_RTOL: f64 = 1e-12;

/// Checks positivity, consistency of `k` with `kt`, and `k_n kappa_n > delta`.
pub fn validate_ladder(
    degrees: &DegreeConfig,
    gains: &InternalGains,
    ladder: &GainLadder,
    delta: f64,
) -> LadderCheck {
    let n = degrees.order;
    let mut diagnostics = Vec::new();
    if ladder.k.len() != n || ladder.ktilde.len() != n {
        diagnostics.push(format!(
            "ladder lengths ({}, {}) do not match order {n}",
            ladder.k.len(),
            ladder.ktilde.len()
        ));
        return LadderCheck {
            ok: false,
            diagnostics,
        };
    }
    for (name, v) in [("k", &ladder.k), ("ktilde", &ladder.ktilde)] {
        if let Err(e) = check_positive(name, v) {
            diagnostics.push(e.to_string());
        }
    }
    let mut acc = 1.0;
    for i in 0..n {
        acc *= ladder.ktilde[i];
        if (acc - ladder.k[i]).abs() > LADDER_CONSISTENCY_RTOL * acc.abs().max(ladder.k[i].abs()) {
            diagnostics.push(format!(
                "k[{}] = {} differs from the product of ratios {acc}",
                i + 1,
                ladder.k[i]
            ));
        }
    }
    if delta < 0.0 {
        diagnostics.push(format!("delta = {delta} must be nonnegative"));
    } else if degrees.is_discontinuous() {
        let bound = ladder.k[n - 1] * gains.kappa[n - 1];
        if !(bound > delta) {
            diagnostics.push(format!(
                "k_n * kappa_n = {bound} must exceed the perturbation bound {delta}"
            ));
        }
    } else if delta > 0.0 {
        diagnostics.push(format!(
            "perturbation bound {delta} > 0 is only admissible when d0 = -1"
        ));
    }
    LadderCheck {
        ok: diagnostics.is_empty(),
        diagnostics,
    }
}

/// Search settings of [`synthesize_gains`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSettings {
    pub plan: SamplingPlan,
    /// Multiplier on the sampled supremum of each ratio.
    pub safety: f64,
    pub ktilde_floor: f64,
    /// Samples with `head <= tube * head_scale` are treated as on-manifold.
    pub tube: f64,
    /// Allowed relative growth of the running maximum over the outermost decade.
    pub growth_limit: f64,
    /// `k_n = margin * delta / kappa_n` when `delta > 0`.
    pub last_gain_margin: f64,
    pub certify: CertifySettings,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            plan: SamplingPlan::default(),
            safety: 2.0,
            ktilde_floor: 1e-6,
            tube: 1e-12,
            growth_limit: 0.10,
            last_gain_margin: 1.5,
            certify: CertifySettings::default(),
        }
    }
}

/// Sampled supremum for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub index: usize,
    pub omega: f64,
    pub ktilde: f64,
    pub samples: usize,
    pub skipped: usize,
    /// Maximum ratio per radius of the plan.
    pub per_radius_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub ladder: GainLadder,
    pub delta: f64,
    pub stages: Vec<StageReport>,
    pub certificate: DecayCertificate,
}

fn running_growth(values: &[f64], span: usize) -> f64 {
    if values.len() <= span {
        return 0.0;
    }
    let inner = values[..values.len() - span]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let outer = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if inner > 0.0 {
        outer / inner - 1.0
    } else if outer > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn stage_scan(
    lf: &LyapunovFunction,
    i: usize,
    ktilde: &[f64],
    delta_bar: f64,
    settings: &SynthesisSettings,
) -> Result<StageReport> {
    let n = lf.order();
    let w = lf.injection().weights();
    let fam0 = &w.r0[i - 1..n];
    let faminf = &w.rinf[i - 1..n];
    let points = settings.plan.points(&[fam0, faminf]);
    let radii = settings.plan.log10_radii.len();
    let ratios: Vec<Result<Option<f64>>> = points
        .par_iter()
        .map(|p| {
            let t = lf.restricted_terms(i, &p.z, ktilde, delta_bar)?;
            if !(t.head > settings.tube * t.head_scale) {
                return Ok(None);
            }
            Ok(Some(t.rest / t.head))
        })
        .collect();
    let mut per_radius_max = vec![f64::NEG_INFINITY; radii];
    let mut skipped = 0;
    let mut used = 0;
    for (p, r) in points.iter().zip(ratios) {
        match r? {
            Some(v) if v.is_finite() => {
                used += 1;
                let slot = &mut per_radius_max[p.radius_index];
                *slot = slot.max(v);
            }
            Some(v) => {
                return Err(Error::SynthesisFailed {
                    index: i,
                    detail: format!("non-finite ratio {v} at z = {:?}", p.z),
                })
            }
            None => skipped += 1,
        }
    }
    // Radii are ordered; a decade spans two half-decade steps in the default
    // plan, so use the number of steps covering one unit of log10.
    let span = decade_span(&settings.plan.log10_radii);
    let up = running_growth(&per_radius_max, span);
    let mut rev = per_radius_max.clone();
    rev.reverse();
    let down = running_growth(&rev, span);
    if up > settings.growth_limit || down > settings.growth_limit {
        return Err(Error::SynthesisFailed {
            index: i,
            detail: format!(
                "sampled ratio keeps growing at the ends of the radius range \
                 (relative growth {up:.3} at large radii, {down:.3} at small radii)"
            ),
        });
    }
    let omega = per_radius_max
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(StageReport {
        index: i,
        omega,
        ktilde: (settings.safety * omega).max(settings.ktilde_floor),
        samples: used,
        skipped,
        per_radius_max,
    })
}

fn decade_span(log10_radii: &[f64]) -> usize {
    match log10_radii {
        [a, b, ..] if (b - a).abs() > 0.0 => ((1.0 / (b - a).abs()).round() as usize).max(1),
        _ => 1,
    }
}

/// Backward synthesis of the gain ratios.
///
/// `k_n` is fixed first from the perturbation bound. For `i = n-1, ..., 1` the
/// ratio `kt_i` is the safety multiple of the sampled supremum of the
/// restricted derivative's ratio over `(z_i, ..., z_n)`. The resulting ladder
/// is returned only after it passes [`validate_ladder`] and the decay scan.
pub fn synthesize_gains(
    injection: &Injection,
    delta: f64,
    params: &LyapunovParams,
    settings: &SynthesisSettings,
) -> Result<SynthesisReport> {
    let degrees = injection.degrees();
    let n = degrees.order;
    let gains = injection.gains();
    if delta < 0.0 || (delta > 0.0 && !degrees.is_discontinuous()) {
        return Err(Error::InvalidConfig(format!(
            "perturbation bound {delta} requires d0 = -1 and must be nonnegative"
        )));
    }
    let lf = LyapunovFunction::new(injection.clone(), params.clone())?;
    let kn_target = if delta > 0.0 {
        settings.last_gain_margin * delta / gains.kappa[n - 1]
    } else {
        1.0
    };
    let mut ktilde = vec![1.0; n];
    let mut stages = Vec::new();
    if n == 1 {
        ktilde[0] = kn_target;
    } else {
        let delta_bar = delta / kn_target;
        for i in (1..n).rev() {
            let stage = stage_scan(&lf, i, &ktilde, delta_bar, settings)?;
            ktilde[i - 1] = stage.ktilde;
            stages.push(stage);
        }
        // Make k_n reach its target so the perturbation used in the scans is
        // an upper bound of the actual one.
        let downstream: f64 = ktilde[1..].iter().product();
        ktilde[0] = ktilde[0].max(kn_target / downstream);
        if let Some(first) = stages.last_mut() {
            first.ktilde = ktilde[0];
        }
    }
    let ladder = GainLadder::from_ktilde(ktilde)?;
    let check = validate_ladder(degrees, gains, &ladder, delta);
    if !check.ok {
        return Err(Error::SynthesisFailed {
            index: n,
            detail: check.diagnostics.join("; "),
        });
    }
    let certificate = lf.estimate_eta(&ladder, delta, &settings.certify)?;
    stages.reverse();
    Ok(SynthesisReport {
        ladder,
        delta,
        stages,
        certificate,
    })
}
