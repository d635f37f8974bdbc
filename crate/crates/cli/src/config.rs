//! Experiment configuration: a TOML document with one table per block.

use std::path::{Path, PathBuf};

use fxdiff_core::{
    check_p, compute_weights, scale_gains, validate_ladder, CertifySettings, DegreeConfig,
    Differentiator, GainLadder, Injection, IntegrationSettings, InternalGains, LyapunovFunction,
    LyapunovParams, NoiseKind, SamplingPlan, ScalingParams, SignalSpec, SynthesisSettings,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifferentiatorBlock {
    pub order: usize,
    pub d0: f64,
    pub dinf: f64,
    /// Low-degree internal gains; defaults to ones (or `mu` when given).
    #[serde(default)]
    pub kappa: Option<Vec<f64>>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    /// `kappa_i = mu`, `theta_i = 1 - mu`.
    #[serde(default)]
    pub mu: Option<f64>,
    /// Output-injection gains `k_i`. Required unless `synthesize` is set.
    #[serde(default)]
    pub gains: Option<Vec<f64>>,
    #[serde(default)]
    pub synthesize: bool,
    #[serde(default)]
    pub boundary_layer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovBlock {
    /// `None` selects the default exponents.
    #[serde(default)]
    pub p0: Option<f64>,
    #[serde(default)]
    pub pinf: Option<f64>,
    #[serde(default)]
    pub beta0: Option<Vec<f64>>,
    #[serde(default)]
    pub betainf: Option<Vec<f64>>,
    /// Directions per radius in the sampling plans.
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_floor")]
    pub denominator_floor: f64,
}

fn default_directions() -> usize {
    2000
}

fn default_floor() -> f64 {
    CertifySettings::default().denominator_floor
}

impl Default for LyapunovBlock {
    fn default() -> Self {
        Self {
            p0: None,
            pinf: None,
            beta0: None,
            betainf: None,
            directions: default_directions(),
            denominator_floor: default_floor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Initial differentiation error used by `simulate`.
    #[serde(default)]
    pub initial_error: Option<Vec<f64>>,
}

fn default_dt() -> f64 {
    1e-4
}
fn default_t_final() -> f64 {
    20.0
}
fn default_record_every() -> usize {
    10
}
fn default_threshold() -> f64 {
    1e-3
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_final: default_t_final(),
            record_every: default_record_every(),
            threshold: default_threshold(),
            initial_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Direction of the scaled initial-condition family `base * 10^p`.
    #[serde(default)]
    pub ic_base: Option<Vec<f64>>,
    #[serde(default)]
    pub ic_exponents: Vec<i32>,
    /// Explicit initial errors, appended after the scaled family.
    #[serde(default)]
    pub initial_errors: Vec<Vec<f64>>,
    /// Number of random initial errors (log-uniform magnitude, random sign).
    #[serde(default)]
    pub random_count: usize,
    #[serde(default = "default_random_range")]
    pub random_log10_range: [f64; 2],
    #[serde(default)]
    pub noise_epsilons: Vec<f64>,
    #[serde(default = "default_noise_kind")]
    pub noise_kind: NoiseKind,
    #[serde(default = "default_noise_frequency")]
    pub noise_frequency: f64,
    /// Trailing fraction of the horizon used for steady-state amplitudes.
    #[serde(default = "default_window")]
    pub steady_window: f64,
}

fn default_random_range() -> [f64; 2] {
    [-1.0, 1.0]
}
fn default_noise_kind() -> NoiseKind {
    NoiseKind::Sinusoidal
}
fn default_noise_frequency() -> f64 {
    100.0
}
fn default_window() -> f64 {
    0.3
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            ic_base: None,
            ic_exponents: Vec::new(),
            initial_errors: Vec::new(),
            random_count: 0,
            random_log10_range: default_random_range(),
            noise_epsilons: Vec::new(),
            noise_kind: default_noise_kind(),
            noise_frequency: default_noise_frequency(),
            steady_window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssBlock {
    /// Persistent noise bound of the first probe.
    #[serde(default = "default_iss_epsilon")]
    pub epsilon: f64,
    /// Segment length of the step-decaying schedule.
    #[serde(default = "default_iss_period")]
    pub period: f64,
    #[serde(default = "default_iss_factor")]
    pub factor: f64,
    #[serde(default = "default_iss_segments")]
    pub segments: usize,
}

fn default_iss_epsilon() -> f64 {
    1e-3
}
fn default_iss_period() -> f64 {
    10.0
}
fn default_iss_factor() -> f64 {
    0.1
}
fn default_iss_segments() -> usize {
    4
}

impl Default for IssBlock {
    fn default() -> Self {
        Self {
            epsilon: default_iss_epsilon(),
            period: default_iss_period(),
            factor: default_iss_factor(),
            segments: default_iss_segments(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

fn default_signal() -> SignalSpec {
    SignalSpec::reference_example()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub differentiator: DifferentiatorBlock,
    #[serde(default)]
    pub scaling: ScalingParams,
    #[serde(default)]
    pub lyapunov: LyapunovBlock,
    #[serde(default = "default_signal")]
    pub signal: SignalSpec,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub iss: IssBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// A fully built design: injection, ladder and Lyapunov parameters after scaling.
#[derive(Debug, Clone)]
pub struct Design {
    pub differentiator: Differentiator,
    pub params: LyapunovParams,
    /// Perturbation bound used for certification (zero unless `d0 = -1`).
    pub delta: f64,
}

impl Design {
    pub fn injection(&self) -> &Injection {
        self.differentiator.injection()
    }

    pub fn ladder(&self) -> &GainLadder {
        self.differentiator.ladder()
    }

    pub fn lyapunov(&self) -> Result<LyapunovFunction, HarnessError> {
        Ok(LyapunovFunction::new(
            self.injection().clone(),
            self.params.clone(),
        )?)
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Validation(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    /// The reference third-order configuration with the given gains.
    pub fn reference() -> Self {
        Self {
            seed: 0,
            differentiator: DifferentiatorBlock {
                order: 3,
                d0: -1.0,
                dinf: 0.2,
                kappa: None,
                theta: None,
                mu: None,
                gains: Some(vec![3.0, 1.5 * 3f64.sqrt(), 1.1]),
                synthesize: false,
                boundary_layer: None,
            },
            scaling: ScalingParams::default(),
            lyapunov: LyapunovBlock::default(),
            signal: default_signal(),
            simulation: SimulationBlock {
                initial_error: Some(vec![1.0, -5.0, 1.0]),
                ..Default::default()
            },
            sweep: SweepBlock {
                ic_base: Some(vec![1.0, -5.0, 1.0]),
                ic_exponents: (-1..=7).collect(),
                noise_epsilons: vec![0.0, 1e-5, 1e-4, 1e-3, 1e-2],
                ..Default::default()
            },
            iss: IssBlock::default(),
            output: OutputBlock::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Validation(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// SHA-256 of the canonical TOML serialization, ignoring where output goes.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputBlock::default();
        let hash = Sha256::digest(canonical.to_toml_string().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn degrees(&self) -> Result<DegreeConfig, HarnessError> {
        let d = &self.differentiator;
        DegreeConfig::new(d.order, d.d0, d.dinf).map_err(|e| field("differentiator", e))
    }

    pub fn internal_gains(&self) -> Result<InternalGains, HarnessError> {
        let d = &self.differentiator;
        let n = d.order;
        let g = match (&d.mu, &d.kappa, &d.theta) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(field(
                    "differentiator.mu",
                    "give either mu or explicit kappa/theta, not both",
                ))
            }
            (Some(mu), None, None) => InternalGains::weighted(n, *mu),
            (None, k, t) => InternalGains::new(
                k.clone().unwrap_or_else(|| vec![1.0; n]),
                t.clone().unwrap_or_else(|| vec![1.0; n]),
            ),
        };
        let g = g.map_err(|e| field("differentiator.kappa/theta", e))?;
        if g.len() != n {
            return Err(field(
                "differentiator.kappa/theta",
                format!("expected {n} entries, got {}", g.len()),
            ));
        }
        Ok(g)
    }

    pub fn integration(&self) -> Result<IntegrationSettings, HarnessError> {
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.t_final > s.dt && s.record_every >= 1) {
            return Err(field(
                "simulation",
                format!(
                    "need 0 < dt < t_final and record_every >= 1 (dt = {}, t_final = {}, record_every = {})",
                    s.dt, s.t_final, s.record_every
                ),
            ));
        }
        if !(s.threshold > 0.0) {
            return Err(field("simulation.threshold", "must be positive"));
        }
        Ok(IntegrationSettings::new(s.dt, s.t_final, s.record_every))
    }

    pub fn lyapunov_params(&self, degrees: &DegreeConfig) -> Result<LyapunovParams, HarnessError> {
        let w = compute_weights(degrees)?;
        let mut p = LyapunovParams::with_defaults(&w);
        let l = &self.lyapunov;
        if let Some(p0) = l.p0 {
            p.p0 = p0;
        }
        if let Some(pinf) = l.pinf {
            p.pinf = pinf;
        }
        if let Some(b) = &l.beta0 {
            p.beta0 = b.clone();
        }
        if let Some(b) = &l.betainf {
            p.betainf = b.clone();
        }
        let n = degrees.order;
        if p.beta0.len() != n || p.betainf.len() != n {
            return Err(field(
                "lyapunov.beta0/betainf",
                format!("expected {n} entries"),
            ));
        }
        let check = check_p(p.p0, p.pinf, &w);
        if !check.ok {
            return Err(field("lyapunov.p0/pinf", check.diagnostics.join("; ")));
        }
        Ok(p)
    }

    pub fn certify_settings(&self) -> CertifySettings {
        CertifySettings {
            plan: SamplingPlan::coarse(self.lyapunov.directions),
            denominator_floor: self.lyapunov.denominator_floor,
            ..Default::default()
        }
    }

    pub fn synthesis_settings(&self) -> SynthesisSettings {
        SynthesisSettings {
            plan: SamplingPlan::coarse(self.lyapunov.directions),
            certify: self.certify_settings(),
            ..Default::default()
        }
    }

    /// Perturbation bound certified for this configuration.
    pub fn certified_delta(&self) -> f64 {
        if self.differentiator.d0 == -1.0 {
            self.signal.delta
        } else {
            0.0
        }
    }

    /// Validates every block and builds the (scaled) design from an explicit ladder.
    pub fn design_with_ladder(&self, ladder: GainLadder) -> Result<Design, HarnessError> {
        let degrees = self.degrees()?;
        let gains = self.internal_gains()?;
        self.integration()?;
        let n = degrees.order;
        if ladder.len() != n {
            return Err(field(
                "differentiator.gains",
                format!("expected {n} entries, got {}", ladder.len()),
            ));
        }
        let scaling = ScalingParams::new(self.scaling.alpha, self.scaling.l)
            .map_err(|e| field("scaling", e))?;
        let (gains, ladder) = scale_gains(&degrees, &gains, &ladder, scaling)?;
        let delta = self.certified_delta();
        if degrees.is_discontinuous() {
            self.signal
                .check_delta(n, self.simulation.t_final)
                .map_err(|e| field("signal.delta", e))?;
        }
        let check = validate_ladder(&degrees, &gains, &ladder, delta);
        if !check.ok {
            return Err(field("differentiator.gains", check.diagnostics.join("; ")));
        }
        if let Some(nz) = &self.signal.noise {
            if !(nz.epsilon >= 0.0 && nz.epsilon.is_finite()) {
                return Err(field("signal.noise.epsilon", "must be nonnegative"));
            }
        }
        let params = self.lyapunov_params(&degrees)?;
        let injection = Injection::new(degrees, gains)?;
        let mut differentiator = Differentiator::new(injection, ladder)?;
        if let Some(w) = self.differentiator.boundary_layer {
            differentiator = differentiator
                .with_boundary_layer(w)
                .map_err(|e| field("differentiator.boundary_layer", e))?;
        }
        Ok(Design {
            differentiator,
            params,
            delta,
        })
    }

    /// Builds the design from the configured gains.
    pub fn design(&self) -> Result<Design, HarnessError> {
        let gains = self.differentiator.gains.clone().ok_or_else(|| {
            field(
                "differentiator.gains",
                "missing (set gains or request synthesis)",
            )
        })?;
        let ladder = GainLadder::from_k(gains).map_err(|e| field("differentiator.gains", e))?;
        self.design_with_ladder(ladder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips_through_toml() {
        let c = ExperimentConfig::reference();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.digest(), back.digest());
        assert_eq!(c.digest().len(), 64);
    }

    #[test]
    fn minimal_document_uses_defaults() {
        let c = ExperimentConfig::from_toml_str(
            r#"
            [differentiator]
            order = 2
            d0 = 0.0
            dinf = 0.0
            gains = [1.0, 1.0]
            "#,
        )
        .unwrap();
        assert_eq!(c.simulation.dt, 1e-4);
        assert_eq!(c.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str(
            "[differentiator]\norder = 2\nd0 = 0.0\ndinf = 0.0\ngain = [1.0]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("gain"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = ExperimentConfig::reference();
        c.differentiator.gains = Some(vec![1e-6; 3]);
        let err = c.design().unwrap_err().to_string();
        assert!(err.contains("differentiator.gains"), "{err}");
        let mut c = ExperimentConfig::reference();
        c.differentiator.dinf = 0.6;
        assert!(c
            .design()
            .unwrap_err()
            .to_string()
            .contains("differentiator"));
        let mut c = ExperimentConfig::reference();
        c.signal.delta = 0.1;
        assert!(c.design().unwrap_err().to_string().contains("signal.delta"));
    }

    #[test]
    fn scaling_is_applied() {
        let mut c = ExperimentConfig::reference();
        c.scaling = ScalingParams::new(1.0, 2.0).unwrap();
        let d = c.design().unwrap();
        assert!((d.ladder().k[0] - 6.0).abs() < 1e-12);
    }
}
