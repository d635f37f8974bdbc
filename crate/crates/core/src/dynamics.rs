//! Right-hand sides of the differentiator and of its normalized error
//! system, and a fixed-step forward-Euler integrator.
//!
//! In the discontinuous case the sign term is evaluated single-valued with
//! `sign(0) = 0`. An optional boundary layer replaces it by a saturation;
//! it is off unless requested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::GainLadder;
use crate::lyapunov::LyapunovFunction;
use crate::math::{spow, Injection};
use crate::signals::SignalSpec;

/// A differentiator: injection maps together with its output-injection gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Differentiator {
    injection: Injection,
    ladder: GainLadder,
    boundary_layer: Option<f64>,
}

impl Differentiator {
    pub fn new(injection: Injection, ladder: GainLadder) -> Result<Self> {
        if ladder.len() != injection.order() {
            return Err(Error::InvalidConfig(format!(
                "gain ladder has {} entries, order is {}",
                ladder.len(),
                injection.order()
            )));
        }
        Ok(Self {
            injection,
            ladder,
            boundary_layer: None,
        })
    }

    /// Replaces `sign(s)` by `clamp(s / width, -1, 1)` in the last stage.
    pub fn with_boundary_layer(mut self, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "boundary layer width {width} must be positive"
            )));
        }
        self.boundary_layer = Some(width);
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.injection.order()
    }

    pub fn injection(&self) -> &Injection {
        &self.injection
    }

    pub fn ladder(&self) -> &GainLadder {
        &self.ladder
    }

    /// `phi_i(z)` for all stages, honoring the boundary-layer option.
    pub fn injection_terms(&self, z: f64, out: &mut [f64]) {
        let n = self.order();
        match self.boundary_layer {
            Some(width) if self.injection.exponents(n).0 == 0.0 => {
                let mut acc = z;
                for (j, slot) in out.iter_mut().enumerate().take(n - 1) {
                    acc = self.injection.varphi(j + 1, acc);
                    *slot = acc;
                }
                let g = self.injection.gains();
                let (_, high) = self.injection.exponents(n);
                out[n - 1] = g.kappa[n - 1] * (acc / width).clamp(-1.0, 1.0)
                    + g.theta[n - 1] * spow(acc, high);
            }
            _ => self.injection.phi_all(z, out),
        }
    }

    /// `x_i' = -k_i phi_i(x_1 - f) + x_{i+1}`, `x_n' = -k_n phi_n(x_1 - f)`.
    pub fn rhs(&self, x: &[f64], f: f64, out: &mut [f64]) {
        let n = self.order();
        self.injection_terms(x[0] - f, out);
        let k = &self.ladder.k;
        for i in 0..n {
            let next = if i + 1 < n { x[i + 1] } else { 0.0 };
            out[i] = -k[i] * out[i] + next;
        }
    }

    /// `z_i' = -kt_i (phi_i(z_1 - nu) - z_{i+1})`, `z_n' = -kt_n (phi_n(z_1 - nu) - delta_bar)`.
    pub fn error_rhs(&self, z: &[f64], nu: f64, delta_bar: f64, out: &mut [f64]) {
        let n = self.order();
        self.injection_terms(z[0] - nu, out);
        let kt = &self.ladder.ktilde;
        for i in 0..n {
            let next = if i + 1 < n { z[i + 1] } else { delta_bar };
            out[i] = -kt[i] * (out[i] - next);
        }
    }
}

/// Differentiation error `e_i = x_i - f0^{(i-1)}` and its normalization
/// `z_i = e_i / k_{i-1}` (`k_0 = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub e: Vec<f64>,
    pub z: Vec<f64>,
}

impl ErrorState {
    pub fn from_e(e: &[f64], ladder: &GainLadder) -> Self {
        let z = e
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 0 { *v } else { v / ladder.k[i - 1] })
            .collect();
        Self { e: e.to_vec(), z }
    }

    pub fn from_z(z: &[f64], ladder: &GainLadder) -> Self {
        let e = z
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 0 { *v } else { v * ladder.k[i - 1] })
            .collect();
        Self { e, z: z.to_vec() }
    }
}

/// Which coordinates are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsKind {
    /// Differentiator states `x`.
    Full,
    /// Normalized error `z`.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_final: 20.0,
            record_every: 10,
        }
    }
}

impl IntegrationSettings {
    pub fn new(dt: f64, t_final: f64, record_every: usize) -> Self {
        Self {
            dt,
            t_final,
            record_every,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t_final = {} must be positive",
                self.t_final
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig(
                "record_every must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// A recorded state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// Integrated coordinates (`x` or `z`).
    pub state: Vec<f64>,
    /// Differentiation error `e`.
    pub e: Vec<f64>,
    pub norm_e: f64,
    pub v: Option<f64>,
}

/// Uniformly decimated record of one integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: RhsKind,
    pub dt: f64,
    pub record_every: usize,
    pub samples: Vec<Sample>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Trajectory {
    pub fn final_sample(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Per-component `max |e_i|` over samples with `t >= from`.
    pub fn max_abs_error_after(&self, from: f64) -> Vec<f64> {
        let n = self.samples.first().map_or(0, |s| s.e.len());
        let mut out = vec![0.0f64; n];
        for s in self.samples.iter().filter(|s| s.t >= from) {
            for (o, v) in out.iter_mut().zip(&s.e) {
                *o = o.max(v.abs());
            }
        }
        out
    }
}

/// Initial differentiator state `x(0) = e0 + [f0, f0', ...](0)`.
pub fn initial_state_from_error(e0: &[f64], signal: &SignalSpec) -> Vec<f64> {
    let mut d = vec![0.0; e0.len()];
    signal.derivatives(0.0, &mut d);
    e0.iter().zip(d).map(|(e, f)| e + f).collect()
}

/// Divergence guard factor applied to `1 + |initial state|`.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// Explicit forward-Euler integration at fixed step.
///
/// Noise is sampled once per step and held over it. A sample is recorded
/// every `record_every` steps; `V` is attached when a Lyapunov function is given.
pub fn integrate(
    diff: &Differentiator,
    kind: RhsKind,
    initial: &[f64],
    signal: &SignalSpec,
    settings: &IntegrationSettings,
    lyapunov: Option<&LyapunovFunction>,
) -> Result<Trajectory> {
    settings.validate()?;
    let n = diff.order();
    if initial.len() != n {
        return Err(Error::InvalidConfig(format!(
            "initial state has {} entries, order is {n}",
            initial.len()
        )));
    }
    let ladder = diff.ladder();
    let kn = ladder.k[n - 1];
    let limit = DIVERGENCE_FACTOR * (1.0 + norm(initial));
    let steps = settings.steps();
    let mut state = initial.to_vec();
    let mut rate = vec![0.0; n];
    let mut derivs = vec![0.0; n];
    let mut samples = Vec::with_capacity(steps / settings.record_every + 1);

    let mut record = |t: f64, state: &[f64], samples: &mut Vec<Sample>| {
        let e = match kind {
            RhsKind::Full => {
                signal.derivatives(t, &mut derivs);
                state
                    .iter()
                    .zip(&derivs)
                    .map(|(x, d)| x - d)
                    .collect::<Vec<_>>()
            }
            RhsKind::Error => ErrorState::from_z(state, ladder).e,
        };
        let v = lyapunov.map(|lf| {
            let z = match kind {
                RhsKind::Full => ErrorState::from_e(&e, ladder).z,
                RhsKind::Error => state.to_vec(),
            };
            lf.value(&z).unwrap_or(f64::NAN)
        });
        samples.push(Sample {
            t,
            state: state.to_vec(),
            norm_e: norm(&e),
            e,
            v,
        });
    };

    record(0.0, &state, &mut samples);
    for step in 0..steps {
        let t = step as f64 * settings.dt;
        match kind {
            RhsKind::Full => diff.rhs(&state, signal.measured(t), &mut rate),
            RhsKind::Error => diff.error_rhs(
                &state,
                signal.noise_at(t),
                signal.perturbation(t, n) / kn,
                &mut rate,
            ),
        }
        for (s, r) in state.iter_mut().zip(&rate) {
            *s += settings.dt * r;
        }
        let size = norm(&state);
        if !size.is_finite() || size > limit {
            return Err(Error::Diverged {
                t: t + settings.dt,
                norm: size,
                limit,
                last_state: samples.last().map(|s| s.state.clone()).unwrap_or_default(),
            });
        }
        if (step + 1) % settings.record_every == 0 {
            record((step + 1) as f64 * settings.dt, &state, &mut samples);
        }
    }
    Ok(Trajectory {
        kind,
        dt: settings.dt,
        record_every: settings.record_every,
        samples,
    })
}

/// Runs the full differentiator from the initial error `e0`.
pub fn simulate_from_error(
    diff: &Differentiator,
    e0: &[f64],
    signal: &SignalSpec,
    settings: &IntegrationSettings,
    lyapunov: Option<&LyapunovFunction>,
) -> Result<Trajectory> {
    let x0 = initial_state_from_error(e0, signal);
    integrate(diff, RhsKind::Full, &x0, signal, settings, lyapunov)
}

/// Earliest recorded time after which `|e(t)| <= threshold` for every
/// remaining sample; `None` when the final sample is still above it.
pub fn measure_convergence_time(traj: &Trajectory, threshold: f64) -> Option<f64> {
    let samples = &traj.samples;
    match samples.iter().rposition(|s| !(s.norm_e <= threshold)) {
        None => samples.first().map(|s| s.t),
        Some(last) if last + 1 < samples.len() => Some(samples[last + 1].t),
        Some(_) => None,
    }
}
