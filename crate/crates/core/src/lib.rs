//! Arbitrary-order fixed-time differentiators built from bl-homogeneous
//! injection maps.
//!
//! - [`math`]: weights, injection maps and their inverses.
//! - [`dynamics`]: differentiator and error-system right-hand sides, integration.
//! - [`lyapunov`]: Lyapunov function, worst-case derivative, decay certificates.
//! - [`gains`]: gain ladders, rescaling and synthesis.
//! - [`signals`]: test signals, perturbation bounds and measurement noise.
//! - [`sampling`]: sample points on dilated spheres.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod gains;
pub mod lyapunov;
pub mod math;
pub mod sampling;
pub mod signals;

pub use dynamics::{
    integrate, measure_convergence_time, simulate_from_error, Differentiator, ErrorState,
    IntegrationSettings, RhsKind, Sample, Trajectory,
};
pub use error::{Error, Result};
pub use gains::{
    design_for_targets, scale_gains, synthesize_gains, validate_ladder, GainLadder, LadderCheck,
    ScalingParams, SynthesisReport, SynthesisSettings,
};
pub use lyapunov::{
    check_p, default_p, fixed_time_bound, CertifySettings, DecayCertificate, LyapunovFunction,
    LyapunovParams,
};
pub use math::{compute_weights, DegreeConfig, Injection, InternalGains, WeightVectors};
pub use sampling::SamplingPlan;
pub use signals::{BaseSignal, NoiseKind, NoiseSpec, SignalClass, SignalSpec, Sinusoid};
