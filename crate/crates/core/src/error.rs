use thiserror::Error;

/// Errors raised by the differentiator library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration value violates a structural bound.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An index outside the admissible range was supplied.
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    /// The bracketing inverse did not reach tolerance within the iteration cap.
    #[error(
        "inverse of varphi_{index} at y = {target:e} did not converge in {iterations} iterations"
    )]
    InverseNotConverged {
        index: usize,
        target: f64,
        iterations: usize,
    },

    /// The integrator state left the divergence guard or became non-finite.
    #[error("integration diverged at t = {t}: |state| = {norm:e} exceeds {limit:e}")]
    Diverged {
        t: f64,
        norm: f64,
        limit: f64,
        last_state: Vec<f64>,
    },

    /// Sampled points violated the Lyapunov decrease condition; `z` is the
    /// worst of them relative to `V^a + V^b`.
    #[error("certificate failed at {violations} samples; worst W* = {w_star:e} >= 0 at z = {z:?}")]
    NotCertified {
        z: Vec<f64>,
        w_star: f64,
        violations: usize,
    },

    /// The sampled gain ratio kept growing towards the edge of the radius range.
    #[error("gain synthesis failed at index {index}: {detail}")]
    SynthesisFailed { index: usize, detail: String },

    /// Perturbation bound is not dominated by the discontinuous injection.
    #[error("perturbation bound {delta} is not below k_n * kappa_n = {bound}")]
    PerturbationTooLarge { delta: f64, bound: f64 },

    /// Non-positive or otherwise invalid bound from the fixed-time formula.
    #[error("fixed-time bound anomaly: {0}")]
    BoundAnomaly(String),

    /// Signal evaluation or signal bookkeeping problem.
    #[error("signal: {0}")]
    Signal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
