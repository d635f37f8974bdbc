use thiserror::Error;

/// Harness failures, grouped by process exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("certification failure: {0}")]
    Certification(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::Io(_) => 1,
            Self::Certification(_) | Self::Convergence(_) => 2,
            Self::Divergence(_) => 3,
        }
    }
}

impl From<fxdiff_core::Error> for HarnessError {
    fn from(e: fxdiff_core::Error) -> Self {
        use fxdiff_core::Error as E;
        match e {
            E::InvalidConfig(_)
            | E::IndexOutOfRange { .. }
            | E::PerturbationTooLarge { .. }
            | E::Signal(_) => Self::Validation(e.to_string()),
            E::Diverged { .. } => Self::Divergence(e.to_string()),
            E::NotCertified { .. }
            | E::SynthesisFailed { .. }
            | E::BoundAnomaly(_)
            | E::InverseNotConverged { .. } => Self::Certification(e.to_string()),
        }
    }
}
