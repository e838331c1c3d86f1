use thiserror::Error;

use crate::diagnostics::DiagnosticsError;
use crate::model::ModelError;
use crate::propagator::PropagationError;
use crate::sampler::SamplerError;

/// Harness failures. Each class maps to its own process exit code:
///
/// | code | class |
/// |------|-------|
/// | 2 | config does not parse (syntax, unknown key, wrong type) |
/// | 3 | config parses but violates an invariant |
/// | 4 | unknown scenario, or verb unsupported for the scenario |
/// | 5 | numerical failure (caustic, normalization loss, NaN, ...) |
/// | 6 | filesystem error |
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error("io error: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) => 2,
            Self::Validation(_) => 3,
            Self::UnsupportedScenario(_) => 4,
            Self::Numerics(_) => 5,
            Self::Io(_) => 6,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

macro_rules! numerics_from {
    ($($t:ty),*) => {$(
        impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                Self::Numerics(e.to_string())
            }
        }
    )*};
}

numerics_from!(PropagationError, SamplerError, DiagnosticsError, ModelError);
