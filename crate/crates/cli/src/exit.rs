//! Exit codes and the error type that carries them.

use std::fmt;
use std::process::ExitCode;

use mrplan_core::decode::DecodeError;
use mrplan_core::episode::FailureReason;
use mrplan_core::graph::GraphError;
use mrplan_core::metrics::MetricsError;
use mrplan_core::world::ConfigError;
use mrplan_core::ScorerError;

/// Process exit status. `Other` covers I/O failures outside the documented set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Other = 1,
    Config = 2,
    Decode = 3,
    Cyclic = 4,
    Backend = 5,
    Deadlock = 6,
    EmptyTrials = 7,
    RetryExhausted = 8,
    GoalNotMet = 9,
}

impl From<Code> for ExitCode {
    fn from(c: Code) -> Self {
        ExitCode::from(c as u8)
    }
}

/// An error with a documented exit code and a short type name for the
/// first line of the diagnostic.
#[derive(Debug)]
pub struct Coded {
    pub code: Code,
    pub name: &'static str,
    pub message: String,
}

impl Coded {
    pub fn new(code: Code, name: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            name,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Code::Config, "ConfigError", message)
    }
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.message)
    }
}

impl std::error::Error for Coded {}

impl From<ConfigError> for Coded {
    fn from(e: ConfigError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<ScorerError> for Coded {
    fn from(e: ScorerError) -> Self {
        let (code, name) = match &e {
            ScorerError::BackendUnavailable(_) => (Code::Backend, "BackendUnavailable"),
            ScorerError::ScoringMismatch(_) => (Code::Backend, "ScoringMismatch"),
            ScorerError::NoScriptedCompletion(_) => (Code::Config, "NoScriptedCompletion"),
            ScorerError::InvalidRequest(_) => (Code::Config, "InvalidRequest"),
        };
        Self::new(code, name, e.to_string())
    }
}

impl From<DecodeError> for Coded {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Scorer(s) => s.into(),
            DecodeError::DecodeOverflow { .. } => Self::new(Code::Decode, "DecodeOverflow", e.to_string()),
            DecodeError::NoDoneCandidate => Self::new(Code::Config, "NoDoneCandidate", e.to_string()),
        }
    }
}

impl From<GraphError> for Coded {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Scorer(s) => s.into(),
            GraphError::CyclicAfterRetries { .. } => Self::new(Code::Cyclic, "CyclicAfterRetries", e.to_string()),
            _ => Self::new(Code::Cyclic, "InvalidDependencies", e.to_string()),
        }
    }
}

impl From<MetricsError> for Coded {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::EmptyTrials => Self::new(Code::EmptyTrials, "EmptyTrials", e.to_string()),
            MetricsError::InvalidTrial(_) => Self::new(Code::Config, "InvalidTrial", e.to_string()),
        }
    }
}

pub fn failure_code(reason: FailureReason) -> Code {
    match reason {
        FailureReason::DecodeOverflow | FailureReason::EmptyPlan => Code::Decode,
        FailureReason::InvalidDependencies | FailureReason::CyclicAfterRetries => Code::Cyclic,
        FailureReason::BackendUnavailable | FailureReason::ScoringMismatch => Code::Backend,
        FailureReason::InvalidScript => Code::Config,
        FailureReason::Deadlock => Code::Deadlock,
        FailureReason::RetryExhausted => Code::RetryExhausted,
        FailureReason::GoalNotMet => Code::GoalNotMet,
    }
}

/// Exit code for an arbitrary error: the first [`Coded`] in its chain, else 1.
pub fn code_of(e: &anyhow::Error) -> Code {
    e.chain()
        .find_map(|c| c.downcast_ref::<Coded>())
        .map_or(Code::Other, |c| c.code)
}
