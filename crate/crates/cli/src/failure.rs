//! Exit-code contract. Every failure carries the stage that produced it.

use delaykit::continuation::{ContinuationError, StopReason};
use delaykit::integrator::IntegrationError;
use delaykit::lyapunov::LyapunovError;
use delaykit::model::{ModelError, ModelFileError};
use delaykit::system::SystemError;

pub const FAILURE: u8 = 1;
pub const PARSE: u8 = 2;
pub const VALIDATION: u8 = 3;
pub const DELAY: u8 = 4;
pub const INTEGRATION: u8 = 5;
pub const STEP_UNDERFLOW: u8 = 6;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub stage: &'static str,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, Failure>;

impl Failure {
    pub fn new(code: u8, stage: &'static str, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            stage,
            error: error.into(),
        }
    }

    pub fn validation(stage: &'static str, msg: impl std::fmt::Display) -> Self {
        Failure::new(VALIDATION, stage, anyhow::anyhow!("{msg}"))
    }
}

/// Attach a stage and exit code to any error.
pub trait Staged<T> {
    fn stage(self, code: u8, stage: &'static str) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Staged<T> for Result<T, E> {
    fn stage(self, code: u8, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| Failure::new(code, stage, e))
    }
}

pub fn model_code(e: &ModelError) -> u8 {
    if e.is_syntax() {
        PARSE
    } else {
        VALIDATION
    }
}

pub fn model_file_code(e: &ModelFileError) -> u8 {
    match e {
        ModelFileError::Io(_) => FAILURE,
        e if e.is_syntax() => PARSE,
        _ => VALIDATION,
    }
}

pub fn system_code(e: &SystemError) -> u8 {
    match e {
        SystemError::Delay { .. } => DELAY,
        SystemError::NonFinite(_) => INTEGRATION,
        _ => VALIDATION,
    }
}

pub fn integration_code(e: &IntegrationError) -> u8 {
    match e {
        IntegrationError::System(s) => system_code(s),
        IntegrationError::InvalidConfig(_) => VALIDATION,
        _ => INTEGRATION,
    }
}

pub fn continuation_code(e: &ContinuationError) -> u8 {
    match e {
        e if e.is_delay_violation() => DELAY,
        ContinuationError::InvalidConfig(_) => VALIDATION,
        ContinuationError::System(s) => system_code(s),
        ContinuationError::Integration(i) => integration_code(i),
        _ => FAILURE,
    }
}

pub fn lyapunov_code(e: &LyapunovError) -> u8 {
    match e {
        LyapunovError::InvalidConfig(_) => VALIDATION,
        LyapunovError::DegenerateBasis { .. } => INTEGRATION,
        LyapunovError::Integration(i) => integration_code(i),
    }
}

/// Exit code of a branch that was computed and written.
pub fn stop_code(stop: StopReason) -> u8 {
    match stop {
        StopReason::MaxPoints | StopReason::User => 0,
        StopReason::DelayGuard => DELAY,
        StopReason::StepUnderflow => STEP_UNDERFLOW,
    }
}
