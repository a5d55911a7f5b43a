use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unstable network: {0}")]
    Unstable(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(cascade_risk::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn from_core(e: cascade_risk::Error) -> Self {
        use cascade_risk::Error as E;
        match e {
            E::Unstable { tau, limit } => CliError::Unstable(delay_margin_message(tau, limit)),
            E::Diverged { time, norm } => CliError::Unstable(format!(
                "simulation diverged at t = {time} (|y|_inf = {norm:e})"
            )),
            E::InvalidSize(_)
            | E::InvalidParameter(_)
            | E::Disconnected { .. }
            | E::InvalidWeights(_)
            | E::AgentIndex { .. }
            | E::SelfConditioning(_)
            | E::SimConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Core(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Unstable(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

pub fn delay_margin_message(tau: f64, limit: f64) -> String {
    format!(
        "delay margin violated: tau = {tau} but stability needs tau < pi/(2 lambda_max) = {limit}"
    )
}
