use thiserror::Error;

/// Errors raised by graph construction, covariance evaluation, risk
/// computation and the simulation oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph size: n = {0} (need n >= 2)")]
    InvalidSize(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("weights are not a valid symmetric zero-diagonal matrix: {0}")]
    InvalidWeights(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error(
        "delay margin violated: tau = {tau} >= pi / (2 lambda_max) = {limit} \
         (no steady state exists)"
    )]
    Unstable { tau: f64, limit: f64 },

    #[error("agent index {index} out of range for n = {n}")]
    AgentIndex { index: usize, n: usize },

    #[error("conditioning agent {0} on itself")]
    SelfConditioning(usize),

    #[error("simulation configuration: {0}")]
    SimConfig(String),

    #[error("trajectory diverged at t = {time} (|y|_inf = {norm:e})")]
    Diverged { time: f64, norm: f64 },

    #[error("insufficient samples: {accepted} accepted out of {drawn}")]
    InsufficientSamples { accepted: usize, drawn: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
