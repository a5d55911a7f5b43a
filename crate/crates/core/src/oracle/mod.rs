//! Ground-truth generators that do not share code paths with the closed
//! forms: an Euler–Maruyama simulator for the delayed consensus SDE, and
//! direct quadrature / Monte-Carlo estimates of the bivariate conditional
//! expectation.

mod bivariate;
mod sim;
mod summation;

pub use bivariate::{
    bivariate_pdf, mc_conditional_expectation, mc_tail_conditional_expectation,
    quadrature_conditional_expectation,
};
pub use sim::{
    empirical_observable_covariance, simulate_delay_sde, simulate_replica, CondExpEstimate,
    CondQuery, EmpiricalStats, SimConfig, Trajectory, DIVERGENCE_THRESHOLD,
};
pub use summation::CompensatedSum;
