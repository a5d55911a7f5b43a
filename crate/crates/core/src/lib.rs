//! Distributionally robust cascading-failure risk for multi-agent
//! rendezvous over time-delayed consensus networks.
//!
//! The agents run `dx = -L x(t - τ) dt + b dw` on a weighted undirected
//! graph with Laplacian `L`. Their deviations from the network average,
//! `y = (I - 𝟙𝟙ᵀ/n) x`, settle to a zero-mean normal whose covariance is
//! known in closed form ([`statistics`]). When one agent's deviation lands in
//! a tail `|y_i| > δ + c`, [`risk`] gives the worst-case expected deviation
//! of every other agent over an ambiguity set of noise intensities, and the
//! resulting cascading risk. [`oracle`] provides independent simulation and
//! quadrature checks of those closed forms.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod oracle;
pub mod quadrature;
pub mod risk;
pub mod special;
pub mod statistics;

pub use error::{Error, Result};
pub use graph::{
    build_complete, build_path, build_pcycle, spectrum, Laplacian, Spectrum, Topology,
    WeightedGraph,
};
pub use risk::{
    complete_graph_risk, conditional_expectation, dr_cascading_risk, korotkov_identity_check,
    risk_vector, single_agent_risk, sup_conditional_expectation, AmbiguitySpec, Convention,
    FailureEvent, RiskVector,
};
pub use special::erf_h;
pub use statistics::{
    f_curve, lambda_bar, stability_margin, steady_state_covariance, CovModel, NetworkParams,
};
