//! Distributionally robust cascading risk.
//!
//! Agent `i` has failed: its observable sits in the two-sided tail
//! `|y_i| > δ̄` with `δ̄ = δ + c`. The quantity of interest is the worst case,
//! over an ambiguity set of zero-mean normals around the nominal covariance,
//! of `E[|y_j| given |y_i| > δ̄]`, minus the tolerance `c` and floored at zero.
//!
//! For a bivariate normal with standard deviations `σ_i, σ_j` and correlation
//! `ρ` (`ρ' = sqrt(1 - ρ²)`, `d = δ̄ / (sqrt 2 σ_i)`):
//!
//! ```text
//! E = sqrt(2/π) σ_j / erfc(d) · [erfc(d/ρ') + ρ erf(ρ d/ρ') exp(-d²)]
//! ```
//!
//! Every admissible covariance in the ambiguity set is the nominal one times
//! a common factor (the noise enters as `b²` only), so `ρ` is fixed and the
//! supremum is a one-dimensional search over that factor.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::special::{erf_h, erfc, erfcx, gaussian_tail_ratio};
use crate::statistics::{CovModel, NetworkParams};

/// Correlations this close to ±1 use the perfectly-correlated limit.
pub const RHO_LIMIT: f64 = 1.0 - 1e-9;

/// Grid resolution of the scale search.
pub const SCALE_GRID: usize = 257;

fn sqrt_2_over_pi() -> f64 {
    (2.0 / PI).sqrt()
}

/// Failure of agent `failed_agent` (0-based): `|y_i| > δ + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    failed_agent: usize,
    delta: f64,
    c: f64,
    delta_bar: f64,
}

impl FailureEvent {
    pub fn new(failed_agent: usize, delta: f64, c: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "deviation delta = {delta} must be >= 0"
            )));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance c = {c} must be > 0"
            )));
        }
        Ok(Self {
            failed_agent,
            delta,
            c,
            delta_bar: delta + c,
        })
    }

    pub fn failed_agent(&self) -> usize {
        self.failed_agent
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Threshold `δ̄ = δ + c`.
    pub fn delta_bar(&self) -> f64 {
        self.delta_bar
    }
}

/// How the radius `ε` acts on the nominal statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Standard deviations scale by `s ∈ [1-ε, 1+ε]`. The uncorrelated
    /// closed form then carries the factor `(1+ε)`.
    #[default]
    StdScale,
    /// Covariance entries scale by `u ∈ [1-ε, 1+ε]`, so standard deviations
    /// scale by `sqrt(u)`.
    VarScale,
}

impl std::fmt::Display for Convention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Convention::StdScale => "std_scale",
            Convention::VarScale => "var_scale",
        })
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std_scale" | "std" => Ok(Convention::StdScale),
            "var_scale" | "var" => Ok(Convention::VarScale),
            _ => Err(Error::InvalidParameter(format!("unknown convention '{s}'"))),
        }
    }
}

/// Covariance-interval ambiguity set of radius `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    epsilon: f64,
    convention: Convention,
}

impl AmbiguitySpec {
    pub fn new(epsilon: f64, convention: Convention) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {epsilon} not in [0, 1)"
            )));
        }
        Ok(Self {
            epsilon,
            convention,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Range of the common standard-deviation factor.
    pub fn scale_range(&self) -> (f64, f64) {
        let e = self.epsilon;
        match self.convention {
            Convention::StdScale => (1.0 - e, 1.0 + e),
            Convention::VarScale => ((1.0 - e).sqrt(), (1.0 + e).sqrt()),
        }
    }
}

/// Per-agent cascading risk given the failure of `failed_agent`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskVector {
    pub failed_agent: usize,
    pub values: Vec<f64>,
}

impl RiskVector {
    /// Largest minus smallest entry over agents other than the failed one.
    pub fn spread(&self) -> f64 {
        let others = self
            .values
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != self.failed_agent)
            .map(|(_, &v)| v);
        let (lo, hi) = others.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        hi - lo
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "correlation rho = {rho} outside [-1, 1]"
        )));
    }
    Ok(())
}

/// `E[|y_j| given |y_i| > δ̄]` for a zero-mean bivariate normal.
pub fn conditional_expectation(
    sigma_i: f64,
    sigma_j: f64,
    rho: f64,
    delta_bar: f64,
) -> Result<f64> {
    if !(sigma_i > 0.0 && sigma_i.is_finite()) || !(sigma_j > 0.0 && sigma_j.is_finite()) {
        return Err(Error::Domain(format!(
            "standard deviations must be positive (sigma_i = {sigma_i}, sigma_j = {sigma_j})"
        )));
    }
    check_rho(rho)?;
    if !(delta_bar >= 0.0) {
        return Err(Error::Domain(format!(
            "threshold delta_bar = {delta_bar} must be >= 0"
        )));
    }
    let d = delta_bar / (SQRT_2 * sigma_i);
    let prefactor = sqrt_2_over_pi() * sigma_j;
    if rho.abs() >= RHO_LIMIT {
        return Ok(prefactor * gaussian_tail_ratio(d));
    }
    let rho_p = (1.0 - rho * rho).sqrt();
    let a = d / rho_p;
    // erfc(a)/erfc(d) rewritten through erfcx; a >= d so the exponent is <= 0
    let tail = erfcx(a) / erfcx(d) * (d * d - a * a).exp();
    let coupling = rho * erf_h(rho * a) * gaussian_tail_ratio(d);
    Ok(prefactor * (tail + coupling))
}

/// `E[|y_j| given |y_i| > δ̄]` with both deviations scaled by `s`.
fn scaled_expectation(sigma_i: f64, sigma_j: f64, rho: f64, delta_bar: f64, s: f64) -> f64 {
    conditional_expectation(s * sigma_i, s * sigma_j, rho, delta_bar).unwrap_or(f64::NAN)
}

/// Supremum of [`conditional_expectation`] over the ambiguity set for fixed
/// nominal `σ_i, σ_j, ρ`. Returns `(value, maximising scale)`.
pub fn sup_over_scale(
    sigma_i: f64,
    sigma_j: f64,
    rho: f64,
    delta_bar: f64,
    amb: &AmbiguitySpec,
) -> Result<(f64, f64)> {
    let nominal = conditional_expectation(sigma_i, sigma_j, rho, delta_bar)?;
    let (lo, hi) = amb.scale_range();
    if hi <= lo {
        return Ok((nominal, 1.0));
    }
    let eval = |s: f64| scaled_expectation(sigma_i, sigma_j, rho, delta_bar, s);
    let step = (hi - lo) / (SCALE_GRID - 1) as f64;
    let grid: Vec<f64> = (0..SCALE_GRID)
        .map(|k| {
            if k == SCALE_GRID - 1 {
                hi
            } else {
                lo + step * k as f64
            }
        })
        .collect();
    let (mut best_s, mut best) = (1.0, nominal);
    for &s in &grid {
        let v = eval(s);
        if v > best {
            best = v;
            best_s = s;
        }
    }
    // golden-section refinement on the bracket around the grid maximum
    let k = grid.iter().position(|&s| s == best_s);
    let (mut a, mut b) = match k {
        Some(k) => (grid[k.saturating_sub(1)], grid[(k + 1).min(SCALE_GRID - 1)]),
        None => ((best_s - step).max(lo), (best_s + step).min(hi)),
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d);
        }
    }
    for (s, v) in [(c, fc), (d, fd)] {
        if v > best {
            best = v;
            best_s = s;
        }
    }
    Ok((best, best_s))
}

fn check_pair(cov: &CovModel, i: usize, j: usize) -> Result<()> {
    let n = cov.n();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::AgentIndex { index: idx, n });
        }
    }
    if i == j {
        return Err(Error::SelfConditioning(i));
    }
    Ok(())
}

/// `sup_P E[|y_j| given y_i ∈ U]` over the ambiguity set around `cov0`.
pub fn sup_conditional_expectation(
    cov0: &CovModel,
    i: usize,
    j: usize,
    fe: &FailureEvent,
    amb: &AmbiguitySpec,
) -> Result<f64> {
    check_pair(cov0, i, j)?;
    sup_over_scale(
        cov0.std(i),
        cov0.std(j),
        cov0.corr(i, j),
        fe.delta_bar(),
        amb,
    )
    .map(|(v, _)| v)
}

/// Cascading risk `R^j_i = max(sup E - c, 0)`.
pub fn dr_cascading_risk(
    cov0: &CovModel,
    i: usize,
    j: usize,
    fe: &FailureEvent,
    amb: &AmbiguitySpec,
) -> Result<f64> {
    let sup = sup_conditional_expectation(cov0, i, j, fe, amb)?;
    Ok(excess(sup, fe.c()))
}

fn excess(sup: f64, c: f64) -> f64 {
    if sup <= c {
        0.0
    } else {
        sup - c
    }
}

/// Risk of every agent given the failure in `fe`; the failed agent's own
/// entry is zero.
pub fn risk_vector(cov0: &CovModel, fe: &FailureEvent, amb: &AmbiguitySpec) -> Result<RiskVector> {
    let i = fe.failed_agent();
    let n = cov0.n();
    if i >= n {
        return Err(Error::AgentIndex { index: i, n });
    }
    let values = (0..n)
        .into_par_iter()
        .map(|j| {
            if j == i {
                Ok(0.0)
            } else {
                dr_cascading_risk(cov0, i, j, fe, amb)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RiskVector {
        failed_agent: i,
        values,
    })
}

/// Risk of agent `j` when uncorrelated with the failed agent:
/// `max(sqrt(2/π) σ_j s_max - c, 0)`.
pub fn single_agent_risk(sigma_j: f64, amb: &AmbiguitySpec, c: f64) -> Result<f64> {
    if !(sigma_j > 0.0 && sigma_j.is_finite()) {
        return Err(Error::Domain(format!(
            "sigma_j = {sigma_j} must be positive"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::Domain(format!("c = {c} must be positive")));
    }
    let (_, s_max) = amb.scale_range();
    Ok(excess(sqrt_2_over_pi() * sigma_j * s_max, c))
}

/// Cascading risk on the complete graph with uniform weight `omega`.
///
/// All agents share `σ² = (b0²/2) (n-1)/n · cos(ωnτ)/(ωn(1 - sin ωnτ))` and
/// every pair has `ρ = -1/(n-1)`.
pub fn complete_graph_risk(
    n: usize,
    omega: f64,
    params: &NetworkParams,
    fe: &FailureEvent,
    convention: Convention,
) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidSize(n));
    }
    params.validate()?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "edge weight {omega} must be positive"
        )));
    }
    let lambda = omega * n as f64;
    let x = lambda * params.tau;
    if x >= FRAC_PI_2 {
        return Err(Error::Unstable {
            tau: params.tau,
            limit: FRAC_PI_2 / lambda,
        });
    }
    let mode = x.cos() / (lambda * (1.0 - x.sin()));
    let var = 0.5 * params.b0 * params.b0 * mode * (n as f64 - 1.0) / n as f64;
    let sigma = var.sqrt();
    let rho = -1.0 / (n as f64 - 1.0);
    let amb = AmbiguitySpec::new(params.epsilon, convention)?;
    let (sup, _) = sup_over_scale(sigma, sigma, rho, fe.delta_bar(), &amb)?;
    Ok(excess(sup, fe.c()))
}

/// Both sides of `∫₀^∞ z erf(a1 z + b1) exp(-a2 z²) dz
/// = erf(b1)/(2a2) + a1/(2a2 sqrt A) exp(-a2 b1²/A) (1 - erf(a1 b1/sqrt A))`,
/// `A = a1² + a2`. The left side is integrated numerically.
pub fn korotkov_identity_check(a1: f64, b1: f64, a2: f64) -> Result<(f64, f64)> {
    if !(a2 > 0.0 && a2.is_finite()) {
        return Err(Error::Domain(format!("a2 = {a2} must be positive")));
    }
    if !(a1 >= 0.0 && a1.is_finite()) || !b1.is_finite() {
        return Err(Error::Domain(format!(
            "a1 = {a1} must be >= 0, b1 = {b1} finite"
        )));
    }
    let upper = gaussian_cutoff(a2);
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_intervals: 4000,
    };
    let lhs = integrate(
        |z| z * erf_h(a1 * z + b1) * (-a2 * z * z).exp(),
        0.0,
        upper,
        opts,
    )?
    .value;
    let big_a = a1 * a1 + a2;
    let root = big_a.sqrt();
    let rhs = erf_h(b1) / (2.0 * a2)
        + a1 / (2.0 * a2 * root) * (-a2 * b1 * b1 / big_a).exp() * erfc(a1 * b1 / root);
    Ok((lhs, rhs))
}

/// Both sides of `∫₀^∞ z exp(-a2² z²) dz = 1/(2 a2²)`.
pub fn gaussian_moment_identity_check(a2: f64) -> Result<(f64, f64)> {
    if !(a2 > 0.0 && a2.is_finite()) {
        return Err(Error::Domain(format!("a2 = {a2} must be positive")));
    }
    let k = a2 * a2;
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-14,
        max_intervals: 4000,
    };
    let lhs = integrate(|z| z * (-k * z * z).exp(), 0.0, gaussian_cutoff(k), opts)?.value;
    Ok((lhs, 1.0 / (2.0 * k)))
}

/// Smallest `Z` with `Z exp(-k Z²) < 1e-16` beyond the peak.
fn gaussian_cutoff(k: f64) -> f64 {
    let mut z = (1.0 / k).sqrt().max(1.0);
    for _ in 0..50 {
        let next = ((1e16 * z).ln() / k).sqrt();
        if (next - z).abs() < 1e-12 {
            break;
        }
        z = next;
    }
    z
}
