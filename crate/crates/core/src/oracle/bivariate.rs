//! Brute-force estimates of `E[|y_j| given |y_i| > δ̄]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use super::summation::CompensatedSum;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_to_infinity, QuadOptions};
use crate::special::erfc;

/// Joint density `p(y_j, y_i)` written as the marginal of `y_j` times the
/// conditional of `y_i`.
pub fn bivariate_pdf(y_j: f64, y_i: f64, sigma_i: f64, sigma_j: f64, rho: f64) -> f64 {
    let rho_p = (1.0 - rho * rho).sqrt();
    let shift = y_i - rho * sigma_i * y_j / sigma_j;
    let expo = -y_j * y_j / (2.0 * sigma_j * sigma_j)
        - shift * shift / (2.0 * rho_p * rho_p * sigma_i * sigma_i);
    expo.exp() / (2.0 * std::f64::consts::PI * rho_p * sigma_i * sigma_j)
}

fn check_args(sigma_i: f64, sigma_j: f64, rho: f64, delta_bar: f64) -> Result<()> {
    if !(sigma_i > 0.0 && sigma_j > 0.0 && sigma_i.is_finite() && sigma_j.is_finite()) {
        return Err(Error::Domain("standard deviations must be positive".into()));
    }
    if !(delta_bar >= 0.0) {
        return Err(Error::Domain(format!(
            "delta_bar = {delta_bar} must be >= 0"
        )));
    }
    if !(rho.abs() <= 1.0) {
        return Err(Error::Domain(format!("rho = {rho} outside [-1, 1]")));
    }
    Ok(())
}

/// Nested adaptive quadrature of `|y_j| p(y_j, y_i)` over
/// `y_i ∈ (-∞, -δ̄) ∪ (δ̄, ∞)`, divided by `P(|y_i| > δ̄) = erfc(δ̄/(√2 σ_i))`.
///
/// Works in standardised coordinates `u = y_i/σ_i`, `v = y_j/σ_j`; both
/// tails and both signs of `v` are integrated separately.
pub fn quadrature_conditional_expectation(
    sigma_i: f64,
    sigma_j: f64,
    rho: f64,
    delta_bar: f64,
) -> Result<f64> {
    check_args(sigma_i, sigma_j, rho, delta_bar)?;
    if rho.abs() > 1.0 - 1e-9 {
        return Err(Error::Domain(
            "quadrature is singular for |rho| -> 1; use the analytic limit".into(),
        ));
    }
    let threshold = delta_bar / sigma_i;
    // Both integrands are nonnegative and the tail mass can be ~1e-9, so
    // only relative tolerances are meaningful.
    let inner_opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        max_intervals: 2000,
    };
    let outer_opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-11,
        max_intervals: 2000,
    };
    // ∫ |v| p(v, u) dv, split at v = 0
    let inner = |u: f64| -> f64 {
        let f_pos = |v: f64| v * bivariate_pdf(v, u, 1.0, 1.0, rho);
        let f_neg = |v: f64| v * bivariate_pdf(-v, u, 1.0, 1.0, rho);
        let pos = integrate_to_infinity(f_pos, 0.0, inner_opts).map(|r| r.value);
        let neg = integrate_to_infinity(f_neg, 0.0, inner_opts).map(|r| r.value);
        match (pos, neg) {
            (Ok(p), Ok(n)) => p + n,
            _ => f64::NAN,
        }
    };
    let upper = integrate_to_infinity(inner, threshold, outer_opts)?.value;
    let lower = integrate_to_infinity(|t| inner(-t), threshold, outer_opts)?.value;
    let numerator = upper + lower;
    if !numerator.is_finite() {
        return Err(Error::Quadrature("inner integral failed".into()));
    }
    let prob = erfc(threshold / std::f64::consts::SQRT_2);
    if prob <= 0.0 {
        return Err(Error::Quadrature("tail probability underflows".into()));
    }
    Ok(sigma_j * numerator / prob)
}

const MC_CHUNKS: u64 = 64;

/// Conditional sample mean of `|y_j|` over bivariate normal draws with
/// `|y_i| > δ̄`. Returns `(estimate, standard error)`.
pub fn mc_conditional_expectation(
    sigma_i: f64,
    sigma_j: f64,
    rho: f64,
    delta_bar: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_args(sigma_i, sigma_j, rho, delta_bar)?;
    if samples < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 1e4 samples, got {samples}"
        )));
    }
    let rho_p = (1.0 - rho * rho).max(0.0).sqrt();
    let per_chunk = samples as u64 / MC_CHUNKS;
    let extra = samples as u64 % MC_CHUNKS;
    let parts: Vec<(usize, CompensatedSum, CompensatedSum)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let draws = per_chunk + u64::from(c < extra);
            let mut accepted = 0usize;
            let mut s1 = CompensatedSum::default();
            let mut s2 = CompensatedSum::default();
            for _ in 0..draws {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let yi = sigma_i * z1;
                if yi.abs() > delta_bar {
                    let yj = (sigma_j * (rho * z1 + rho_p * z2)).abs();
                    accepted += 1;
                    s1.add(yj);
                    s2.add(yj * yj);
                }
            }
            (accepted, s1, s2)
        })
        .collect();
    let accepted: usize = parts.iter().map(|p| p.0).sum();
    if accepted < 2 {
        return Err(Error::InsufficientSamples {
            accepted,
            drawn: samples,
        });
    }
    let mut s1 = CompensatedSum::default();
    let mut s2 = CompensatedSum::default();
    for (_, a, b) in &parts {
        s1.merge(a);
        s2.merge(b);
    }
    let m = accepted as f64;
    let mean = s1.value() / m;
    let var = (s2.value() / m - mean * mean) * m / (m - 1.0);
    Ok((mean, (var.max(0.0) / m).sqrt()))
}

/// Monte-Carlo estimate that samples the conditioning event directly.
///
/// `|z_i|` is drawn from the standard normal tail beyond `delta_bar / sigma_i`
/// by exponential-proposal rejection, given a random sign, and `y_j` is then
/// drawn from its conditional normal. Every draw lands in the event, so this
/// stays usable at thresholds where [`mc_conditional_expectation`] would
/// accept nothing.
pub fn mc_tail_conditional_expectation(
    sigma_i: f64,
    sigma_j: f64,
    rho: f64,
    delta_bar: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_args(sigma_i, sigma_j, rho, delta_bar)?;
    if samples < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 1e4 samples, got {samples}"
        )));
    }
    let t = delta_bar / sigma_i;
    let alpha = 0.5 * (t + (t * t + 4.0).sqrt());
    let rho_p = (1.0 - rho * rho).max(0.0).sqrt();
    let per_chunk = samples as u64 / MC_CHUNKS;
    let extra = samples as u64 % MC_CHUNKS;
    let parts: Vec<(CompensatedSum, CompensatedSum)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let exp = Exp::new(alpha).expect("positive rate");
            let draws = per_chunk + u64::from(c < extra);
            let mut s1 = CompensatedSum::default();
            let mut s2 = CompensatedSum::default();
            for _ in 0..draws {
                let z1 = loop {
                    let z = t + exp.sample(&mut rng);
                    let u: f64 = rng.gen();
                    if u <= (-0.5 * (z - alpha) * (z - alpha)).exp() {
                        break if rng.gen::<bool>() { z } else { -z };
                    }
                };
                let z2: f64 = StandardNormal.sample(&mut rng);
                let yj = (sigma_j * (rho * z1 + rho_p * z2)).abs();
                s1.add(yj);
                s2.add(yj * yj);
            }
            (s1, s2)
        })
        .collect();
    let mut s1 = CompensatedSum::default();
    let mut s2 = CompensatedSum::default();
    for (a, b) in &parts {
        s1.merge(a);
        s2.merge(b);
    }
    let m = samples as f64;
    let mean = s1.value() / m;
    let var = (s2.value() / m - mean * mean) * m / (m - 1.0);
    Ok((mean, (var.max(0.0) / m).sqrt()))
}
