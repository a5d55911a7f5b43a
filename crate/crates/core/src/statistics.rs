//! Steady-state statistics of the observables `y = M_n x` of the delayed
//! consensus network `dx = -L x(t - τ) dt + b dw`.
//!
//! Each nonzero Laplacian mode `λ` contributes variance proportional to
//! `cos(λτ) / (λ (1 - sin λτ))`, i.e. `2τ f(λτ)` with
//! `f(x) = cos x / (2x (1 - sin x))`. `f` is unimodal on `(0, π/2)`, so
//! adding connectivity lowers the variance only until `λτ` reaches the
//! minimiser of `f`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::graph::{Laplacian, Spectrum};

/// Delay, nominal diffusion, ambiguity radius and consensus tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub tau: f64,
    pub b0: f64,
    pub epsilon: f64,
    pub c: f64,
}

impl NetworkParams {
    pub fn new(tau: f64, b0: f64, epsilon: f64, c: f64) -> Result<Self> {
        let p = Self {
            tau,
            b0,
            epsilon,
            c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau = {} must be >= 0",
                self.tau
            )));
        }
        if !(self.b0.is_finite() && self.b0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "b0 = {} must be > 0",
                self.b0
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} not in [0, 1)",
                self.epsilon
            )));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "c = {} must be > 0",
                self.c
            )));
        }
        Ok(())
    }
}

impl Default for NetworkParams {
    /// Case-study values: `τ = 0.05`, `b0 = 4`, `ε = 0.3`, `c = 0.1`.
    fn default() -> Self {
        Self {
            tau: 0.05,
            b0: 4.0,
            epsilon: 0.3,
            c: 0.1,
        }
    }
}

/// `f(x) = cos x / (2x (1 - sin x))` on `(0, π/2)`.
pub fn f_curve(x: f64) -> Result<f64> {
    if !(x > 0.0 && x < FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "f(x) requires 0 < x < pi/2, got {x}"
        )));
    }
    Ok(x.cos() / (2.0 * x * (1.0 - x.sin())))
}

/// Minimiser `x̄` of [`f_curve`].
///
/// `d/dx ln f = -tan x - 1/x + (1 + sin x)/cos x = 1/cos x - 1/x`, so the
/// stationary point is the fixed point of `cos`. Solved by Newton.
pub fn f_curve_minimizer() -> f64 {
    let mut x: f64 = 0.74;
    for _ in 0..50 {
        let step = (x - x.cos()) / (1.0 + x.sin());
        x -= step;
        if step.abs() < 1e-17 {
            break;
        }
    }
    x
}

/// `λ̄ = x̄ / τ`, the eigenvalue at which a mode's variance is smallest.
pub fn lambda_bar(tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!(
            "lambda_bar requires tau > 0, got {tau}"
        )));
    }
    Ok(f_curve_minimizer() / tau)
}

/// `π/(2λn) - τ`; positive iff the delay margin holds.
pub fn stability_margin(spectrum: &Spectrum, tau: f64) -> f64 {
    FRAC_PI_2 / spectrum.lambda_max() - tau
}

/// Steady-state covariance `Σ` of the observables with derived standard
/// deviations and correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct CovModel {
    sigma: DMatrix<f64>,
    stds: DVector<f64>,
    corr: DMatrix<f64>,
}

impl CovModel {
    /// Wraps an explicit covariance; symmetrises and checks the diagonal.
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        let n = sigma.nrows();
        if n < 2 || sigma.ncols() != n {
            return Err(Error::InvalidSize(n));
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let stds = DVector::from_fn(n, |i, _| sigma[(i, i)].max(0.0).sqrt());
        if let Some(i) = stds.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::Domain(format!(
                "zero or invalid variance for agent {i}"
            )));
        }
        let corr = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                (sigma[(i, j)] / (stds[i] * stds[j])).clamp(-1.0, 1.0)
            }
        });
        Ok(Self { sigma, stds, corr })
    }

    pub fn n(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `σ_i = sqrt(Σ_ii)`.
    pub fn std(&self, i: usize) -> f64 {
        self.stds[i]
    }

    pub fn stds(&self) -> &DVector<f64> {
        &self.stds
    }

    /// `ρ_ij = Σ_ij / (σ_i σ_j)`.
    pub fn corr(&self, i: usize, j: usize) -> f64 {
        self.corr[(i, j)]
    }

    pub fn correlations(&self) -> &DMatrix<f64> {
        &self.corr
    }

    /// `factor · Σ` (correlations unchanged).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_matrix(&self.sigma * factor)
    }

    /// Long-format CSV `i,j,sigma_ij`, 1-based, row-major.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::from("i,j,sigma_ij\n");
        for i in 0..n {
            for j in 0..n {
                out.push_str(&format!("{},{},{:e}\n", i + 1, j + 1, self.sigma[(i, j)]));
            }
        }
        out
    }
}

/// Per-mode variance factors `cos(λτ)/(λ(1 - sin λτ))`, zero for the
/// consensus mode.
pub fn mode_factors(spectrum: &Spectrum, tau: f64) -> DVector<f64> {
    let ev = spectrum.eigenvalues();
    DVector::from_fn(ev.len(), |k, _| {
        if k == 0 {
            0.0
        } else {
            let x = ev[k] * tau;
            x.cos() / (ev[k] * (1.0 - x.sin()))
        }
    })
}

/// `Σ = ½ b² M_n Q Λ̄ Qᵀ M_n`.
pub fn steady_state_covariance(spectrum: &Spectrum, b: f64, tau: f64) -> Result<CovModel> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "diffusion b = {b} must be > 0"
        )));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau = {tau} must be >= 0")));
    }
    if stability_margin(spectrum, tau) <= 0.0 {
        return Err(Error::Unstable {
            tau,
            limit: FRAC_PI_2 / spectrum.lambda_max(),
        });
    }
    if spectrum.lambda_max() * tau > 0.99 * FRAC_PI_2 {
        warn!(
            lambda_tau = spectrum.lambda_max() * tau,
            "operating within 1% of the delay margin; covariance is very large"
        );
    }
    let n = spectrum.n();
    let q = spectrum.eigenvectors();
    let factors = mode_factors(spectrum, tau);
    let mut core = DMatrix::zeros(n, n);
    for k in 1..n {
        let col = q.column(k);
        core.ger(factors[k], &col, &col, 1.0);
    }
    let m = centering(n);
    let sigma = &m * core * &m * (0.5 * b * b);
    CovModel::from_matrix(sigma)
}

/// `M_n = I - (1/n) 𝟙𝟙ᵀ`.
pub fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64)
}

/// Moore–Penrose pseudoinverse of a connected Laplacian via
/// `L⁺ = (L + J/n)⁻¹ - J/n`, independent of the eigensolver.
pub fn laplacian_pseudoinverse(l: &Laplacian) -> Result<DMatrix<f64>> {
    let n = l.n();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let shifted = l.matrix() + &j;
    let inv = shifted
        .try_inverse()
        .ok_or(Error::Disconnected { components: 2 })?;
    Ok(inv - j)
}

/// Relative Frobenius gap between `Σ(τ = 0)` and `(b²/2) L⁺`.
pub fn pseudoinverse_identity_error(l: &Laplacian, b: f64) -> Result<f64> {
    let cov = steady_state_covariance(&l.spectrum()?, b, 0.0)?;
    let expect = laplacian_pseudoinverse(l)? * (0.5 * b * b);
    Ok((cov.sigma() - &expect).norm() / expect.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_complete, build_path};
    use std::f64::consts::PI;

    fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > tol {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn f_curve_values() {
        let v = f_curve(PI / 6.0).unwrap();
        assert!((v - 3.0 * 3f64.sqrt() / PI).abs() < 1e-14);
        assert!(f_curve(1e-6).unwrap() > 1e5);
        assert!(f_curve(0.0).is_err());
        assert!(f_curve(FRAC_PI_2).is_err());
        assert!(f_curve(-0.3).is_err());
    }

    #[test]
    fn minimizer_matches_golden_section_and_grid() {
        let f = |x: f64| f_curve(x).unwrap();
        let golden = golden_section(f, 1e-6, FRAC_PI_2 - 1e-6, 1e-9);
        let xbar = f_curve_minimizer();
        // f is flat at its minimum, golden section only resolves ~sqrt(eps)
        assert!((xbar - golden).abs() < 1e-7, "{xbar} vs {golden}");
        let fmin = f(xbar);
        for k in 1..10_000 {
            let x = FRAC_PI_2 * k as f64 / 10_000.0;
            assert!(fmin <= f(x) + 1e-15);
        }
        // finite-difference derivative changes sign across x̄
        let h = 1e-6;
        let d = |x: f64| (f(x + h) - f(x - h)) / (2.0 * h);
        assert!(d(xbar - 1e-4) < 0.0 && d(xbar + 1e-4) > 0.0);
    }

    #[test]
    fn lambda_bar_scaling() {
        let a = lambda_bar(0.05).unwrap();
        let b = lambda_bar(0.1).unwrap();
        assert!((b - a / 2.0).abs() < 1e-10);
        assert_eq!(lambda_bar(1.0).unwrap(), f_curve_minimizer());
        assert!(lambda_bar(0.0).is_err());
        assert!(lambda_bar(-1.0).is_err());
    }

    #[test]
    fn stability_margins() {
        let s = build_complete(21, 1.0)
            .unwrap()
            .laplacian()
            .spectrum()
            .unwrap();
        let m = stability_margin(&s, 0.05);
        assert!((m - (PI / 42.0 - 0.05)).abs() < 1e-12);
        assert!(m > 0.0);
        let s = build_path(2, 1.0).unwrap().laplacian().spectrum().unwrap();
        assert!((stability_margin(&s, 0.0) - PI / 4.0).abs() < 1e-12);
        let s = build_complete(21, 2.0)
            .unwrap()
            .laplacian()
            .spectrum()
            .unwrap();
        assert!(stability_margin(&s, 0.05) < 0.0);
        assert!(matches!(
            steady_state_covariance(&s, 1.0, 0.05),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn zero_delay_is_scaled_pseudoinverse() {
        let l = build_path(6, 1.3).unwrap().laplacian();
        assert!(pseudoinverse_identity_error(&l, 2.0).unwrap() < 1e-12);
    }

    #[test]
    fn complete_graph_structure() {
        let (n, w, tau, b) = (21usize, 1.0, 0.05, 4.0);
        let s = build_complete(n, w)
            .unwrap()
            .laplacian()
            .spectrum()
            .unwrap();
        let cov = steady_state_covariance(&s, b, tau).unwrap();
        let x = w * n as f64 * tau;
        let g = x.cos() / (w * n as f64 * (1.0 - x.sin()));
        let var = 0.5 * b * b * g * (n as f64 - 1.0) / n as f64;
        for i in 0..n {
            assert!((cov.std(i).powi(2) - var).abs() < 1e-12);
            for j in 0..n {
                if i != j {
                    assert!((cov.corr(i, j) + 1.0 / (n as f64 - 1.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn covariance_is_centered_and_scales_with_b_squared() {
        let s = build_path(7, 1.0).unwrap().laplacian().spectrum().unwrap();
        let a = steady_state_covariance(&s, 1.0, 0.05).unwrap();
        let b = steady_state_covariance(&s, 3.0, 0.05).unwrap();
        let ones = DVector::from_element(7, 1.0);
        assert!((a.sigma() * &ones).amax() < 1e-12);
        assert!((a.sigma() * 9.0 - b.sigma()).amax() < 1e-12);
        assert!(steady_state_covariance(&s, 0.0, 0.05).is_err());
    }

    #[test]
    fn csv_layout() {
        let s = build_path(2, 1.0).unwrap().laplacian().spectrum().unwrap();
        let cov = steady_state_covariance(&s, 2.0, 0.0).unwrap();
        let csv = cov.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "i,j,sigma_ij");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("1,2,"));
        // (b²/2) L⁺ with L⁺ = [[1/4, -1/4], [-1/4, 1/4]]
        assert!((cov.sigma()[(0, 0)] - 0.5).abs() < 1e-12);
    }
}
