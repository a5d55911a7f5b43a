//! Error-function helpers.
//!
//! `erf`/`erfc` come from `libm` (the FreeBSD msun rational approximations,
//! about one ulp). The scaled complement `erfcx(x) = exp(x^2) erfc(x)` is
//! needed for the conditional-expectation prefactor `exp(-d^2) / erfc(d)`,
//! which would otherwise lose everything to underflow once `d` passes ~26.

/// The error function `h(x) = erf(x)`.
#[inline]
pub fn erf_h(x: f64) -> f64 {
    // libm is odd-symmetric bit for bit; keep it explicit anyway.
    if x < 0.0 {
        -libm::erf(-x)
    } else {
        libm::erf(x)
    }
}

/// Complementary error function `1 - erf(x)` without cancellation.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 3.0 {
        (x * x).exp() * erfc(x)
    } else {
        // Continued fraction: erfc(x) e^{x^2} = 1/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
        let mut frac = x;
        for k in (1..=60).rev() {
            frac = x + (k as f64 / 2.0) / frac;
        }
        1.0 / (std::f64::consts::PI.sqrt() * frac)
    }
}

/// `exp(-x^2) / erfc(x)` for `x >= 0`, stable for large `x`.
#[inline]
pub fn gaussian_tail_ratio(x: f64) -> f64 {
    1.0 / erfcx(x)
}
