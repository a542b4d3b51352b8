//! Scalar special functions for the standard real Gaussian.
//!
//! `phi` is the density, `cdf` the distribution function and `q` its
//! complement. `erfcx` is the scaled complementary error function
//! `exp(x^2) erfc(x)`, which stays finite in the far right tail where
//! `erfc` underflows.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn phi(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Gaussian Q-function, `1 - cdf(x)`.
#[inline]
pub fn q(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    // Asymptotic series; at x >= 25 the sixth term is below 1e-18.
    let inv2x2 = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..8 {
        term *= -((2 * n - 1) as f64) * inv2x2;
        sum += term;
    }
    sum / (x * PI.sqrt())
}

/// `Q(x) * exp(x^2 / 2)`, finite for every `x >= 0`.
#[inline]
pub fn q_scaled(x: f64) -> f64 {
    0.5 * erfcx(x * FRAC_1_SQRT_2)
}

/// `ln cosh(x)` without overflow.
#[inline]
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_identities() {
        assert_eq!(q(0.0), 0.5);
        for &x in &[-5.0, -1.3, 0.0, 0.7, 2.0, 6.5] {
            assert!((cdf(x) + q(x) - 1.0).abs() < 1e-15);
            assert!((q(-x) - cdf(x)).abs() < 1e-15);
        }
        // Q(1) from tables
        assert!((q(1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn erfcx_is_continuous_across_branch() {
        let lo = erfcx(25.0 - 1e-12);
        let hi = erfcx(25.0);
        assert!(((lo - hi) / hi).abs() < 1e-12);
        // large-x limit 1/(x sqrt(pi))
        let x = 1e6;
        assert!((erfcx(x) * x * PI.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn erfcx_matches_direct_in_overlap() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.5, 3.0, 10.0, 20.0] {
            let direct = (x * x).exp() * libm::erfc(x);
            assert!(((erfcx(x) - direct) / direct).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn log_cosh_large_arguments() {
        assert!((log_cosh(0.0)).abs() < 1e-16);
        assert!((log_cosh(1.0) - 1.0f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(-800.0) - (800.0 - LN_2)).abs() < 1e-12);
    }
}
