//! Error-function helpers used by the overlap model and the lifetime fit.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x²)·erfc(x)`, accurate for large
/// positive `x` where the unscaled product would under/overflow.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        // erfc(-x) = 2 - erfc(x)
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 25.0 {
        return (x * x).exp() * erfc(x);
    }
    // Asymptotic series; the seventh term is below 1e-15 for x >= 25.
    let inv2 = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * inv2;
        sum += term;
    }
    sum / (x * PI.sqrt())
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}
