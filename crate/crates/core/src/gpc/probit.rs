//! Standard normal helpers for the probit likelihood, stable in the far tail.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

const TAIL: f64 = -30.0;

/// Φ(z).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// ln Φ(z).
pub fn log_normal_cdf(z: f64) -> f64 {
    if z > TAIL {
        normal_cdf(z).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// N(z)/Φ(z), the inverse Mills ratio of the lower tail.
pub fn pdf_cdf_ratio(z: f64) -> f64 {
    if z > TAIL {
        (-0.5 * z * z - 0.5 * (2.0 * PI).ln() - log_normal_cdf(z)).exp()
    } else {
        let z2 = z * z;
        -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2))
    }
}
