//! Standard normal distribution helpers.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

/// Upper tail `P(Z > x)`, accurate far into the tail.
pub fn upper_tail(x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else if x == f64::NEG_INFINITY {
        1.0
    } else {
        0.5 * erfc(x / std::f64::consts::SQRT_2)
    }
}

pub fn cdf(x: f64) -> f64 {
    upper_tail(-x)
}

pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(p)
}

pub fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
