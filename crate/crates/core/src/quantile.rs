//! Conversion between the insolvency probability `p` and the multiplier `b_p`.
//!
//! `b_p` is the upper-tail standard normal quantile: `P(Z > b_p) = p`. The
//! inverse uses Acklam's rational approximation (relative error below
//! 1.15e-9) followed by one Halley step against the complementary error
//! function, which brings the result to within a few ulps.

use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.38357751867269e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

/// Standard normal CDF `Phi(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Acklam's approximation to `Phi^{-1}(p)` for `0 < p < 1`.
fn acklam(p: f64) -> f64 {
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

/// `Phi^{-1}(p)` refined with one Halley step.
pub fn normal_quantile(p: f64) -> f64 {
    let x = acklam(p);
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Multiplier `b_p` such that `P(Z > b_p) = p`.
pub fn bp_from_p(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::domain(format!(
            "insolvency probability p = {p} must lie in (0, 0.5)"
        )));
    }
    Ok(-normal_quantile(p))
}

/// Insolvency probability `P(Z > b_p)`.
pub fn p_from_bp(bp: f64) -> Result<f64> {
    if !bp.is_finite() {
        return Err(Error::domain(format!("b_p = {bp} must be finite")));
    }
    Ok(normal_cdf(-bp))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bp_two_gives_two_point_two_seven_percent() {
        let p = p_from_bp(2.0).unwrap();
        assert!((p - 0.02275).abs() < 5e-6, "{p}");
    }

    #[test]
    fn median_limit_is_zero() {
        assert_eq!(p_from_bp(0.0).unwrap(), 0.5);
        assert!(bp_from_p(0.5).is_err());
        assert!(bp_from_p(0.0).is_err());
        assert!(bp_from_p(0.4999999).unwrap().abs() < 1e-6);
    }

    #[test]
    fn three_sigma() {
        let b = bp_from_p(0.00135).unwrap();
        assert!((b - 3.0).abs() < 1e-3, "{b}");
    }

    #[test]
    fn acklam_alone_is_close() {
        for p in [1e-6, 1e-3, 0.02, 0.2, 0.45] {
            let raw = acklam(p);
            let refined = normal_quantile(p);
            assert!((raw - refined).abs() < 1e-8 * refined.abs().max(1.0));
        }
    }
}
