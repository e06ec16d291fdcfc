//! The rational upper bound `∫_x^∞ e^{-u²} du ≤ 2x/(4x² + ℓ) · e^{-x²}` for
//! `x ≥ 1`, and the largest `ℓ` for which it holds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_semi_infinite, Integrand1D};

/// Number of grid points used to certify `h(·, ℓ) ≥ 0` on `[1, 10]`.
pub const CERTIFICATION_POINTS: usize = 10_000;

/// Slack allowed below zero when certifying the bound on the grid.
pub const CERTIFICATION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErfcBoundReport {
    pub ell: f64,
    pub x_star: f64,
    pub h_max: f64,
    /// `h(x, ell) ≥ -1e-12` at every point of the certification grid.
    pub feasible: bool,
}

/// `e^{x²} ∫_x^∞ e^{-u²} du = ∫_0^∞ e^{-2xv - v²} dv`.
fn scaled_gaussian_tail(x: f64) -> Result<f64> {
    let f = Integrand1D::new(|v: f64| (-(2.0 * x + v) * v).exp()).with_decay(2.0 * x);
    Ok(integrate_semi_infinite(&f, 1e-14)?.value)
}

/// `h(x, ℓ) = 2x/(4x² + ℓ) e^{-x²} - ∫_x^∞ e^{-u²} du`, the slack of the bound.
pub fn erfc_bound_h(x: f64, ell: f64) -> Result<f64> {
    if !(x >= 1.0 && x.is_finite()) {
        return Err(Error::invalid(format!(
            "h(x, ell) is defined for x >= 1, got {x}"
        )));
    }
    if !(ell >= 0.0 && ell.is_finite()) {
        return Err(Error::invalid(format!("ell must be >= 0, got {ell}")));
    }
    let rational = 2.0 * x / (4.0 * x * x + ell);
    Ok((-x * x).exp() * (rational - scaled_gaussian_tail(x)?))
}

/// True when `h(x, ell) ≥ -1e-12` on `points` equally spaced nodes of `[1, 10]`.
pub fn erfc_bound_feasible(ell: f64, points: usize) -> Result<bool> {
    for k in 0..points {
        let x = 1.0 + 9.0 * k as f64 / (points - 1).max(1) as f64;
        if erfc_bound_h(x, ell)? < -CERTIFICATION_SLACK {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Stationary point of `h(·, ℓ)` from the sign change of `∂h/∂x`.
fn stationary_point(ell: f64) -> f64 {
    ((ell * ell + 2.0 * ell) / (8.0 - 4.0 * ell)).sqrt()
}

/// Largest `ℓ` with `h(1, ℓ) ≥ 0` (bisection to 1e-10), the maximizer of
/// `h(·, ℓ)` and its maximum, and a grid certificate that the bound holds.
pub fn erfc_bound_optimize() -> Result<ErfcBoundReport> {
    let (mut lo, mut hi) = (0.5, 2.0);
    let (h_lo, h_hi) = (erfc_bound_h(1.0, lo)?, erfc_bound_h(1.0, hi)?);
    if !(h_lo > 0.0 && h_hi < 0.0) {
        return Err(Error::Numeric(format!(
            "h(1, ell) does not change sign on [0.5, 2]: {h_lo:e}, {h_hi:e}"
        )));
    }
    let mut iterations = 0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if erfc_bound_h(1.0, mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > 200 {
            return Err(Error::Numeric("bisection for ell did not converge".into()));
        }
    }
    erfc_bound_report(lo)
}

/// Maximizer and maximum of `h(·, ell)` on `[1, ∞)` and the grid certificate,
/// for a given `0 ≤ ell < 2`.
pub fn erfc_bound_report(ell: f64) -> Result<ErfcBoundReport> {
    if !(0.0..2.0).contains(&ell) {
        return Err(Error::invalid(format!("ell must lie in [0, 2), got {ell}")));
    }
    let centre = stationary_point(ell).max(1.0);
    let x_star = golden_section_max(
        |x| erfc_bound_h(x, ell).unwrap_or(f64::NEG_INFINITY),
        1.0_f64.max(centre - 0.1),
        centre + 0.1,
        1e-9,
    );
    Ok(ErfcBoundReport {
        ell,
        x_star,
        h_max: erfc_bound_h(x_star, ell)?,
        feasible: erfc_bound_feasible(ell, CERTIFICATION_POINTS)?,
    })
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values below were computed with 30-digit arithmetic
    // (mpmath: erfc, findroot on dh/dx).
    const ELL_ROOT: f64 = 1.277_935_028_469_582_5;
    const X_STAR: f64 = 1.204_304_817_237_455_2;
    const H_MAX: f64 = 0.001_312_663_831_675_539_8;

    #[test]
    fn h_matches_high_precision_values() {
        let cases = [
            (1.0, 1.25, 7.417_563_773_613_247e-4),
            (1.5, 0.0, 5.094_543_026_097_824e-3),
            (3.0, 1.0, 4.352_074_259_250_383e-7),
            (7.5, 2.0, -3.693_415_585_622_684_5e-30),
        ];
        for (x, ell, want) in cases {
            let got = erfc_bound_h(x, ell).unwrap();
            assert!(
                (got - want).abs() <= 1e-12 * want.abs() + 1e-14 * (-x * x).exp(),
                "x={x} got {got:e} want {want:e}"
            );
        }
    }

    #[test]
    fn five_quarters_is_feasible() {
        let r = erfc_bound_report(1.25).unwrap();
        assert!(r.feasible && r.h_max > 0.0);
        assert!(!erfc_bound_report(1.4).unwrap().feasible);
        assert!(erfc_bound_report(2.0).is_err());
    }

    #[test]
    fn h_sign_examples() {
        assert!(erfc_bound_h(1.0, 1.25).unwrap() > 0.0);
        for k in 0..50 {
            assert!(erfc_bound_h(1.0 + 0.2 * k as f64, 0.0).unwrap() > 0.0);
        }
        assert!(erfc_bound_h(0.5, 1.0).is_err());
    }

    #[test]
    fn optimum_matches_high_precision_values() {
        let r = erfc_bound_optimize().unwrap();
        assert!((r.ell - ELL_ROOT).abs() < 2e-10, "{}", r.ell);
        assert!(erfc_bound_h(1.0, r.ell).unwrap().abs() < 1e-9);
        assert!(r.feasible);
        assert_eq!(erfc_bound_report(r.ell).unwrap(), r);
        assert!((r.x_star - X_STAR).abs() < 1e-7, "{}", r.x_star);
        assert!((r.x_star - stationary_point(r.ell)).abs() < 1e-7);
        assert!((r.h_max - H_MAX).abs() < 1e-12, "{}", r.h_max);
    }
}
