//! Common-shock model whose idiosyncratic thresholds `(Z1, Z2)` follow
//! Gumbel's bivariate exponential law `P(Z1 > s, Z2 > t) = e^{-s-t-δst}`,
//! `0 ≤ δ ≤ 1`. The common-shock threshold stays independent. For `δ > 0`
//! the default times can be negatively correlated.

mod erfc_bound;

pub use erfc_bound::{
    erfc_bound_feasible, erfc_bound_h, erfc_bound_optimize, erfc_bound_report, ErfcBoundReport,
    CERTIFICATION_POINTS, CERTIFICATION_SLACK,
};

use serde::Serialize;

use crate::bivariate::{marginal_warnings, BivariateScenario};
use crate::ensemble::{self, Evaluation, Realized};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_semi_infinite, Integrand1D, QuadratureResult, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelScenario {
    pub base: BivariateScenario,
    pub delta: f64,
}

impl GumbelScenario {
    pub fn new(base: BivariateScenario, delta: f64) -> Result<Self> {
        let gs = GumbelScenario { base, delta };
        gs.check_delta()?;
        Ok(gs)
    }

    fn check_delta(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.delta) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "Gumbel dependence parameter must lie in [0, 1], got {}",
                self.delta
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.check_delta()?;
        self.base.validate()
    }

    fn realize(&self) -> Result<Vec<Realized>> {
        self.check_delta()?;
        self.base.realize()
    }
}

/// `A¹_s + A²_t + δ A¹_s A²_t + A³_{s∨t}`, with `0 · ∞` read as 0.
fn exponent(a1: f64, a2: f64, a3: f64, delta: f64) -> f64 {
    let cross = if delta == 0.0 || a1 == 0.0 || a2 == 0.0 {
        0.0
    } else {
        delta * a1 * a2
    };
    a1 + a2 + cross + a3
}

fn comp(r: &Realized, i: usize, s: f64) -> Result<f64> {
    let c = &r.curves[i];
    if s.is_infinite() && c.constant_rate().is_some() {
        return Ok(c.terminal_value());
    }
    c.at(s)
}

/// `E[exp(-A¹_s - A²_t - δ A¹_s A²_t - A³_{s∨t})]`.
pub fn gumbel_joint_survival(gs: &GumbelScenario, s: f64, t: f64) -> Result<Evaluation> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::invalid(format!(
            "times must be >= 0, got ({s}, {t})"
        )));
    }
    let realized = gs.realize()?;
    let ev = ensemble::average(&realized, !gs.base.is_deterministic(), |r| {
        let e = exponent(
            comp(r, 0, s)?,
            comp(r, 1, t)?,
            comp(r, 2, s.max(t))?,
            gs.delta,
        );
        Ok(QuadratureResult {
            value: (-e).exp(),
            abs_error_estimate: 0.0,
            evaluations: 0,
        })
    })?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

/// `P(τ_i > s)`; does not depend on `δ`.
pub fn gumbel_marginal_survival(gs: &GumbelScenario, i: usize, s: f64) -> Result<Evaluation> {
    match i {
        1 => gumbel_joint_survival(gs, s, 0.0),
        2 => gumbel_joint_survival(gs, 0.0, s),
        _ => Err(Error::invalid(format!(
            "component index must be 1 or 2, got {i}"
        ))),
    }
}

/// `P(τ1 = τ2) = E[∫_0^∞ α³ exp(-(A¹+A²+A³) - δ A¹A²)]`.
pub fn gumbel_prob_equal(gs: &GumbelScenario) -> Result<Evaluation> {
    let realized = gs.realize()?;
    let delta = gs.delta;
    let ev = ensemble::average(&realized, !gs.base.is_deterministic(), |r| {
        let c = &r.curves;
        if c[2].constant_rate() == Some(0.0) {
            return Ok(QuadratureResult {
                value: 0.0,
                abs_error_estimate: 0.0,
                evaluations: 0,
            });
        }
        let total: f64 = c.iter().filter_map(|c| c.constant_rate()).sum();
        r.integrate(
            |x| c[2].rate(x) * (-exponent(c[0].eval(x), c[1].eval(x), c[2].eval(x), delta)).exp(),
            0.0,
            f64::INFINITY,
            total,
            &[],
            |x| (-r.sum_at(&[0, 1, 2], x)).exp(),
            DEFAULT_TOL,
        )
    })?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

/// `P(τ1 = τ2)` under Gumbel dependence next to its independent-threshold
/// counterpart, for constant rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominatedComparison {
    pub value: f64,
    /// `λ3 / (λ1 + λ2 + λ3)`, the value at `δ = 0`.
    pub mo_value: f64,
}

fn check_rates(rates: &[f64]) -> Result<()> {
    if rates.iter().all(|r| r.is_finite() && *r > 0.0) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "rates must be positive and finite, got {rates:?}"
        )))
    }
}

/// `∫_0^∞ λ3 e^{-(λ1+λ2+λ3)t - δλ1λ2t²} dt` against `λ3/(λ1+λ2+λ3)`.
pub fn gumbel_prob_equal_dominated(
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    delta: f64,
) -> Result<DominatedComparison> {
    check_rates(&[lambda1, lambda2, lambda3])?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!(
            "the comparison needs 0 < delta <= 1, got {delta}"
        )));
    }
    let total = lambda1 + lambda2 + lambda3;
    let quad = delta * lambda1 * lambda2;
    let f = Integrand1D::new(|t: f64| lambda3 * (-(total + quad * t) * t).exp()).with_decay(total);
    Ok(DominatedComparison {
        value: integrate_semi_infinite(&f, DEFAULT_TOL)?.value,
        mo_value: lambda3 / total,
    })
}

/// `Cov(τ1, τ2)` at `δ = 1` for constant rates, from the two completed-square
/// integrals
/// `(2/√p) e^{m²} ∫_m^∞ [1/(2√p u + λ2+λ3-λ1) + 1/(2√p u + λ1+λ3-λ2)] e^{-u²} du`
/// with `p = λ1λ2`, `m = (λ1+λ2+λ3)/(2√p)`, less `1/((λ1+λ3)(λ2+λ3))`.
/// The integral is taken in `v = u - m`, so `e^{m² - u²} = e^{-2mv - v²}`
/// never overflows.
pub fn gumbel_covariance_constant(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<f64> {
    check_rates(&[lambda1, lambda2, lambda3])?;
    let root = (lambda1 * lambda2).sqrt();
    let m = (lambda1 + lambda2 + lambda3) / (2.0 * root);
    let f = Integrand1D::new(|v: f64| {
        let u = m + v;
        let weights = 1.0 / (2.0 * root * u + lambda2 + lambda3 - lambda1)
            + 1.0 / (2.0 * root * u + lambda1 + lambda3 - lambda2);
        weights * (-(2.0 * m + v) * v).exp()
    })
    .with_decay(2.0 * m);
    let scale = 2.0 / root;
    let cross = scale * integrate_semi_infinite(&f, DEFAULT_TOL / scale)?.value;
    Ok(cross - 1.0 / ((lambda1 + lambda3) * (lambda2 + lambda3)))
}

/// Sufficient condition `5 c1 c2 ≥ 4 (c1 + c2 + 1)` for negative covariance
/// at `δ = 1`, where `λ_i = c_i λ3`.
pub fn neg_cov_condition(c1: f64, c2: f64) -> bool {
    5.0 * c1 * c2 >= 4.0 * (c1 + c2 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bivariate::{joint_survival, prob_equal};
    use crate::quadrature::{integrate_double, Integrand2D, Region};
    use proptest::prelude::*;
    use statrs::function::erf::erfc;

    fn gumbel(l1: f64, l2: f64, l3: f64, delta: f64) -> GumbelScenario {
        GumbelScenario::new(BivariateScenario::constant(l1, l2, l3), delta).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn survival_examples() {
        close(
            gumbel_joint_survival(&gumbel(1.0, 2.0, 3.0, 0.0), 1.0, 2.0)
                .unwrap()
                .value,
            (-11.0f64).exp(),
            1e-16,
        );
        assert_eq!(
            gumbel_joint_survival(&gumbel(1.0, 2.0, 3.0, 0.7), 0.0, 0.0)
                .unwrap()
                .value,
            1.0
        );
        close(
            gumbel_joint_survival(&gumbel(1.0, 1.0, 1.0, 1.0), 1.0, 1.0)
                .unwrap()
                .value,
            (-4.0f64).exp(),
            1e-16,
        );
        assert!(GumbelScenario::new(BivariateScenario::constant(1.0, 1.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn prob_equal_examples() {
        close(
            gumbel_prob_equal(&gumbel(1.0, 1.0, 1.0, 0.0))
                .unwrap()
                .value,
            1.0 / 3.0,
            1e-10,
        );
        assert_eq!(
            gumbel_prob_equal(&gumbel(1.0, 1.0, 0.0, 1.0))
                .unwrap()
                .value,
            0.0
        );
        // Completed square: e^{9/4} ∫_{3/2}^∞ e^{-u²} du.
        let want = (2.25f64).exp() * 0.5 * std::f64::consts::PI.sqrt() * erfc(1.5);
        close(
            gumbel_prob_equal(&gumbel(1.0, 1.0, 1.0, 1.0))
                .unwrap()
                .value,
            want,
            1e-10,
        );
    }

    #[test]
    fn dominated_examples() {
        let d = gumbel_prob_equal_dominated(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(d.value <= d.mo_value);
        let d = gumbel_prob_equal_dominated(2.0, 3.0, 5.0, 0.5).unwrap();
        assert!(d.value <= 0.5);
        let q: f64 = 0.5 * 6.0;
        let m: f64 = 10.0 / (2.0 * q.sqrt());
        let want = 5.0 / q.sqrt() * (m * m).exp() * 0.5 * std::f64::consts::PI.sqrt() * erfc(m);
        close(d.value, want, 1e-9);
        let d = gumbel_prob_equal_dominated(2.0, 3.0, 5.0, 1e-6).unwrap();
        close(d.value, d.mo_value, 1e-4);
        assert!(gumbel_prob_equal_dominated(1.0, 1.0, 1.0, 0.0).is_err());
    }

    /// `E[τ1τ2] - E[τ1]E[τ2]` straight from the survival function.
    fn covariance_by_double_integral(l1: f64, l2: f64, l3: f64) -> f64 {
        let p = l1 * l2;
        let below = Integrand2D::new(|x: f64, y: f64| (-l1 * x - (l2 + l3) * y - p * x * y).exp())
            .with_decay(l2 + l3);
        let above = Integrand2D::new(|x: f64, y: f64| (-(l1 + l3) * x - l2 * y - p * x * y).exp())
            .with_decay(l1 + l3);
        let e12 = integrate_double(&below, Region::LowerTriangle, 1e-11)
            .unwrap()
            .value
            + integrate_double(&above, Region::UpperTriangle, 1e-11)
                .unwrap()
                .value;
        e12 - 1.0 / ((l1 + l3) * (l2 + l3))
    }

    #[test]
    fn covariance_matches_double_integral() {
        for &(l1, l2, l3) in &[
            (2.0, 2.0, 1.0),
            (10.0, 10.0, 1.0),
            (0.1, 0.1, 1.0),
            (3.0, 0.5, 2.0),
        ] {
            close(
                gumbel_covariance_constant(l1, l2, l3).unwrap(),
                covariance_by_double_integral(l1, l2, l3),
                1e-8,
            );
        }
        assert!(gumbel_covariance_constant(2.0, 2.0, 1.0).unwrap() < 0.0);
        assert!(gumbel_covariance_constant(10.0, 10.0, 1.0).unwrap() < 0.0);
        assert!(gumbel_covariance_constant(0.1, 0.1, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn condition_examples() {
        assert!(neg_cov_condition(2.0, 2.0));
        assert!(!neg_cov_condition(1.0, 1.0));
        assert!(!neg_cov_condition(4.0, 1.0));
    }

    proptest! {
        #[test]
        fn delta_zero_is_the_independent_threshold_model(
            l1 in 0.0..3.0f64, l2 in 0.0..3.0f64, l3 in 0.0..3.0f64,
            s in 0.0..4.0f64, t in 0.0..4.0f64,
        ) {
            let base = BivariateScenario::constant(l1, l2, l3);
            let g = GumbelScenario::new(base.clone(), 0.0).unwrap();
            let a = gumbel_joint_survival(&g, s, t).unwrap().value;
            let b = joint_survival(&base, s, t).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn marginals_do_not_depend_on_delta(
            l1 in 0.1..3.0f64, l3 in 0.0..3.0f64, delta in 0.0..=1.0f64, s in 0.0..4.0f64,
        ) {
            let g = gumbel(l1, 1.3, l3, delta);
            let a = gumbel_marginal_survival(&g, 1, s).unwrap().value;
            prop_assert!((a - (-(l1 + l3) * s).exp()).abs() <= 1e-14);
        }

        #[test]
        fn prob_equal_decreases_in_delta(
            l1 in 0.1..3.0f64, l2 in 0.1..3.0f64, l3 in 0.1..3.0f64,
            d in 0.0..0.9f64, dd in 0.0..0.1f64,
        ) {
            let a = gumbel_prob_equal(&gumbel(l1, l2, l3, d)).unwrap().value;
            let b = gumbel_prob_equal(&gumbel(l1, l2, l3, d + dd)).unwrap().value;
            prop_assert!(b <= a + 1e-10);
            let base = prob_equal(&BivariateScenario::constant(l1, l2, l3)).unwrap().value;
            prop_assert!(a <= base + 1e-10);
        }

        #[test]
        fn condition_implies_negative_covariance(c1 in 0.5..20.0f64, c2 in 0.5..20.0f64, l3 in 0.2..3.0f64) {
            prop_assume!(neg_cov_condition(c1, c2));
            prop_assert!(gumbel_covariance_constant(c1 * l3, c2 * l3, l3).unwrap() < 0.0);
        }
    }
}
