//! Two default times driven by a common shock:
//! `τ1 = min(η1, η3)`, `τ2 = min(η2, η3)` with `η_i = inf{s : A^i_s >= Z_i}`
//! for independent unit exponentials `Z_i`.
//!
//! Every quantity is computed conditionally on the state path and then
//! averaged over the scenario's [`PathSource`].

use serde::{Deserialize, Serialize};

use crate::ensemble::{self, Evaluation, PathSource, Realized};
use crate::error::{Error, Result};
use crate::intensity::{validate_divergence_sum, CompensatorCurve, IntensityModel};
use crate::quadrature::{
    integrate_double, integrate_interval, Integrand2D, QuadratureResult, Region, DEFAULT_TOL,
};

const A1: usize = 0;
const A2: usize = 1;
const A3: usize = 2;
const ALL: [usize; 3] = [A1, A2, A3];

/// Intensities of the two idiosyncratic shocks and the common shock, plus
/// the state process they are driven by.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateScenario {
    pub alpha1: IntensityModel,
    pub alpha2: IntensityModel,
    pub alpha3: IntensityModel,
    pub paths: PathSource,
}

impl BivariateScenario {
    pub fn new(alpha1: IntensityModel, alpha2: IntensityModel, alpha3: IntensityModel) -> Self {
        BivariateScenario {
            alpha1,
            alpha2,
            alpha3,
            paths: PathSource::Deterministic,
        }
    }

    pub fn constant(rate1: f64, rate2: f64, rate3: f64) -> Self {
        Self::new(
            IntensityModel::constant(rate1),
            IntensityModel::constant(rate2),
            IntensityModel::constant(rate3),
        )
    }

    pub fn with_paths(mut self, paths: PathSource) -> Self {
        self.paths = paths;
        self
    }

    pub fn models(&self) -> [&IntensityModel; 3] {
        [&self.alpha1, &self.alpha2, &self.alpha3]
    }

    /// Rates when all three intensities are constant.
    pub fn constant_rates(&self) -> Option<[f64; 3]> {
        Some([
            self.alpha1.constant_rate()?,
            self.alpha2.constant_rate()?,
            self.alpha3.constant_rate()?,
        ])
    }

    /// True when results carry no outer randomness.
    pub fn is_deterministic(&self) -> bool {
        self.constant_rates().is_some() || !self.paths.is_stochastic()
    }

    pub fn validate(&self) -> Result<()> {
        self.realize().map(|_| ())
    }

    pub(crate) fn realize(&self) -> Result<Vec<Realized>> {
        ensemble::realize(&self.models(), &self.paths)
    }

    fn stochastic(&self) -> bool {
        !self.is_deterministic()
    }
}

/// Divergence warnings for the two marginal compensators.
pub(crate) fn marginal_warnings(realized: &[Realized]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, idio) in [(1, A1), (2, A2)] {
        let bad = realized
            .iter()
            .filter(|r| !validate_divergence_sum([&r.curves[idio], &r.curves[A3]]).divergent)
            .count();
        if bad > 0 {
            out.push(format!(
                "defective distribution: the compensator of tau{i} does not diverge on \
                 {bad} of {} path(s)",
                realized.len()
            ));
        }
    }
    out
}

fn check_time(name: &str, s: f64) -> Result<()> {
    if s >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be >= 0, got {s}")))
    }
}

/// `A_s` with the horizon check; `+∞` at `s = ∞` when the rate is positive.
fn comp(c: &CompensatorCurve, s: f64) -> Result<f64> {
    if s.is_infinite() && c.constant_rate().is_some() {
        return Ok(c.terminal_value());
    }
    c.at(s)
}

fn survival_on(r: &Realized, s: f64, t: f64) -> Result<f64> {
    let e = comp(&r.curves[A1], s)? + comp(&r.curves[A2], t)? + comp(&r.curves[A3], s.max(t))?;
    Ok((-e).exp())
}

fn exact(v: f64) -> QuadratureResult {
    QuadratureResult {
        value: v,
        abs_error_estimate: 0.0,
        evaluations: 0,
    }
}

/// `P(τ1 > s, τ2 > t) = E[exp(-A¹_s - A²_t - A³_{s∨t})]`.
pub fn joint_survival(sc: &BivariateScenario, s: f64, t: f64) -> Result<Evaluation> {
    check_time("s", s)?;
    check_time("t", t)?;
    let realized = sc.realize()?;
    let ev = ensemble::average(&realized, sc.stochastic(), |r| {
        survival_on(r, s, t).map(exact)
    })?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

/// `P(τ_i > s) = E[exp(-A^i_s - A³_s)]`.
pub fn marginal_survival(sc: &BivariateScenario, i: usize, s: f64) -> Result<Evaluation> {
    match i {
        1 => joint_survival(sc, s, 0.0),
        2 => joint_survival(sc, 0.0, s),
        _ => Err(Error::invalid(format!(
            "component index must be 1 or 2, got {i}"
        ))),
    }
}

/// Total rate used as a decay hint for constant scenarios.
fn total_rate(r: &Realized, idx: &[usize]) -> f64 {
    idx.iter()
        .map(|&i| r.curves[i].constant_rate().unwrap_or(0.0))
        .sum()
}

/// `∫_lower^upper α³ e^{-ΣA}` on one path.
fn equal_mass(r: &Realized, lower: f64, upper: f64) -> Result<QuadratureResult> {
    if r.curves[A3].constant_rate() == Some(0.0) {
        return Ok(exact(0.0));
    }
    r.integrate(
        |s| r.curves[A3].rate(s) * (-r.sum_at(&ALL, s)).exp(),
        lower,
        upper,
        total_rate(r, &ALL),
        &[],
        |t| (-r.sum_at(&ALL, t)).exp(),
        DEFAULT_TOL,
    )
}

/// `P(τ1 = τ2) = E[∫_0^∞ α³_s e^{-A¹_s-A²_s-A³_s} ds]`, by quadrature.
pub fn prob_equal(sc: &BivariateScenario) -> Result<Evaluation> {
    let realized = sc.realize()?;
    let ev = ensemble::average(&realized, sc.stochastic(), |r| {
        equal_mass(r, 0.0, f64::INFINITY)
    })?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

/// Parametric families with a closed form for `P(τ1 = τ2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClosedForm {
    /// Constant rates.
    Constant { rate1: f64, rate2: f64, rate3: f64 },
    /// `α^i = a_i · α³` for an arbitrary divergent base `α³`.
    Proportional { factor1: f64, factor2: f64 },
}

/// `α³/(α¹+α²+α³)` for constants, `1/(a₁+a₂+1)` for proportional models.
pub fn prob_equal_closed(form: ClosedForm) -> Result<f64> {
    match form {
        ClosedForm::Constant {
            rate1,
            rate2,
            rate3,
        } => {
            if [rate1, rate2, rate3]
                .iter()
                .any(|r| !(r.is_finite() && *r >= 0.0))
                || rate3 <= 0.0
            {
                return Err(Error::invalid(
                    "constant closed form needs finite rates >= 0 and a positive common rate",
                ));
            }
            Ok(rate3 / (rate1 + rate2 + rate3))
        }
        ClosedForm::Proportional { factor1, factor2 } => {
            if !(factor1.is_finite() && factor1 > 0.0 && factor2.is_finite() && factor2 > 0.0) {
                return Err(Error::invalid("proportional factors must be positive"));
            }
            Ok(1.0 / (factor1 + factor2 + 1.0))
        }
    }
}

/// Hypotheses under which `P(τ1 = τ2)` is bracketed by explicit bounds.
/// Bound constants are deterministic here.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundSpec {
    /// `ℓ_i β ≤ α^i ≤ u_i β` for a positive base intensity `β` with divergent
    /// compensator.
    BoundedIntensity {
        lower: [f64; 3],
        upper: [f64; 3],
        base: IntensityModel,
    },
    /// `ℓ ≤ A¹_s + A²_s < u` wherever the common shock is active.
    BoundedSumCompensators { lower: f64, upper: f64 },
    /// `ℓ A³ ≤ A¹ + A² ≤ u A³`.
    CompensatorRatio { lower: f64, upper: f64 },
    /// `ℓ (α¹ + α²) ≤ α³ ≤ u (α¹ + α²)` with `u < ℓ + 1`.
    IntensityVsSum { lower: f64, upper: f64 },
}

fn check_pair(lower: f64, upper: f64) -> Result<()> {
    if lower > 0.0 && upper.is_finite() && lower <= upper {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!(
            "need 0 < lower <= upper < inf, got lower = {lower}, upper = {upper}"
        )))
    }
}

impl BoundSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BoundSpec::BoundedIntensity { lower, upper, base } => {
                for i in 0..3 {
                    check_pair(lower[i], upper[i])?;
                }
                base.validate()
                    .map_err(|e| Error::InvalidSpec(format!("base intensity: {e}")))
            }
            BoundSpec::BoundedSumCompensators { lower, upper }
            | BoundSpec::CompensatorRatio { lower, upper } => check_pair(*lower, *upper),
            BoundSpec::IntensityVsSum { lower, upper } => {
                check_pair(*lower, *upper)?;
                if *upper < lower + 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!(
                        "intensity-vs-sum bounds need upper < lower + 1, got {lower}, {upper}"
                    )))
                }
            }
        }
    }

    /// Checks the hypotheses on the scenario's grid (or exactly, for
    /// constant rates). Rate inequalities are linear, so checking them at
    /// the nodes covers the interpolated rate in between; compensator
    /// inequalities are checked at the nodes only.
    pub fn holds_for(&self, sc: &BivariateScenario) -> Result<bool> {
        self.validate()?;
        let base_model = match self {
            BoundSpec::BoundedIntensity { base, .. } => base.clone(),
            _ => IntensityModel::constant(1.0),
        };
        let models = [&sc.alpha1, &sc.alpha2, &sc.alpha3, &base_model];
        let realized = ensemble::realize(&models, &sc.paths)?;
        Ok(realized.iter().all(|r| self.holds_on(r)))
    }

    fn holds_on(&self, r: &Realized) -> bool {
        let times: Vec<f64> = match &r.nodes {
            Some(n) => n.to_vec(),
            // Constant rates: the relations are linear in s, one point decides.
            None => vec![0.0, 1.0],
        };
        let rate = |i: usize, t: f64| r.curves[i].rate(t);
        let comp = |i: usize, t: f64| r.curves[i].eval(t);
        let slack = 1e-12;
        match self {
            BoundSpec::BoundedIntensity { lower, upper, .. } => {
                let base_ok = times.iter().all(|&t| rate(3, t) > 0.0)
                    && validate_divergence_sum([&r.curves[3]]).divergent;
                base_ok
                    && times.iter().all(|&t| {
                        (0..3).all(|i| {
                            let b = rate(3, t);
                            lower[i] * b <= rate(i, t) + slack && rate(i, t) <= upper[i] * b + slack
                        })
                    })
            }
            BoundSpec::BoundedSumCompensators { lower, upper } => {
                if !validate_divergence_sum([&r.curves[A3]]).divergent {
                    return false;
                }
                // Earliest node whose adjacent panel carries common-shock rate.
                let first_active = times
                    .windows(2)
                    .position(|w| rate(A3, w[0]) > 0.0 || rate(A3, w[1]) > 0.0);
                let Some(k) = first_active else {
                    return false;
                };
                let start = comp(A1, times[k]) + comp(A2, times[k]);
                let end = if r.nodes.is_some() {
                    comp(A1, times[times.len() - 1]) + comp(A2, times[times.len() - 1])
                } else {
                    // Constant idiosyncratic rates must vanish to stay bounded.
                    if rate(A1, 0.0) + rate(A2, 0.0) > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                };
                *lower <= start && end < *upper
            }
            BoundSpec::CompensatorRatio { lower, upper } => {
                validate_divergence_sum([&r.curves[A3]]).divergent
                    && times.iter().filter(|&&t| t > 0.0).all(|&t| {
                        let a3 = comp(A3, t);
                        let a12 = comp(A1, t) + comp(A2, t);
                        lower * a3 <= a12 * (1.0 + slack) && a12 <= upper * a3 * (1.0 + slack)
                    })
            }
            BoundSpec::IntensityVsSum { lower, upper } => {
                validate_divergence_sum([&r.curves[A1], &r.curves[A2]]).divergent
                    && times.iter().all(|&t| {
                        let s = rate(A1, t) + rate(A2, t);
                        lower * s <= rate(A3, t) + slack && rate(A3, t) <= upper * s + slack
                    })
            }
        }
    }
}

/// Lower and upper bounds on `P(τ1 = τ2)` implied by `spec`.
pub fn prob_equal_bounds(spec: &BoundSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    Ok(match spec {
        BoundSpec::BoundedIntensity { lower, upper, .. } => (
            lower[2] / (upper[0] + upper[1] + upper[2]),
            upper[2] / (lower[0] + lower[1] + lower[2]),
        ),
        BoundSpec::BoundedSumCompensators { lower, upper } => ((-upper).exp(), (-lower).exp()),
        BoundSpec::CompensatorRatio { lower, upper } => (1.0 / (upper + 1.0), 1.0 / (lower + 1.0)),
        BoundSpec::IntensityVsSum { lower, upper } => {
            (lower / (upper + 1.0), upper / (lower + 1.0))
        }
    })
}

/// Split of the joint survival into an absolutely continuous part and a
/// part carried by the diagonal `τ1 = τ2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    /// Weight of the absolutely continuous part, `P(τ1 ≠ τ2)`.
    pub beta: f64,
    /// Absolutely continuous survival; `None` when `beta = 0`.
    pub f_aa_value: Option<f64>,
    /// Singular survival; `None` when `beta = 1`.
    pub f_sing_value: Option<f64>,
}

impl Decomposition {
    /// `β F_aa + (1 - β) F_sing`.
    pub fn reconstruct(&self) -> f64 {
        self.beta * self.f_aa_value.unwrap_or(0.0)
            + (1.0 - self.beta) * self.f_sing_value.unwrap_or(0.0)
    }
}

/// Decomposition of `P(τ1 > s, τ2 > t)` for deterministic intensities.
pub fn decompose(sc: &BivariateScenario, s: f64, t: f64) -> Result<Decomposition> {
    check_time("s", s)?;
    check_time("t", t)?;
    if !sc.is_deterministic() {
        return Err(Error::Unsupported(
            "the singular/absolutely continuous split needs deterministic intensities".into(),
        ));
    }
    let realized = sc.realize()?;
    let r = &realized[0];
    let beta = r
        .integrate(
            |x| (r.curves[A1].rate(x) + r.curves[A2].rate(x)) * (-r.sum_at(&ALL, x)).exp(),
            0.0,
            f64::INFINITY,
            total_rate(r, &ALL),
            &[],
            |x| (-r.sum_at(&ALL, x)).exp(),
            DEFAULT_TOL,
        )?
        .value;
    let survival = survival_on(r, s, t)?;
    let singular_tail = equal_mass(r, s.max(t), f64::INFINITY)?.value;
    let f_aa_value = (beta > 0.0).then(|| (survival - singular_tail) / beta);
    let f_sing_value = (beta < 1.0).then(|| singular_tail / (1.0 - beta));
    Ok(Decomposition {
        beta,
        f_aa_value,
        f_sing_value,
    })
}

/// `P(τ1 = τ2, τ1 ≤ t) = E[∫_0^t α³ e^{-ΣA}]`.
pub fn prob_equal_and_before(sc: &BivariateScenario, t: f64) -> Result<Evaluation> {
    check_time("t", t)?;
    let realized = sc.realize()?;
    let ev = ensemble::average(&realized, sc.stochastic(), |r| equal_mass(r, 0.0, t))?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

fn conditional<D>(sc: &BivariateScenario, t: f64, den: D) -> Result<Evaluation>
where
    D: Fn(&Realized) -> Result<f64> + Sync,
{
    check_time("t", t)?;
    if t == 0.0 {
        return Err(Error::UndefinedConditional { probability: 0.0 });
    }
    let realized = sc.realize()?;
    let ev = ensemble::average_ratio(&realized, sc.stochastic(), |r| {
        Ok((equal_mass(r, 0.0, t)?, den(r)?))
    })?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

/// `P(τ1 = τ2 | τ1 ≤ t)`.
pub fn prob_equal_given_tau1_before(sc: &BivariateScenario, t: f64) -> Result<Evaluation> {
    conditional(sc, t, |r| {
        let a = comp(&r.curves[A1], t)? + comp(&r.curves[A3], t)?;
        Ok(-(-a).exp_m1())
    })
}

/// `P(τ1 = τ2 | τ1 ≤ t, τ2 ≤ t)`.
pub fn prob_equal_given_both_before(sc: &BivariateScenario, t: f64) -> Result<Evaluation> {
    conditional(sc, t, |r| {
        let a = [
            comp(&r.curves[A1], t)?,
            comp(&r.curves[A2], t)?,
            comp(&r.curves[A3], t)?,
        ];
        Ok(both_within(a[0], a[1], a[2]))
    })
}

/// `1 - e^{-(a1+a3)} - e^{-(a2+a3)} + e^{-(a1+a2+a3)}`, accurate for small
/// arguments: the probability both times fall in a window over which the
/// compensators grow by `a1, a2, a3`.
fn both_within(a1: f64, a2: f64, a3: f64) -> f64 {
    let e = |x: f64| (-x).exp_m1();
    -e(a1 + a3) - e(a2 + a3) + e(a1 + a2 + a3)
}

/// `P(s < τ1 ≤ t, s < τ2 ≤ t)` by inclusion–exclusion; `t` may be infinite.
pub fn quadrant_prob(sc: &BivariateScenario, s: f64, t: f64) -> Result<Evaluation> {
    check_time("s", s)?;
    if !(s < t) {
        return Err(Error::InvalidInterval { s, t });
    }
    let realized = sc.realize()?;
    let ev = ensemble::average(&realized, sc.stochastic(), |r| {
        let v = survival_on(r, s, s)? - survival_on(r, t, s)? - survival_on(r, s, t)?
            + survival_on(r, t, t)?;
        Ok(exact(v.max(0.0)))
    })?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

/// `P(τ1, τ2 ∈ (t, t+ε] | τ1 > t, τ2 > t) / ε`; tends to `E[α³(X_t)]` as
/// `ε → 0`.
pub fn joint_hazard_ratio(sc: &BivariateScenario, t: f64, eps: f64) -> Result<Evaluation> {
    check_time("t", t)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let realized = sc.realize()?;
    let ev = ensemble::average_ratio(&realized, sc.stochastic(), |r| {
        let mut delta = [0.0; 3];
        for (i, d) in delta.iter_mut().enumerate() {
            *d = comp(&r.curves[i], t + eps)? - comp(&r.curves[i], t)?;
        }
        let at_risk = survival_on(r, t, t)?;
        let q = both_within(delta[0], delta[1], delta[2]);
        Ok((exact(at_risk * q / eps), at_risk))
    })?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

/// `P(|τ1 - τ2| ≤ ε)`.
pub fn prob_within_eps(sc: &BivariateScenario, eps: f64) -> Result<Evaluation> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("eps must be >= 0, got {eps}")));
    }
    let realized = sc.realize()?;
    if eps.is_infinite() {
        return Ok(Evaluation::exact(1.0).with_warnings(marginal_warnings(&realized)));
    }
    let ev = ensemble::average(&realized, sc.stochastic(), |r| {
        let c = &r.curves;
        let apart = |x: f64| {
            let ahead = x + eps;
            c[A1].rate(x) * (-c[A1].eval(x) - c[A2].eval(ahead) - c[A3].eval(ahead)).exp()
                + c[A2].rate(x) * (-c[A2].eval(x) - c[A1].eval(ahead) - c[A3].eval(ahead)).exp()
        };
        let q = r.integrate(
            apart,
            0.0,
            f64::INFINITY,
            total_rate(r, &ALL),
            &[eps],
            |x| (-r.sum_at(&ALL, x)).exp(),
            DEFAULT_TOL,
        )?;
        Ok(QuadratureResult {
            value: 1.0 - q.value,
            ..q
        })
    })?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

/// Per-path first and second moment ingredients.
#[derive(Debug, Clone, Copy)]
struct Moments {
    /// `E[τ1 | X]`, `E[τ2 | X]`.
    mean: [f64; 2],
    /// `∫ x e^{-A^i - A³} dx`, half of `E[τ_i² | X]`.
    half_second: [f64; 2],
    /// `E[τ1 τ2 | X]`.
    cross: f64,
    abs_error: f64,
}

fn infinite_moment(i: usize) -> Error {
    Error::InfiniteMoment(format!(
        "the compensator of tau{i} does not diverge, so tau{i} is infinite with positive probability"
    ))
}

/// Tail of `∫_T^∞ x^k e^{-B_x} dx` for `k ∈ {0, 1}` assuming `B` keeps
/// growing at its tail-half average rate.
fn moment_tail<'a>(r: &'a Realized, idx: &[usize], k: u32) -> impl Fn(f64) -> f64 + 'a {
    let growth = validate_divergence_sum(idx.iter().map(|&i| &r.curves[i])).tail_growth_rate;
    let idx = idx.to_vec();
    move |t: f64| {
        if growth <= 0.0 {
            return f64::INFINITY;
        }
        let e = (-r.sum_at(&idx, t)).exp();
        match k {
            0 => e / growth,
            _ => e * (t / growth + 1.0 / (growth * growth)),
        }
    }
}

fn marginal_moments(r: &Realized, tol: f64) -> Result<([f64; 2], [f64; 2], f64)> {
    let mut mean = [0.0; 2];
    let mut half = [0.0; 2];
    let mut err = 0.0;
    for (j, idio) in [A1, A2].into_iter().enumerate() {
        let idx = [idio, A3];
        if !validate_divergence_sum(idx.iter().map(|&i| &r.curves[i])).divergent {
            return Err(infinite_moment(j + 1));
        }
        let rate = total_rate(r, &idx);
        let m = r.integrate(
            |x| (-r.sum_at(&idx, x)).exp(),
            0.0,
            f64::INFINITY,
            rate,
            &[],
            moment_tail(r, &idx, 0),
            tol,
        )?;
        let h = r.integrate(
            |x| x * (-r.sum_at(&idx, x)).exp(),
            0.0,
            f64::INFINITY,
            rate,
            &[],
            moment_tail(r, &idx, 1),
            tol,
        )?;
        mean[j] = m.value;
        half[j] = h.value;
        err += m.abs_error_estimate + h.abs_error_estimate;
    }
    Ok((mean, half, err))
}

/// `E[τ1 τ2 | X] = ∫∫ P(τ1 > x, τ2 > y | X) dx dy`, split at the diagonal
/// and integrated as a planar double integral. Constant rates only.
fn cross_moment_planar(r: &Realized, tol: f64) -> Result<QuadratureResult> {
    let [l1, l2, l3] = [0, 1, 2].map(|i| r.curves[i].constant_rate().unwrap_or(0.0));
    let below = Integrand2D::new(|x: f64, y: f64| (-l1 * x - (l2 + l3) * y).exp())
        .with_decay((l2 + l3).min(l1 + l2 + l3));
    let above =
        Integrand2D::new(|x: f64, y: f64| (-(l1 + l3) * x - l2 * y).exp()).with_decay(l1 + l3);
    let lower = integrate_double(&below, Region::LowerTriangle, tol)?;
    let upper = integrate_double(&above, Region::UpperTriangle, tol)?;
    Ok(lower.add(upper))
}

/// The same cross moment through one-dimensional integrals of running
/// integrals:
/// `∫ e^{-A²_y-A³_y} G(y) dy + ∫ e^{-A²_y} H(y) dy` with
/// `G(y) = ∫_0^y e^{-A¹}` and `H(y) = ∫_y^∞ e^{-A¹-A³}`.
/// Works on any path.
pub(crate) fn cross_moment_factorized(r: &Realized, tol: f64) -> Result<QuadratureResult> {
    let running = RunningIntegrals::new(r, tol)?;
    let idx23 = [A2, A3];
    let first = r.integrate(
        |y| (-r.sum_at(&idx23, y)).exp() * running.below(y),
        0.0,
        f64::INFINITY,
        total_rate(r, &idx23),
        &[],
        |t| moment_tail(r, &idx23, 1)(t),
        tol,
    )?;
    let second = r.integrate(
        |y| (-r.curves[A2].eval(y)).exp() * running.above(y),
        0.0,
        f64::INFINITY,
        total_rate(r, &ALL),
        &[],
        |t| moment_tail(r, &[A1, A3], 0)(t) * moment_tail(r, &[A2], 0)(t).min(1e300),
        tol,
    )?;
    Ok(first.add(second).add(QuadratureResult {
        value: 0.0,
        abs_error_estimate: running.error,
        evaluations: 0,
    }))
}

/// `G(y) = ∫_0^y e^{-A¹}` and `H(y) = ∫_y^∞ e^{-A¹-A³}` with node-wise
/// cumulative sums on a path.
struct RunningIntegrals<'a> {
    r: &'a Realized,
    below_nodes: Vec<f64>,
    above_nodes: Vec<f64>,
    error: f64,
    tol: f64,
}

impl<'a> RunningIntegrals<'a> {
    fn new(r: &'a Realized, tol: f64) -> Result<Self> {
        let mut below_nodes = Vec::new();
        let mut above_nodes = Vec::new();
        let mut error = 0.0;
        if let Some(nodes) = &r.nodes {
            let g = |x: f64| (-r.curves[A1].eval(x)).exp();
            let h = |x: f64| (-r.sum_at(&[A1, A3], x)).exp();
            below_nodes.push(0.0);
            let mut pieces = Vec::with_capacity(nodes.len());
            for w in nodes.windows(2) {
                let a = integrate_interval(g, w[0], w[1], tol)?;
                let b = integrate_interval(h, w[0], w[1], tol)?;
                error += a.abs_error_estimate + b.abs_error_estimate;
                below_nodes.push(below_nodes.last().unwrap() + a.value);
                pieces.push(b.value);
            }
            let horizon = nodes[nodes.len() - 1];
            let tail = moment_tail(r, &[A1, A3], 0)(horizon);
            if tail > crate::ensemble::PATH_TAIL_LIMIT {
                return Err(Error::HorizonExceeded {
                    time: f64::INFINITY,
                    horizon,
                });
            }
            above_nodes = vec![0.0; nodes.len()];
            above_nodes[nodes.len() - 1] = tail;
            for k in (0..nodes.len() - 1).rev() {
                above_nodes[k] = above_nodes[k + 1] + pieces[k];
            }
        }
        Ok(RunningIntegrals {
            r,
            below_nodes,
            above_nodes,
            error,
            tol,
        })
    }

    fn segment(&self, y: f64) -> (usize, f64, f64) {
        let nodes = self.r.nodes.as_ref().expect("path realization");
        let idx = nodes.partition_point(|&t| t <= y);
        let k = idx.saturating_sub(1).min(nodes.len() - 2);
        (k, nodes[k], nodes[k + 1])
    }

    fn below(&self, y: f64) -> f64 {
        let g = |x: f64| (-self.r.curves[A1].eval(x)).exp();
        match &self.r.nodes {
            None => match self.r.curves[A1].constant_rate() {
                Some(l) if l > 0.0 => -(-l * y).exp_m1() / l,
                _ => y,
            },
            Some(_) => {
                let (k, t0, _) = self.segment(y);
                let part = integrate_interval(g, t0, y, self.tol * 1e-3).map_or(0.0, |q| q.value);
                self.below_nodes[k] + part
            }
        }
    }

    fn above(&self, y: f64) -> f64 {
        let h = |x: f64| (-self.r.sum_at(&[A1, A3], x)).exp();
        match &self.r.nodes {
            None => {
                let l = total_rate(self.r, &[A1, A3]);
                (-l * y).exp() / l
            }
            Some(_) => {
                let (k, _, t1) = self.segment(y);
                let part = integrate_interval(h, y, t1, self.tol * 1e-3).map_or(0.0, |q| q.value);
                self.above_nodes[k + 1] + part
            }
        }
    }
}

fn moments_on(r: &Realized, tol: f64) -> Result<Moments> {
    let (mean, half_second, err) = marginal_moments(r, tol)?;
    let cross = if r.nodes.is_none() {
        cross_moment_planar(r, tol)?
    } else {
        cross_moment_factorized(r, tol)?
    };
    Ok(Moments {
        mean,
        half_second,
        cross: cross.value,
        abs_error: err + cross.abs_error_estimate,
    })
}

/// Quadrature tolerance for the moment-based quantities.
const MOMENT_TOL: f64 = 1e-10;

/// `E[(τ1 - τ2)²] = 2[∫x S1 + ∫x S2 - E[τ1 τ2]]`.
pub fn l2_distance_sq(sc: &BivariateScenario) -> Result<Evaluation> {
    let realized = sc.realize()?;
    let ev = ensemble::average(&realized, sc.stochastic(), |r| {
        let m = moments_on(r, MOMENT_TOL)?;
        let v = 2.0 * (m.half_second[0] + m.half_second[1] - m.cross);
        Ok(QuadratureResult {
            value: v.max(0.0),
            abs_error_estimate: 2.0 * m.abs_error,
            evaluations: 0,
        })
    })?;
    Ok(ev.with_warnings(marginal_warnings(&realized)))
}

/// `Cov(τ1, τ2) = E[τ1 τ2] - E[τ1] E[τ2]`, expectations taken over the
/// state path as well.
pub fn covariance(sc: &BivariateScenario) -> Result<Evaluation> {
    let realized = sc.realize()?;
    let moments: Vec<Moments> = {
        use rayon::prelude::*;
        realized
            .par_iter()
            .map(|r| moments_on(r, MOMENT_TOL))
            .collect::<Result<_>>()?
    };
    let n = moments.len() as f64;
    let avg = |f: &dyn Fn(&Moments) -> f64| {
        ensemble::pairwise_sum(&moments.iter().map(f).collect::<Vec<_>>()) / n
    };
    let cross = avg(&|m| m.cross);
    let m1 = avg(&|m| m.mean[0]);
    let m2 = avg(&|m| m.mean[1]);
    let err = avg(&|m| m.abs_error);
    let resid: Vec<f64> = moments
        .iter()
        .map(|m| m.cross - m2 * m.mean[0] - m1 * m.mean[1])
        .collect();
    let (_, se) = ensemble::mean_and_se(&resid);
    Ok(Evaluation {
        value: cross - m1 * m2,
        abs_error_estimate: err * (1.0 + m1 + m2),
        std_error: sc.stochastic().then_some(se),
        warnings: marginal_warnings(&realized),
    })
}
