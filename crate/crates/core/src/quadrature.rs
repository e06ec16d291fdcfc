//! Adaptive Gauss–Kronrod integration on bounded intervals, on `[0, ∞)` and
//! on the positive quadrant split along the diagonal.
//!
//! Every routine counts integrand calls against a shared budget of
//! [`EVALUATION_BUDGET`] and reports [`Error::BudgetExceeded`] with the partial
//! estimate when the budget runs out before the tolerance is met.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Default absolute tolerance used by the analytic evaluators.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Maximum number of integrand calls per top-level invocation.
pub const EVALUATION_BUDGET: usize = 10_000_000;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

/// A function on `[0, ∞)` with an optional exponential decay rate `r` such
/// that `|f(x)| <= C e^{-r x}` for large `x`.
pub struct Integrand1D<F> {
    eval: F,
    decay_hint: Option<f64>,
}

impl<F: Fn(f64) -> f64> Integrand1D<F> {
    pub fn new(eval: F) -> Self {
        Integrand1D {
            eval,
            decay_hint: None,
        }
    }

    pub fn with_decay(mut self, rate: f64) -> Self {
        self.decay_hint = (rate.is_finite() && rate > 0.0).then_some(rate);
        self
    }

    pub fn decay_hint(&self) -> Option<f64> {
        self.decay_hint
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

/// A function on the positive quadrant, with the same decay convention as
/// [`Integrand1D`] applied along each axis.
pub struct Integrand2D<F> {
    eval: F,
    decay_hint: Option<f64>,
}

impl<F: Fn(f64, f64) -> f64> Integrand2D<F> {
    pub fn new(eval: F) -> Self {
        Integrand2D {
            eval,
            decay_hint: None,
        }
    }

    pub fn with_decay(mut self, rate: f64) -> Self {
        self.decay_hint = (rate.is_finite() && rate > 0.0).then_some(rate);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

impl QuadratureResult {
    pub(crate) const ZERO: QuadratureResult = QuadratureResult {
        value: 0.0,
        abs_error_estimate: 0.0,
        evaluations: 0,
    };

    pub(crate) fn add(self, other: QuadratureResult) -> QuadratureResult {
        QuadratureResult {
            value: self.value + other.value,
            abs_error_estimate: self.abs_error_estimate + other.abs_error_estimate,
            evaluations: self.evaluations + other.evaluations,
        }
    }
}

/// Integration region for [`integrate_double`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `[0, ∞) × [0, ∞)`.
    FullQuadrant,
    /// `{ (x, y) : 0 <= x < y }`.
    LowerTriangle,
    /// `{ (x, y) : x > y >= 0 }`.
    UpperTriangle,
}

/// Call counter shared by nested integrations.
pub(crate) struct Budget {
    used: Cell<usize>,
    limit: usize,
}

impl Budget {
    pub(crate) fn new(limit: usize) -> Self {
        Budget {
            used: Cell::new(0),
            limit,
        }
    }

    fn charge(&self, n: usize) -> bool {
        let used = self.used.get() + n;
        self.used.set(used);
        used <= self.limit
    }

    pub(crate) fn used(&self) -> usize {
        self.used.get()
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod panel with the QUADPACK error heuristic.
fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = fc.abs() * WGK[10];
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

pub(crate) fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    budget: &Budget,
) -> Result<QuadratureResult> {
    if a == b {
        return Ok(QuadratureResult::ZERO);
    }
    let start = budget.used();
    let (value, error) = kronrod21(f, a, b);
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "integrand is not finite on [{a}, {b}]"
        )));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    if !budget.charge(21) {
        return Err(budget_error(total, total_err, budget));
    }
    loop {
        if total_err <= tol || total_err <= 50.0 * f64::EPSILON * total.abs() {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b || (worst.b - worst.a) < 1e-14 * worst.a.abs().max(1.0)
        {
            // Interval can no longer be split in floating point.
            heap.push(Segment {
                error: 0.0,
                ..worst
            });
            if heap.iter().all(|s| s.error == 0.0) {
                break;
            }
            continue;
        }
        let (v1, e1) = kronrod21(f, worst.a, mid);
        let (v2, e2) = kronrod21(f, mid, worst.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Numeric(format!(
                "integrand is not finite on [{}, {}]",
                worst.a, worst.b
            )));
        }
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        if !budget.charge(42) {
            return Err(budget_error(total, total_err, budget));
        }
    }
    // Re-sum to shed the drift of the running totals.
    let (value, err) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(QuadratureResult {
        value,
        abs_error_estimate: err.max(0.0),
        evaluations: budget.used() - start,
    })
}

fn budget_error(partial: f64, abs_error: f64, budget: &Budget) -> Error {
    Error::BudgetExceeded {
        partial,
        abs_error,
        evaluations: budget.used(),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "tolerance must be positive, got {tol}"
        )))
    }
}

/// Integrates `f` over the bounded interval `[a, b]`.
pub fn integrate_interval<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<QuadratureResult> {
    check_tol(tol)?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("interval ends must be finite"));
    }
    let budget = Budget::new(EVALUATION_BUDGET);
    if b < a {
        let r = adaptive(&f, b, a, tol, &budget)?;
        return Ok(QuadratureResult {
            value: -r.value,
            ..r
        });
    }
    adaptive(&f, a, b, tol, &budget)
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, never placing a panel
/// across an interior break point. The tolerance is shared among pieces in
/// proportion to their length.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    tol: f64,
) -> Result<QuadratureResult> {
    check_tol(tol)?;
    let budget = Budget::new(EVALUATION_BUDGET);
    integrate_breaks_budgeted(&f, breaks, tol, &budget)
}

pub(crate) fn integrate_breaks_budgeted<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    tol: f64,
    budget: &Budget,
) -> Result<QuadratureResult> {
    if breaks.len() < 2 {
        return Ok(QuadratureResult::ZERO);
    }
    let span = breaks[breaks.len() - 1] - breaks[0];
    if span <= 0.0 {
        return Ok(QuadratureResult::ZERO);
    }
    let mut acc = QuadratureResult::ZERO;
    for w in breaks.windows(2) {
        let piece_tol = tol * (w[1] - w[0]) / span;
        acc = acc.add(adaptive(f, w[0], w[1], piece_tol.max(1e-300), budget)?);
    }
    Ok(acc)
}

/// Truncation horizon `T` such that the estimated tail mass `C e^{-rT}/r`
/// falls below `tol / 10`, with `C` estimated from samples of `|f| e^{r x}`.
fn truncation_horizon<F: Fn(f64) -> f64>(f: &F, rate: f64, tol: f64) -> f64 {
    let c = (0..=8)
        .map(|k| {
            let x = k as f64 / rate;
            let v = f(x).abs() * (rate * x).exp();
            if v.is_finite() {
                v
            } else {
                0.0
            }
        })
        .fold(0.0_f64, f64::max);
    if c <= 0.0 {
        return 8.0 / rate;
    }
    let t = (10.0 * c / (rate * tol)).ln() / rate;
    t.max(1.0 / rate)
}

pub(crate) fn semi_infinite_budgeted<F: Fn(f64) -> f64>(
    f: &F,
    decay: Option<f64>,
    tol: f64,
    budget: &Budget,
) -> Result<QuadratureResult> {
    match decay {
        Some(rate) => {
            let horizon = truncation_horizon(f, rate, tol);
            let head = adaptive(f, 0.0, horizon, 0.5 * tol, budget)?;
            let tail = tail_from(f, horizon, 0.5 * tol, budget)?;
            Ok(head.add(tail))
        }
        None => tail_from(f, 0.0, tol, budget),
    }
}

/// `∫_a^∞ f` through the map `x = a + u / (1 - u)` onto `(0, 1)`.
fn tail_from<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    tol: f64,
    budget: &Budget,
) -> Result<QuadratureResult> {
    let mapped = |u: f64| {
        let w = 1.0 - u;
        if w <= 0.0 {
            return 0.0;
        }
        let v = f(a + u / w) / (w * w);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    adaptive(&mapped, 0.0, 1.0, tol, budget)
}

/// Integrates `f` over `[0, ∞)`.
///
/// With a decay hint the range is truncated where the estimated tail mass is
/// below `tol / 10` and the remaining tail is still integrated through the
/// map `x = T + u/(1-u)`, so a pessimistic hint costs evaluations but not
/// accuracy. Without a hint the whole half-line is mapped onto `(0, 1)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: &Integrand1D<F>,
    tol: f64,
) -> Result<QuadratureResult> {
    check_tol(tol)?;
    let budget = Budget::new(EVALUATION_BUDGET);
    semi_infinite_budgeted(&f.eval, f.decay_hint, tol, &budget)
}

/// Iterated integration over a planar region of the quadrant. The inner
/// integral runs over `x` for fixed `y` with tolerance `tol / 10`.
pub fn integrate_double<F: Fn(f64, f64) -> f64>(
    f: &Integrand2D<F>,
    region: Region,
    tol: f64,
) -> Result<QuadratureResult> {
    check_tol(tol)?;
    let budget = Budget::new(EVALUATION_BUDGET);
    let inner_tol = tol / 10.0;
    let decay = f.decay_hint;
    let failure: Cell<Option<Error>> = Cell::new(None);
    let inner = |y: f64| -> f64 {
        if let Some(e) = failure.take() {
            failure.set(Some(e));
            return 0.0;
        }
        let g = |x: f64| (f.eval)(x, y);
        let r = match region {
            Region::FullQuadrant => semi_infinite_budgeted(&g, decay, inner_tol, &budget),
            Region::LowerTriangle => adaptive(&g, 0.0, y, inner_tol, &budget),
            Region::UpperTriangle => {
                let shifted = |u: f64| g(y + u);
                semi_infinite_budgeted(&shifted, decay, inner_tol, &budget)
            }
        };
        match r {
            Ok(r) => r.value,
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        }
    };
    let outer = semi_infinite_budgeted(&inner, decay, tol * 0.9, &budget);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let outer = outer?;
    let inner_mass = decay.map_or(1.0, |r| 1.0 / r);
    Ok(QuadratureResult {
        value: outer.value,
        abs_error_estimate: outer.abs_error_estimate + inner_tol * inner_mass,
        evaluations: budget.used(),
    })
}
