//! `n` default times driven by shocks indexed by nonempty subsets of the
//! components: a `J`-shock kills every member of `J` at once, and
//! `τ_i` is the first shock whose subset contains `i`.

use serde::{Deserialize, Serialize};

use crate::bivariate::BivariateScenario;
use crate::ensemble::{self, Evaluation, PathSource, Realized};
use crate::error::{Error, Result};
use crate::intensity::IntensityModel;
use crate::quadrature::{QuadratureResult, DEFAULT_TOL};

pub const MAX_COMPONENTS: usize = 12;

/// Above this many shock terms exponents are summed with compensation.
const COMPENSATED_SUM_THRESHOLD: usize = 64;

/// One shock channel: the components it hits (1-indexed, ascending) and
/// its intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct Shock {
    members: Vec<usize>,
    mask: u16,
    pub model: IntensityModel,
}

impl Shock {
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn hits(&self, component: usize) -> bool {
        self.mask & (1 << (component - 1)) != 0
    }

    pub(crate) fn mask(&self) -> u16 {
        self.mask
    }
}

/// A system of `n` components and its shock channels; subsets without an
/// entry have zero intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockSystem {
    n: usize,
    shocks: Vec<Shock>,
    pub paths: PathSource,
}

/// Intensity families over all `2^n - 1` subsets, built from one base rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// `α^J = α / |J|`.
    Fractional,
    /// `α^J = |J| · α`.
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetPattern {
    pub kind: PatternKind,
    pub base_rate: f64,
}

impl SubsetPattern {
    fn validate(&self) -> Result<()> {
        if self.base_rate.is_finite() && self.base_rate > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "pattern base rate must be positive, got {}",
                self.base_rate
            )))
        }
    }

    fn rate_for(&self, size: usize) -> f64 {
        match self.kind {
            PatternKind::Fractional => self.base_rate / size as f64,
            PatternKind::Multiplicative => self.base_rate * size as f64,
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if (2..=MAX_COMPONENTS).contains(&n) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "component count must be between 2 and {MAX_COMPONENTS}, got {n}"
        )))
    }
}

impl ShockSystem {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(ShockSystem {
            n,
            shocks: Vec::new(),
            paths: PathSource::Deterministic,
        })
    }

    /// Adds a shock hitting `members` (1-indexed; order and repeats are
    /// normalized away).
    pub fn with_shock(mut self, members: &[usize], model: IntensityModel) -> Result<Self> {
        let mut m = members.to_vec();
        m.sort_unstable();
        m.dedup();
        if m.is_empty() {
            return Err(Error::invalid("a shock must hit at least one component"));
        }
        if let Some(&bad) = m.iter().find(|&&i| i == 0 || i > self.n) {
            return Err(Error::invalid(format!(
                "shock member {bad} is outside 1..={}",
                self.n
            )));
        }
        let mask = m.iter().fold(0u16, |acc, &i| acc | 1 << (i - 1));
        if self.shocks.iter().any(|s| s.mask == mask) {
            return Err(Error::invalid(format!("shock {m:?} is listed twice")));
        }
        model.validate()?;
        self.shocks.push(Shock {
            members: m,
            mask,
            model,
        });
        self.shocks.sort_by(|a, b| a.members.cmp(&b.members));
        Ok(self)
    }

    pub fn from_pattern(n: usize, pattern: SubsetPattern) -> Result<Self> {
        check_n(n)?;
        pattern.validate()?;
        let mut sys = ShockSystem::new(n)?;
        for mask in 1u16..(1 << n) {
            let members: Vec<usize> = (1..=n).filter(|&i| mask & (1 << (i - 1)) != 0).collect();
            let rate = pattern.rate_for(members.len());
            sys = sys.with_shock(&members, IntensityModel::constant(rate))?;
        }
        Ok(sys)
    }

    pub fn with_paths(mut self, paths: PathSource) -> Self {
        self.paths = paths;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Shocks in canonical (lexicographic by member list) order.
    pub fn shocks(&self) -> &[Shock] {
        &self.shocks
    }

    fn grand_mask(&self) -> u16 {
        ((1u32 << self.n) - 1) as u16
    }

    /// Every component must be reachable by a shock that can fire.
    pub fn validate(&self) -> Result<()> {
        for i in 1..=self.n {
            let covered = self
                .shocks
                .iter()
                .any(|s| s.hits(i) && s.model.constant_rate() != Some(0.0));
            if !covered {
                return Err(Error::invalid(format!(
                    "component {i} is not hit by any shock with nonzero intensity"
                )));
            }
        }
        self.realize().map(|_| ())
    }

    pub(crate) fn realize(&self) -> Result<Vec<Realized>> {
        let models: Vec<&IntensityModel> = self.shocks.iter().map(|s| &s.model).collect();
        ensemble::realize(&models, &self.paths)
    }

    fn stochastic(&self) -> bool {
        self.paths.is_stochastic() && self.shocks.iter().any(|s| s.model.is_path_driven())
    }
}

/// Sum that switches to Kahan compensation for long inputs.
fn exponent_sum(terms: impl ExactSizeIterator<Item = f64>) -> f64 {
    if terms.len() <= COMPENSATED_SUM_THRESHOLD {
        return terms.sum();
    }
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in terms {
        let y = x - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// `P(τ_1 > s_1, …, τ_n > s_n) = E[exp(-Σ_J A^J(max_{i∈J} s_i))]`.
pub fn joint_survival_n(sys: &ShockSystem, s: &[f64]) -> Result<Evaluation> {
    if s.len() != sys.n {
        return Err(Error::ShapeMismatch {
            expected: sys.n,
            got: s.len(),
        });
    }
    if let Some(bad) = s.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::invalid(format!("times must be >= 0, got {bad}")));
    }
    let horizons: Vec<f64> = sys
        .shocks
        .iter()
        .map(|sh| sh.members.iter().map(|&i| s[i - 1]).fold(0.0, f64::max))
        .collect();
    let realized = sys.realize()?;
    ensemble::average(&realized, sys.stochastic(), |r| {
        let terms = r
            .curves
            .iter()
            .zip(&horizons)
            .map(|(c, &h)| c.at(h))
            .collect::<Result<Vec<f64>>>()?;
        Ok(QuadratureResult {
            value: (-exponent_sum(terms.into_iter())).exp(),
            abs_error_estimate: 0.0,
            evaluations: 0,
        })
    })
}

/// `P(τ_1 = … = τ_n) = E[∫_0^∞ α^{1..n}_u e^{-Σ_J A^J_u} du]`.
pub fn prob_all_equal(sys: &ShockSystem) -> Result<Evaluation> {
    let grand = sys.grand_mask();
    let Some(g) = sys.shocks.iter().position(|s| s.mask == grand) else {
        return Ok(Evaluation::exact(0.0));
    };
    if sys.shocks[g].model.constant_rate() == Some(0.0) {
        return Ok(Evaluation::exact(0.0));
    }
    let realized = sys.realize()?;
    ensemble::average(&realized, sys.stochastic(), |r| {
        let total = |u: f64| exponent_sum(r.curves.iter().map(|c| c.eval(u)));
        let decay: f64 = r.curves.iter().filter_map(|c| c.constant_rate()).sum();
        r.integrate(
            |u| r.curves[g].rate(u) * (-total(u)).exp(),
            0.0,
            f64::INFINITY,
            decay,
            &[],
            |u| (-total(u)).exp(),
            DEFAULT_TOL,
        )
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Closed form of [`prob_all_equal`] for the subset patterns:
/// `(1/n) / Σ_k C(n,k)/k` (fractional) and `1/2^{n-1}` (multiplicative).
pub fn prob_all_equal_pattern(n: usize, pattern: SubsetPattern) -> Result<f64> {
    check_n(n)?;
    pattern.validate()?;
    Ok(match pattern.kind {
        PatternKind::Fractional => {
            let denom: f64 = (1..=n).map(|k| binomial(n, k) / k as f64).sum();
            1.0 / (n as f64 * denom)
        }
        PatternKind::Multiplicative => 0.5f64.powi(n as i32 - 1),
    })
}

/// The two-component model seen by components `i` and `j`: shocks hitting
/// only `i`, only `j`, and both are superposed into `α¹`, `α²` and `α³`.
pub fn pairwise_scenario(sys: &ShockSystem, i: usize, j: usize) -> Result<BivariateScenario> {
    let valid = |k: usize| (1..=sys.n).contains(&k);
    if !(valid(i) && valid(j)) || i == j {
        return Err(Error::invalid(format!(
            "pair ({i}, {j}) must be two distinct components in 1..={}",
            sys.n
        )));
    }
    let group = |pred: &dyn Fn(&Shock) -> bool| {
        let models: Vec<&IntensityModel> = sys
            .shocks
            .iter()
            .filter(|s| pred(s))
            .map(|s| &s.model)
            .collect();
        if models.is_empty() {
            IntensityModel::constant(0.0)
        } else {
            IntensityModel::sum(models)
        }
    };
    Ok(BivariateScenario::new(
        group(&|s| s.hits(i) && !s.hits(j)),
        group(&|s| s.hits(j) && !s.hits(i)),
        group(&|s| s.hits(i) && s.hits(j)),
    )
    .with_paths(sys.paths.clone()))
}
