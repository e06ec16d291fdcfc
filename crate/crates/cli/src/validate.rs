//! Closed form versus Monte Carlo battery behind the `validate` command.

use serde::Serialize;
use simulstop::montecarlo::{
    covariance_from_centered, estimate_dyn, ratio_from_means, EstimateWithCI, SampleRng,
};
use simulstop::{
    bivariate as bv, gumbel, multivariate as mv, BivariateScenario, Error, Evaluation,
    GumbelScenario, PairSampler, SamplePair, ShockSystem, SystemSample, SystemSampler,
};

use crate::config::Scenario;
use crate::error::CliResult;

/// Smallest sample count `validate` accepts.
pub const MIN_VALIDATION_SAMPLES: u64 = 10_000;

/// Largest accepted `|z|` for a Monte Carlo row.
pub const Z_LIMIT: f64 = 3.0;

type Functional<S> = Box<dyn Fn(&S) -> f64 + Sync>;
type PairFunctional<S> = Box<dyn Fn(&S) -> (f64, f64) + Sync>;

pub enum Statistic<S> {
    Mean(Functional<S>),
    /// `E[a] / E[b]`.
    Ratio(PairFunctional<S>),
    Covariance(PairFunctional<S>),
}

pub struct McCheck<S> {
    pub name: String,
    pub closed_form: f64,
    /// Standard error of the closed form when it averages over random paths.
    pub closed_form_se: f64,
    pub statistic: Statistic<S>,
}

/// Two analytic routes to the same number.
pub struct IdentityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
}

pub struct Battery<S> {
    pub mc: Vec<McCheck<S>>,
    pub identities: Vec<IdentityCheck>,
}

impl<S> Battery<S> {
    fn new() -> Self {
        Battery {
            mc: Vec::new(),
            identities: Vec::new(),
        }
    }

    /// Adds a Monte Carlo row; closed forms that do not exist for this
    /// scenario (undefined moments, unsupported inputs) are skipped.
    fn push(
        &mut self,
        name: impl Into<String>,
        closed: simulstop::Result<Evaluation>,
        statistic: Statistic<S>,
    ) -> CliResult<()> {
        match closed {
            Ok(ev) => {
                self.mc.push(McCheck {
                    name: name.into(),
                    closed_form: ev.value,
                    closed_form_se: ev.std_error.unwrap_or(0.0),
                    statistic,
                });
                Ok(())
            }
            Err(Error::InfiniteMoment(_) | Error::Unsupported(_)) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn identity(&mut self, name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) {
        self.identities.push(IdentityCheck {
            name: name.into(),
            lhs,
            rhs,
            tolerance,
        });
    }
}

pub enum ScenarioBattery {
    Pair(PairSampler, Battery<SamplePair>),
    System(SystemSampler, Battery<SystemSample>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    MonteCarlo,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub kind: RowKind,
    pub closed_form: f64,
    /// Monte Carlo estimate, or the second analytic route for identities.
    pub mc_mean: f64,
    pub mc_se: Option<f64>,
    pub z_score: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub samples: u64,
    pub seed: u64,
    pub rows: Vec<CheckRow>,
    pub pass: bool,
}

fn ind(b: bool) -> f64 {
    b as u8 as f64
}

/// Solves `survival(t) = 1/2` roughly; the battery probes around this time.
fn median_time(survival: impl Fn(f64) -> simulstop::Result<f64>) -> CliResult<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut doublings = 0;
    while survival(hi)? > 0.5 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Ok(lo);
        }
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if survival(mid)? > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn pair_battery(sc: &BivariateScenario) -> CliResult<Battery<SamplePair>> {
    let t = median_time(|t| Ok(bv::joint_survival(sc, t, t)?.value))?;
    let mut b = Battery::new();
    b.push(
        "prob_equal",
        bv::prob_equal(sc),
        Statistic::Mean(Box::new(|p: &SamplePair| ind(p.equal))),
    )?;
    b.push(
        format!("joint_survival({t:.4}, {t:.4})"),
        bv::joint_survival(sc, t, t),
        Statistic::Mean(Box::new(
            move |p: &SamplePair| ind(p.tau1 > t && p.tau2 > t),
        )),
    )?;
    b.push(
        format!("marginal_survival(1, {t:.4})"),
        bv::marginal_survival(sc, 1, t),
        Statistic::Mean(Box::new(move |p: &SamplePair| ind(p.tau1 > t))),
    )?;
    b.push(
        format!("marginal_survival(2, {t:.4})"),
        bv::marginal_survival(sc, 2, t),
        Statistic::Mean(Box::new(move |p: &SamplePair| ind(p.tau2 > t))),
    )?;
    let (lo, hi) = (0.5 * t, 2.0 * t);
    b.push(
        format!("quadrant_prob({lo:.4}, {hi:.4})"),
        bv::quadrant_prob(sc, lo, hi),
        Statistic::Mean(Box::new(move |p: &SamplePair| {
            ind(p.tau1 > lo && p.tau1 <= hi && p.tau2 > lo && p.tau2 <= hi)
        })),
    )?;
    let eps = 0.5 * t;
    b.push(
        format!("prob_within_eps({eps:.4})"),
        bv::prob_within_eps(sc, eps),
        Statistic::Mean(Box::new(move |p: &SamplePair| {
            ind((p.tau1 - p.tau2).abs() <= eps)
        })),
    )?;
    b.push(
        format!("prob_equal_and_before({t:.4})"),
        bv::prob_equal_and_before(sc, t),
        Statistic::Mean(Box::new(move |p: &SamplePair| ind(p.equal && p.tau1 <= t))),
    )?;
    b.push(
        format!("prob_equal_given_tau1_before({t:.4})"),
        bv::prob_equal_given_tau1_before(sc, t),
        Statistic::Ratio(Box::new(move |p: &SamplePair| {
            (ind(p.equal && p.tau1 <= t), ind(p.tau1 <= t))
        })),
    )?;
    b.push(
        format!("prob_equal_given_both_before({t:.4})"),
        bv::prob_equal_given_both_before(sc, t),
        Statistic::Ratio(Box::new(move |p: &SamplePair| {
            (ind(p.equal && p.tau1 <= t), ind(p.tau1 <= t && p.tau2 <= t))
        })),
    )?;
    b.push(
        "l2_distance_sq",
        bv::l2_distance_sq(sc),
        Statistic::Mean(Box::new(|p: &SamplePair| (p.tau1 - p.tau2).powi(2))),
    )?;
    b.push(
        "covariance",
        bv::covariance(sc),
        Statistic::Covariance(Box::new(|p: &SamplePair| (p.tau1, p.tau2))),
    )?;

    let equal = bv::prob_equal(sc)?.value;
    b.identity(
        "prob_within_eps(0) = prob_equal",
        bv::prob_within_eps(sc, 0.0)?.value,
        equal,
        1e-10,
    );
    if let Some([l1, l2, l3]) = sc.constant_rates() {
        if l3 > 0.0 {
            let closed = bv::prob_equal_closed(bv::ClosedForm::Constant {
                rate1: l1,
                rate2: l2,
                rate3: l3,
            })?;
            b.identity("prob_equal = constant closed form", equal, closed, 1e-10);
        }
    }
    if sc.is_deterministic() {
        let d = bv::decompose(sc, t, lo)?;
        let survival = bv::joint_survival(sc, t, lo)?.value;
        b.identity(
            "decomposition reconstructs survival",
            d.reconstruct(),
            survival,
            1e-8,
        );
    }
    Ok(b)
}

fn gumbel_battery(gs: &GumbelScenario) -> CliResult<Battery<SamplePair>> {
    let t = median_time(|t| Ok(gumbel::gumbel_joint_survival(gs, t, t)?.value))?;
    let mut b = Battery::new();
    b.push(
        "prob_equal",
        gumbel::gumbel_prob_equal(gs),
        Statistic::Mean(Box::new(|p: &SamplePair| ind(p.equal))),
    )?;
    b.push(
        format!("joint_survival({t:.4}, {t:.4})"),
        gumbel::gumbel_joint_survival(gs, t, t),
        Statistic::Mean(Box::new(
            move |p: &SamplePair| ind(p.tau1 > t && p.tau2 > t),
        )),
    )?;
    for i in [1usize, 2] {
        b.push(
            format!("marginal_survival({i}, {t:.4})"),
            gumbel::gumbel_marginal_survival(gs, i, t),
            Statistic::Mean(Box::new(move |p: &SamplePair| {
                ind(if i == 1 { p.tau1 } else { p.tau2 } > t)
            })),
        )?;
    }
    if let (Some([l1, l2, l3]), true) = (gs.base.constant_rates(), gs.delta == 1.0) {
        let cov = gumbel::gumbel_covariance_constant(l1, l2, l3).map(|value| Evaluation {
            value,
            abs_error_estimate: 0.0,
            std_error: None,
            warnings: Vec::new(),
        });
        b.push(
            "covariance",
            cov,
            Statistic::Covariance(Box::new(|p: &SamplePair| (p.tau1, p.tau2))),
        )?;
    }
    let mo = bv::marginal_survival(&gs.base, 1, t)?.value;
    let g = gumbel::gumbel_marginal_survival(gs, 1, t)?.value;
    b.identity(
        "marginal matches the independent-threshold model",
        g,
        mo,
        1e-12,
    );
    Ok(b)
}

fn system_battery(
    sys: &ShockSystem,
    pattern: Option<simulstop::SubsetPattern>,
) -> CliResult<Battery<SystemSample>> {
    let n = sys.n();
    let t = median_time(|t| Ok(mv::joint_survival_n(sys, &vec![t; n])?.value))?;
    let mut b = Battery::new();
    b.push(
        "prob_all_equal",
        mv::prob_all_equal(sys),
        Statistic::Mean(Box::new(|x: &SystemSample| ind(x.all_equal()))),
    )?;
    b.push(
        format!("joint_survival({t:.4}, ...)"),
        mv::joint_survival_n(sys, &vec![t; n]),
        Statistic::Mean(Box::new(move |x: &SystemSample| {
            ind(x.taus.iter().all(|&s| s > t))
        })),
    )?;
    let pair = mv::pairwise_scenario(sys, 1, 2)?;
    b.push(
        "pairwise prob_equal(1, 2)",
        bv::prob_equal(&pair),
        Statistic::Mean(Box::new(|x: &SystemSample| ind(x.causes[0] == x.causes[1]))),
    )?;
    if let Some(p) = pattern {
        b.identity(
            "prob_all_equal = pattern closed form",
            mv::prob_all_equal(sys)?.value,
            mv::prob_all_equal_pattern(n, p)?,
            1e-9,
        );
    }
    Ok(b)
}

/// The battery applicable to `scenario`. `pattern` is the subset pattern
/// the system was built from, if any.
pub fn battery(
    scenario: &Scenario,
    pattern: Option<simulstop::SubsetPattern>,
) -> CliResult<ScenarioBattery> {
    Ok(match scenario {
        Scenario::Bivariate(sc) => ScenarioBattery::Pair(PairSampler::mo(sc)?, pair_battery(sc)?),
        Scenario::Gumbel(gs) => {
            ScenarioBattery::Pair(PairSampler::gumbel(gs)?, gumbel_battery(gs)?)
        }
        Scenario::System(sys) => {
            ScenarioBattery::System(SystemSampler::new(sys)?, system_battery(sys, pattern)?)
        }
    })
}

fn run_checks<S>(
    draw: impl Fn(&mut SampleRng) -> simulstop::Result<S> + Sync,
    battery: &Battery<S>,
    samples: u64,
    seed: u64,
) -> CliResult<Vec<CheckRow>> {
    // Column layout of the first pass: a mean takes one column, a ratio
    // five (a, b, a², b², ab), a covariance two (x, y).
    let mut offsets = Vec::with_capacity(battery.mc.len());
    let mut width = 0;
    for c in &battery.mc {
        offsets.push(width);
        width += match c.statistic {
            Statistic::Mean(_) => 1,
            Statistic::Ratio(_) => 5,
            Statistic::Covariance(_) => 2,
        };
    }
    let first = estimate_dyn(
        &draw,
        width,
        |s, row| {
            for (c, &o) in battery.mc.iter().zip(&offsets) {
                match &c.statistic {
                    Statistic::Mean(f) => row[o] = f(s),
                    Statistic::Ratio(f) => {
                        let (a, b) = f(s);
                        row[o..o + 5].copy_from_slice(&[a, b, a * a, b * b, a * b]);
                    }
                    Statistic::Covariance(f) => {
                        let (x, y) = f(s);
                        row[o] = x;
                        row[o + 1] = y;
                    }
                }
            }
        },
        samples,
        seed,
    )?;
    let covs: Vec<(usize, f64, f64)> = battery
        .mc
        .iter()
        .zip(&offsets)
        .enumerate()
        .filter(|(_, (c, _))| matches!(c.statistic, Statistic::Covariance(_)))
        .map(|(k, (_, &o))| (k, first[o].mean, first[o + 1].mean))
        .collect();
    let second = if covs.is_empty() {
        Vec::new()
    } else {
        estimate_dyn(
            &draw,
            covs.len(),
            |s, row| {
                for (slot, &(k, mx, my)) in row.iter_mut().zip(&covs) {
                    if let Statistic::Covariance(f) = &battery.mc[k].statistic {
                        let (x, y) = f(s);
                        *slot = (x - mx) * (y - my);
                    }
                }
            },
            samples,
            seed,
        )?
    };

    let mut rows = Vec::new();
    for (k, (c, &o)) in battery.mc.iter().zip(&offsets).enumerate() {
        let est: EstimateWithCI = match c.statistic {
            Statistic::Mean(_) => first[o],
            Statistic::Ratio(_) => ratio_from_means([
                first[o],
                first[o + 1],
                first[o + 2],
                first[o + 3],
                first[o + 4],
            ])?,
            Statistic::Covariance(_) => {
                let j = covs
                    .iter()
                    .position(|x| x.0 == k)
                    .expect("covariance column");
                covariance_from_centered(second[j])
            }
        };
        let se = est.std_error.hypot(c.closed_form_se);
        let diff = est.mean - c.closed_form;
        let z = if diff == 0.0 { 0.0 } else { diff / se };
        rows.push(CheckRow {
            name: c.name.clone(),
            kind: RowKind::MonteCarlo,
            closed_form: c.closed_form,
            mc_mean: est.mean,
            mc_se: Some(est.std_error),
            z_score: Some(z),
            tolerance: None,
            pass: z.abs() <= Z_LIMIT,
        });
    }
    for id in &battery.identities {
        rows.push(CheckRow {
            name: id.name.clone(),
            kind: RowKind::Identity,
            closed_form: id.lhs,
            mc_mean: id.rhs,
            mc_se: None,
            z_score: None,
            tolerance: Some(id.tolerance),
            pass: (id.lhs - id.rhs).abs() <= id.tolerance,
        });
    }
    Ok(rows)
}

pub fn run(battery: &ScenarioBattery, samples: u64, seed: u64) -> CliResult<ValidationReport> {
    if samples < MIN_VALIDATION_SAMPLES {
        return Err(crate::error::CliError::config(format!(
            "validate needs at least {MIN_VALIDATION_SAMPLES} samples, got {samples}"
        )));
    }
    let rows = match battery {
        ScenarioBattery::Pair(s, b) => run_checks(|r| s.sample(r), b, samples, seed)?,
        ScenarioBattery::System(s, b) => run_checks(|r| s.sample(r), b, samples, seed)?,
    };
    Ok(ValidationReport {
        samples,
        seed,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

pub fn validate(
    scenario: &Scenario,
    pattern: Option<simulstop::SubsetPattern>,
    samples: u64,
    seed: u64,
) -> CliResult<ValidationReport> {
    run(&battery(scenario, pattern)?, samples, seed)
}
