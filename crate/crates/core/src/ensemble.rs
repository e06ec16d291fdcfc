//! Outer expectation over the background state: where the paths come from,
//! how a conditional closed form is integrated along one path, and how the
//! per-path results are reduced.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::intensity::{CompensatorCurve, IntensityModel, OuSpec, StatePath};
use crate::quadrature::{
    integrate_breaks_budgeted, semi_infinite_budgeted, Budget, QuadratureResult, EVALUATION_BUDGET,
};

pub const DEFAULT_ENSEMBLE_SIZE: usize = 256;

/// Largest tail mass beyond the end of a state path that is tolerated
/// (and folded into the error estimate) when integrating to infinity.
pub const PATH_TAIL_LIMIT: f64 = 1e-9;

/// Source of the state process `X`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PathSource {
    /// No state path; only constant and proportional-of-constant models.
    #[default]
    Deterministic,
    /// One known trajectory; results are conditional on it.
    Fixed(StatePath),
    /// Equally weighted sample of trajectories.
    Ensemble(Vec<StatePath>),
    /// Ornstein–Uhlenbeck paths simulated on demand; path `k` uses seed
    /// `seed + k`.
    Ou {
        spec: OuSpec,
        ensemble_size: usize,
        seed: u64,
    },
}

impl PathSource {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, PathSource::Ensemble(_) | PathSource::Ou { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PathSource::Ensemble(paths) if paths.is_empty() => {
                Err(Error::invalid("path ensemble is empty"))
            }
            PathSource::Ou { ensemble_size, .. } if *ensemble_size == 0 => {
                Err(Error::invalid("OU ensemble size must be positive"))
            }
            PathSource::Ou { spec, .. } => spec.simulate(0).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Number of paths the outer expectation averages over.
    pub fn len(&self) -> usize {
        match self {
            PathSource::Deterministic => 0,
            PathSource::Fixed(_) => 1,
            PathSource::Ensemble(p) => p.len(),
            PathSource::Ou { ensemble_size, .. } => *ensemble_size,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `k`-th path of the source (cyclic for finite ensembles; fresh
    /// simulation for OU).
    pub fn path(&self, k: u64) -> Result<Option<StatePath>> {
        Ok(match self {
            PathSource::Deterministic => None,
            PathSource::Fixed(p) => Some(p.clone()),
            PathSource::Ensemble(p) => Some(p[(k % p.len() as u64) as usize].clone()),
            PathSource::Ou { spec, seed, .. } => Some(spec.simulate(seed.wrapping_add(k))?),
        })
    }
}

/// A quantity computed by the analytic evaluators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub value: f64,
    /// Quadrature error bound, averaged over the paths.
    pub abs_error_estimate: f64,
    /// Standard error of the outer path average; absent for deterministic
    /// and fixed-path scenarios.
    pub std_error: Option<f64>,
    pub warnings: Vec<String>,
}

impl Evaluation {
    pub(crate) fn exact(value: f64) -> Self {
        Evaluation {
            value,
            abs_error_estimate: 0.0,
            std_error: None,
            warnings: Vec::new(),
        }
    }

    pub(crate) fn with_warnings(mut self, warnings: Vec<String>) -> Self {
        self.warnings = warnings;
        self
    }
}

/// The intensities of a scenario realized along one path.
#[derive(Debug, Clone)]
pub(crate) struct Realized {
    pub curves: Vec<CompensatorCurve>,
    pub nodes: Option<Arc<[f64]>>,
}

pub(crate) fn realize(models: &[&IntensityModel], source: &PathSource) -> Result<Vec<Realized>> {
    for m in models {
        m.validate()?;
    }
    source.validate()?;
    if models.iter().all(|m| !m.is_path_driven()) {
        let curves = models
            .iter()
            .map(|m| CompensatorCurve::new(m, None))
            .collect::<Result<_>>()?;
        return Ok(vec![Realized {
            curves,
            nodes: None,
        }]);
    }
    if matches!(source, PathSource::Deterministic) {
        return Err(Error::invalid(
            "scenario has a path-driven intensity but no state path",
        ));
    }
    (0..source.len() as u64)
        .into_par_iter()
        .map(|k| {
            let path = source
                .path(k)?
                .expect("non-deterministic source yields paths");
            realize_on(models, &path)
        })
        .collect()
}

pub(crate) fn realize_on(models: &[&IntensityModel], path: &StatePath) -> Result<Realized> {
    let times: Arc<[f64]> = path.grid().into();
    let curves = models
        .iter()
        .map(|m| CompensatorCurve::on_grid(m, path, times.clone()))
        .collect::<Result<_>>()?;
    Ok(Realized {
        curves,
        nodes: Some(times),
    })
}

impl Realized {
    /// `Σ_i A^i_s` over the curves selected by `idx`.
    #[inline]
    pub fn sum_at(&self, idx: &[usize], s: f64) -> f64 {
        idx.iter().map(|&i| self.curves[i].eval(s)).sum()
    }

    /// `∫_lower^upper f`, with `upper` possibly infinite.
    ///
    /// Constant scenarios use the semi-infinite rule with decay hint `decay`.
    /// On a path the integral stops at the horizon (less the largest entry
    /// of `shifts`, for integrands that look ahead by that much), panels
    /// break at every grid node and at every node minus each shift, and
    /// `tail(T)` must bound what lies beyond the stopping point `T`.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate(
        &self,
        f: impl Fn(f64) -> f64,
        lower: f64,
        upper: f64,
        decay: f64,
        shifts: &[f64],
        tail: impl Fn(f64) -> f64,
        tol: f64,
    ) -> Result<QuadratureResult> {
        let budget = Budget::new(EVALUATION_BUDGET);
        match &self.nodes {
            None => {
                if upper.is_finite() {
                    integrate_breaks_budgeted(&f, &[lower, upper], tol, &budget)
                } else {
                    let g = |u: f64| f(lower + u);
                    let hint = (decay.is_finite() && decay > 0.0).then_some(decay);
                    semi_infinite_budgeted(&g, hint, tol, &budget)
                }
            }
            Some(nodes) => {
                let lookahead = shifts.iter().copied().fold(0.0, f64::max);
                let horizon = nodes[nodes.len() - 1];
                let stop = upper.min(horizon - lookahead);
                if upper > stop && upper.is_finite() {
                    return Err(Error::HorizonExceeded {
                        time: upper + lookahead,
                        horizon,
                    });
                }
                let mut breaks: Vec<f64> = vec![lower, stop];
                for &shift in std::iter::once(&0.0).chain(shifts) {
                    breaks.extend(
                        nodes
                            .iter()
                            .map(|&t| t - shift)
                            .filter(|&t| t > lower && t < stop),
                    );
                }
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                if stop <= lower {
                    breaks.truncate(1);
                }
                let mut r = integrate_breaks_budgeted(&f, &breaks, tol, &budget)?;
                if upper.is_infinite() {
                    let t = tail(stop.max(lower));
                    if t > PATH_TAIL_LIMIT {
                        return Err(Error::HorizonExceeded {
                            time: f64::INFINITY,
                            horizon,
                        });
                    }
                    r.abs_error_estimate += t;
                }
                Ok(r)
            }
        }
    }
}

/// Sum with pairwise (cascade) splitting; the split points depend only on
/// the length, so the result is reproducible for a fixed input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error of the mean.
pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `f` on every realization in parallel and averages in path order.
pub(crate) fn average<F>(realized: &[Realized], stochastic: bool, f: F) -> Result<Evaluation>
where
    F: Fn(&Realized) -> Result<QuadratureResult> + Sync,
{
    let results: Vec<QuadratureResult> = realized.par_iter().map(&f).collect::<Result<_>>()?;
    let values: Vec<f64> = results.iter().map(|r| r.value).collect();
    let errors: Vec<f64> = results.iter().map(|r| r.abs_error_estimate).collect();
    let (mean, se) = mean_and_se(&values);
    Ok(Evaluation {
        value: mean,
        abs_error_estimate: pairwise_sum(&errors) / errors.len() as f64,
        std_error: stochastic.then_some(se),
        warnings: Vec::new(),
    })
}

/// Ratio of path averages `E[num] / E[den]`, with a delta-method standard
/// error. `f` returns the numerator (with its quadrature error) and the
/// denominator of one path.
pub(crate) fn average_ratio<F>(realized: &[Realized], stochastic: bool, f: F) -> Result<Evaluation>
where
    F: Fn(&Realized) -> Result<(QuadratureResult, f64)> + Sync,
{
    let results: Vec<(QuadratureResult, f64)> =
        realized.par_iter().map(&f).collect::<Result<_>>()?;
    let nums: Vec<f64> = results.iter().map(|r| r.0.value).collect();
    let dens: Vec<f64> = results.iter().map(|r| r.1).collect();
    let errs: Vec<f64> = results.iter().map(|r| r.0.abs_error_estimate).collect();
    let n = results.len() as f64;
    let num = pairwise_sum(&nums) / n;
    let den = pairwise_sum(&dens) / n;
    if !(den >= 1e-12) {
        return Err(Error::UndefinedConditional { probability: den });
    }
    let ratio = num / den;
    let resid: Vec<f64> = nums.iter().zip(&dens).map(|(a, b)| a - ratio * b).collect();
    let (_, se) = mean_and_se(&resid);
    Ok(Evaluation {
        value: ratio,
        abs_error_estimate: pairwise_sum(&errs) / n / den,
        std_error: stochastic.then_some(se / den),
        warnings: Vec::new(),
    })
}
