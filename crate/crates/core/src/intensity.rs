//! Intensity models `α(·)`, scalar state paths and the compensators
//! `A_s = ∫_0^s α(X_u) du` they induce.
//!
//! A path-driven model is realized on the grid of its state path: the rate
//! at grid node `t_k` is `shape(x_k)`, and between nodes the rate follows
//! the path's interpolation rule (linear, or held from the left). The
//! compensator is the exact integral of that realized rate, i.e. the
//! trapezoid (resp. left-rectangle) rule on the node rates. Keeping rate and
//! compensator exactly consistent is what lets identities such as
//! `∫ α³ e^{-c A³} = 1/c` hold to rounding on arbitrary paths.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State-to-rate map used by path-driven intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Constant {
        value: f64,
    },
    /// `Σ_k c_k x^k`.
    Polynomial {
        coefficients: Vec<f64>,
    },
    /// `scale · e^{rate · x}`.
    Exponential {
        scale: f64,
        rate: f64,
    },
    /// `offset + amplitude · sin²(frequency · x)`.
    SinSquared {
        offset: f64,
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
    },
    /// Piecewise-linear table over the state, flat outside its range.
    Table {
        points: Vec<(f64, f64)>,
    },
    Scaled {
        factor: f64,
        inner: Box<Shape>,
    },
    Sum {
        terms: Vec<Shape>,
    },
}

fn one() -> f64 {
    1.0
}

impl Shape {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Shape::Constant { value } => *value,
            Shape::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            Shape::Exponential { scale, rate } => scale * (rate * x).exp(),
            Shape::SinSquared {
                offset,
                amplitude,
                frequency,
            } => {
                let s = (frequency * x).sin();
                offset + amplitude * s * s
            }
            Shape::Table { points } => table_eval(points, x),
            Shape::Scaled { factor, inner } => factor * inner.eval(x),
            Shape::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Shape::Table { points } => {
                if points.is_empty() {
                    return Err(Error::invalid("table shape needs at least one point"));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::invalid(
                        "table shape abscissae must be strictly increasing",
                    ));
                }
                Ok(())
            }
            Shape::Scaled { factor, inner } => {
                if !(factor.is_finite() && *factor >= 0.0) {
                    return Err(Error::invalid("shape scale factor must be finite and >= 0"));
                }
                inner.validate()
            }
            Shape::Sum { terms } => terms.iter().try_for_each(Shape::validate),
            _ => Ok(()),
        }
    }
}

fn table_eval(points: &[(f64, f64)], x: f64) -> f64 {
    let idx = points.partition_point(|p| p.0 <= x);
    if idx == 0 {
        return points[0].1;
    }
    if idx == points.len() {
        return points[points.len() - 1].1;
    }
    let (x0, y0) = points[idx - 1];
    let (x1, y1) = points[idx];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// An intensity `α(·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensityModel {
    /// Constant rate; zero is allowed (no shock of this type ever fires).
    Constant { rate: f64 },
    /// `factor · base(·)`.
    Proportional {
        base: Box<IntensityModel>,
        factor: f64,
    },
    /// `shape(X_t)` along a scalar state path.
    PathDriven { shape: Shape },
}

impl IntensityModel {
    pub fn constant(rate: f64) -> Self {
        IntensityModel::Constant { rate }
    }

    pub fn proportional(base: IntensityModel, factor: f64) -> Self {
        IntensityModel::Proportional {
            base: Box::new(base),
            factor,
        }
    }

    pub fn path_driven(shape: Shape) -> Self {
        IntensityModel::PathDriven { shape }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            IntensityModel::Constant { rate } => {
                if rate.is_finite() && *rate >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "constant rate must be finite and >= 0, got {rate}"
                    )))
                }
            }
            IntensityModel::Proportional { base, factor } => {
                if !(factor.is_finite() && *factor > 0.0) {
                    return Err(Error::invalid(format!(
                        "proportional factor must be > 0, got {factor}"
                    )));
                }
                base.validate()
            }
            IntensityModel::PathDriven { shape } => shape.validate(),
        }
    }

    /// The rate when it does not depend on the state.
    pub fn constant_rate(&self) -> Option<f64> {
        match self {
            IntensityModel::Constant { rate } => Some(*rate),
            IntensityModel::Proportional { base, factor } => {
                base.constant_rate().map(|r| r * factor)
            }
            IntensityModel::PathDriven { .. } => None,
        }
    }

    pub fn is_path_driven(&self) -> bool {
        self.constant_rate().is_none()
    }

    /// Rate as a function of the current state value.
    pub fn rate_at_state(&self, x: f64) -> f64 {
        match self {
            IntensityModel::Constant { rate } => *rate,
            IntensityModel::Proportional { base, factor } => factor * base.rate_at_state(x),
            IntensityModel::PathDriven { shape } => shape.eval(x),
        }
    }

    pub fn to_shape(&self) -> Shape {
        match self {
            IntensityModel::Constant { rate } => Shape::Constant { value: *rate },
            IntensityModel::Proportional { base, factor } => Shape::Scaled {
                factor: *factor,
                inner: Box::new(base.to_shape()),
            },
            IntensityModel::PathDriven { shape } => shape.clone(),
        }
    }

    /// Pointwise sum of intensities; stays constant when every term is.
    pub fn sum<'a>(models: impl IntoIterator<Item = &'a IntensityModel>) -> IntensityModel {
        let models: Vec<&IntensityModel> = models.into_iter().collect();
        let rates: Option<Vec<f64>> = models.iter().map(|m| m.constant_rate()).collect();
        match rates {
            Some(r) => IntensityModel::constant(r.iter().sum()),
            None => IntensityModel::path_driven(Shape::Sum {
                terms: models.iter().map(|m| m.to_shape()).collect(),
            }),
        }
    }
}

/// How a path is read between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Held at the left grid value; compensators use the left-rectangle rule.
    PiecewiseConstantLeft,
    /// Linear between grid values; compensators use the trapezoid rule.
    #[default]
    PiecewiseLinear,
}

/// A discretized scalar trajectory of the background state.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    grid: Vec<f64>,
    values: Vec<f64>,
    interpolation: Interpolation,
}

impl StatePath {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::invalid("state path needs at least two grid points"));
        }
        if grid.len() != values.len() {
            return Err(Error::invalid(format!(
                "state path has {} times but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid[0] != 0.0 {
            return Err(Error::invalid("state path grid must start at 0"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::invalid(
                "state path grid must be strictly increasing",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state path values must be finite"));
        }
        Ok(StatePath {
            grid,
            values,
            interpolation,
        })
    }

    /// The deterministic clock `X_t = t` on a uniform grid.
    pub fn identity(horizon: f64, dt: f64) -> Result<Self> {
        let grid = uniform_grid(horizon, dt)?;
        let values = grid.clone();
        StatePath::new(grid, values, Interpolation::PiecewiseLinear)
    }

    /// Samples `f(t)` on a uniform grid.
    pub fn from_fn(horizon: f64, dt: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = uniform_grid(horizon, dt)?;
        let values = grid.iter().map(|&t| f(t)).collect();
        StatePath::new(grid, values, Interpolation::PiecewiseLinear)
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn horizon(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("time must be >= 0, got {t}")));
        }
        if t > self.horizon() {
            return Err(Error::HorizonExceeded {
                time: t,
                horizon: self.horizon(),
            });
        }
        let k = segment_index(&self.grid, t);
        let (t0, t1) = (self.grid[k], self.grid[k + 1]);
        let (x0, x1) = (self.values[k], self.values[k + 1]);
        Ok(match self.interpolation {
            Interpolation::PiecewiseConstantLeft => {
                if t >= t1 {
                    x1
                } else {
                    x0
                }
            }
            Interpolation::PiecewiseLinear => x0 + (x1 - x0) * (t - t0) / (t1 - t0),
        })
    }

    /// Reads a two-column `time,value` CSV with a header row.
    pub fn read_csv(path: impl AsRef<Path>, interpolation: Interpolation) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::read_csv_from(file, interpolation)
    }

    pub fn read_csv_from(reader: impl std::io::Read, interpolation: Interpolation) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || headers.get(0).and_then(|h| h.parse::<f64>().ok()).is_some() {
            return Err(Error::invalid(
                "state path CSV needs a header row and exactly two columns (time, value)",
            ));
        }
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::invalid("state path CSV row has fewer than 2 fields"))?
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("bad number in state path CSV: {e}")))
            };
            grid.push(parse(0)?);
            values.push(parse(1)?);
        }
        StatePath::new(grid, values, interpolation)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "value"])?;
        for (t, x) in self.grid.iter().zip(&self.values) {
            w.write_record([format!("{t:.16e}"), format!("{x:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn uniform_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= horizon) {
        return Err(Error::invalid(format!(
            "step must satisfy 0 < dt <= horizon, got dt = {dt}"
        )));
    }
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (0..steps).map(|k| k as f64 * dt).collect();
    grid.push(horizon);
    Ok(grid)
}

/// Index `k` with `grid[k] <= t <= grid[k + 1]`, clamped to the last segment.
fn segment_index(grid: &[f64], t: f64) -> usize {
    let idx = grid.partition_point(|&g| g <= t);
    idx.saturating_sub(1).min(grid.len() - 2)
}

/// Parameters of an Ornstein–Uhlenbeck state process
/// `dX = θ(μ - X) dt + σ dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuSpec {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl OuSpec {
    pub fn simulate(&self, seed: u64) -> Result<StatePath> {
        simulate_ou_path(
            self.theta,
            self.mu,
            self.sigma,
            self.x0,
            self.horizon,
            self.dt,
            seed,
        )
    }
}

/// Euler–Maruyama discretization of `dX = θ(μ - X) dt + σ dW`, started at
/// `x0`. The last step is shortened to land exactly on `horizon`.
pub fn simulate_ou_path(
    theta: f64,
    mu: f64,
    sigma: f64,
    x0: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<StatePath> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::invalid(format!(
            "theta must be positive, got {theta}"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if !(mu.is_finite() && x0.is_finite()) {
        return Err(Error::invalid("mu and x0 must be finite"));
    }
    let grid = uniform_grid(horizon, dt)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut values = Vec::with_capacity(grid.len());
    let mut x = x0;
    values.push(x);
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        let z: f64 = StandardNormal.sample(&mut rng);
        x += theta * (mu - x) * h + sigma * h.sqrt() * z;
        values.push(x);
    }
    StatePath::new(grid, values, Interpolation::PiecewiseLinear)
}

#[derive(Debug, Clone)]
enum Curve {
    Constant(f64),
    Grid {
        times: Arc<[f64]>,
        rates: Vec<f64>,
        cumulative: Vec<f64>,
        interpolation: Interpolation,
    },
}

/// The compensator `s ↦ A_s` of one intensity along one realized path.
#[derive(Debug, Clone)]
pub struct CompensatorCurve {
    curve: Curve,
}

impl CompensatorCurve {
    /// Realizes `model` along `path`. Constant and proportional-of-constant
    /// models ignore the path and have an infinite horizon.
    pub fn new(model: &IntensityModel, path: Option<&StatePath>) -> Result<Self> {
        model.validate()?;
        if let Some(rate) = model.constant_rate() {
            return Ok(CompensatorCurve {
                curve: Curve::Constant(rate),
            });
        }
        let path = path.ok_or_else(|| {
            Error::invalid("a path-driven intensity needs a state path to be evaluated")
        })?;
        let times: Arc<[f64]> = path.grid().into();
        Self::on_grid(model, path, times)
    }

    /// Like [`CompensatorCurve::new`] but sharing an existing copy of the
    /// path's time grid, so several curves on one path share one allocation.
    pub(crate) fn on_grid(
        model: &IntensityModel,
        path: &StatePath,
        times: Arc<[f64]>,
    ) -> Result<Self> {
        if let Some(rate) = model.constant_rate() {
            return Ok(CompensatorCurve {
                curve: Curve::Constant(rate),
            });
        }
        let rates: Vec<f64> = path
            .values()
            .iter()
            .map(|&x| model.rate_at_state(x))
            .collect();
        if let Some((k, r)) = rates
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.is_finite() && **r >= 0.0))
        {
            return Err(Error::invalid(format!(
                "intensity shape gives rate {r} at state {} (t = {}); rates must be finite and >= 0",
                path.values()[k],
                times[k]
            )));
        }
        let interpolation = path.interpolation();
        let mut cumulative = Vec::with_capacity(rates.len());
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 0..rates.len() - 1 {
            let h = times[k + 1] - times[k];
            acc += match interpolation {
                Interpolation::PiecewiseLinear => 0.5 * h * (rates[k] + rates[k + 1]),
                Interpolation::PiecewiseConstantLeft => h * rates[k],
            };
            cumulative.push(acc);
        }
        Ok(CompensatorCurve {
            curve: Curve::Grid {
                times,
                rates,
                cumulative,
                interpolation,
            },
        })
    }

    pub fn constant(rate: f64) -> Self {
        CompensatorCurve {
            curve: Curve::Constant(rate),
        }
    }

    pub fn constant_rate(&self) -> Option<f64> {
        match self.curve {
            Curve::Constant(r) => Some(r),
            Curve::Grid { .. } => None,
        }
    }

    /// Last time at which the curve is known; infinite for constant models.
    pub fn horizon(&self) -> f64 {
        match &self.curve {
            Curve::Constant(_) => f64::INFINITY,
            Curve::Grid { times, .. } => times[times.len() - 1],
        }
    }

    /// Grid nodes of a path-driven curve.
    pub fn nodes(&self) -> Option<&[f64]> {
        match &self.curve {
            Curve::Constant(_) => None,
            Curve::Grid { times, .. } => Some(times),
        }
    }

    /// `A_s`, or a horizon error for `s` past the end of the path.
    pub fn at(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::invalid(format!("time must be >= 0, got {s}")));
        }
        if s > self.horizon() {
            return Err(Error::HorizonExceeded {
                time: s,
                horizon: self.horizon(),
            });
        }
        Ok(self.eval(s))
    }

    /// `A_s` without the horizon check; times past the horizon are clamped.
    #[inline]
    pub(crate) fn eval(&self, s: f64) -> f64 {
        match &self.curve {
            Curve::Constant(r) => {
                if *r == 0.0 {
                    0.0
                } else {
                    r * s
                }
            }
            Curve::Grid {
                times,
                rates,
                cumulative,
                interpolation,
            } => {
                let s = s.min(times[times.len() - 1]);
                let k = segment_index(times, s);
                let dt = s - times[k];
                match interpolation {
                    Interpolation::PiecewiseConstantLeft => cumulative[k] + rates[k] * dt,
                    Interpolation::PiecewiseLinear => {
                        let h = times[k + 1] - times[k];
                        let r = rates[k] + (rates[k + 1] - rates[k]) * dt / h;
                        cumulative[k] + 0.5 * dt * (rates[k] + r)
                    }
                }
            }
        }
    }

    /// The realized intensity `α_s` (clamped past the horizon).
    #[inline]
    pub fn rate(&self, s: f64) -> f64 {
        match &self.curve {
            Curve::Constant(r) => *r,
            Curve::Grid {
                times,
                rates,
                interpolation,
                ..
            } => {
                let s = s.clamp(0.0, times[times.len() - 1]);
                let k = segment_index(times, s);
                match interpolation {
                    Interpolation::PiecewiseConstantLeft => {
                        if s >= times[k + 1] {
                            rates[k + 1]
                        } else {
                            rates[k]
                        }
                    }
                    Interpolation::PiecewiseLinear => {
                        let h = times[k + 1] - times[k];
                        rates[k] + (rates[k + 1] - rates[k]) * (s - times[k]) / h
                    }
                }
            }
        }
    }

    /// Total compensator mass available on the path.
    pub fn terminal_value(&self) -> f64 {
        match &self.curve {
            Curve::Constant(r) => {
                if *r > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Curve::Grid { cumulative, .. } => cumulative[cumulative.len() - 1],
        }
    }

    /// Grid segment `[t_k, t_{k+1}]` on which the compensator crosses `level`,
    /// or `None` when the level is never reached on the path.
    pub(crate) fn bracket_level(&self, level: f64) -> Option<(f64, f64)> {
        match &self.curve {
            Curve::Constant(_) => None,
            Curve::Grid {
                times, cumulative, ..
            } => {
                if level > cumulative[cumulative.len() - 1] {
                    return None;
                }
                let idx = cumulative.partition_point(|&c| c < level);
                let k = idx.saturating_sub(1).min(times.len() - 2);
                Some((times[k], times[k + 1]))
            }
        }
    }
}

/// Outcome of [`validate_divergence`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceDiagnostic {
    pub divergent: bool,
    /// Average growth of `A` over the tail half of the available horizon
    /// (the rate itself for constant models).
    pub tail_growth_rate: f64,
    pub message: Option<String>,
}

/// Checks the hypothesis `A_s → ∞`. Constant models pass iff their rate is
/// positive; path-driven models are judged on the growth of `A` over the
/// tail half of the path.
pub fn validate_divergence(c: &CompensatorCurve) -> DivergenceDiagnostic {
    validate_divergence_sum([c])
}

/// [`validate_divergence`] applied to the pointwise sum of several curves
/// realized on the same path.
pub fn validate_divergence_sum<'a>(
    curves: impl IntoIterator<Item = &'a CompensatorCurve>,
) -> DivergenceDiagnostic {
    let curves: Vec<&CompensatorCurve> = curves.into_iter().collect();
    let horizon = curves
        .iter()
        .map(|c| c.horizon())
        .fold(f64::INFINITY, f64::min);
    if horizon.is_infinite() {
        let rate: f64 = curves.iter().filter_map(|c| c.constant_rate()).sum();
        return DivergenceDiagnostic {
            divergent: rate > 0.0,
            tail_growth_rate: rate,
            message: (rate <= 0.0).then(|| "non-divergent: constant rate is zero".to_string()),
        };
    }
    let mid = 0.5 * horizon;
    let total: f64 = curves.iter().map(|c| c.eval(horizon)).sum();
    let tail = total - curves.iter().map(|c| c.eval(mid)).sum::<f64>();
    let tail_rate = tail / (horizon - mid);
    let mean_rate = total / horizon;
    let near_zero = tail_rate <= 1e-8 * mean_rate.max(f64::MIN_POSITIVE);
    DivergenceDiagnostic {
        divergent: !near_zero,
        tail_growth_rate: tail_rate,
        message: near_zero.then(|| {
            format!(
                "non-divergent: compensator grows at rate {tail_rate:e} over the tail \
                 half of the path (mean rate {mean_rate:e})"
            )
        }),
    }
}
