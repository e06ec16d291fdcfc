//! Exact simulation of the default times, used as an independent check of
//! the analytic evaluators.
//!
//! Random numbers: sample block `k` of a run with seed `s` draws from
//! `Xoshiro256PlusPlus::seed_from_u64(mix(s, k))`, where
//! `mix(s, k) = splitmix64(s ^ splitmix64(k))` and `splitmix64` is the
//! standard SplitMix64 output function (increment `0x9E3779B97F4A7C15`).
//! A unit exponential is `-ln(((x >> 11) + 0.5) · 2^-53)` for the next 64-bit
//! output `x`. Blocks hold [`BLOCK_SIZE`] samples, so estimates depend on
//! the seed and the sample count but not on the number of threads.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::bivariate::BivariateScenario;
use crate::ensemble::{self, PathSource, Realized};
use crate::error::{Error, Result};
use crate::gumbel::GumbelScenario;
use crate::intensity::{CompensatorCurve, IntensityModel, OuSpec};
use crate::multivariate::ShockSystem;

pub type SampleRng = Xoshiro256PlusPlus;

/// Samples per random-number substream.
pub const BLOCK_SIZE: u64 = 4096;

/// Smallest sample count accepted by the estimators.
pub const MIN_SAMPLES: u64 = 100;

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

/// Bisection tolerance (time units) when inverting compensators and the
/// Gumbel conditional law.
pub const INVERSION_TOL: f64 = 1e-12;

fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `k`.
pub fn mix(seed: u64, k: u64) -> u64 {
    splitmix64(seed ^ splitmix64(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSpec { seed, stream }
    }

    pub fn generator(&self) -> SampleRng {
        SampleRng::seed_from_u64(mix(self.seed, self.stream))
    }
}

pub fn unit_exponential(rng: &mut impl RngCore) -> f64 {
    let x = rng.next_u64();
    -(((x >> 11) as f64 + 0.5) * (-53f64).exp2()).ln()
}

/// `inf{s : A_s ≥ z}`; `+∞` for a zero constant rate.
pub fn sample_eta(c: &CompensatorCurve, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::invalid(format!(
            "threshold must be positive, got {z}"
        )));
    }
    if let Some(rate) = c.constant_rate() {
        return Ok(if rate > 0.0 { z / rate } else { f64::INFINITY });
    }
    let Some((mut lo, mut hi)) = c.bracket_level(z) else {
        return Err(Error::HorizonExceeded {
            time: f64::INFINITY,
            horizon: c.horizon(),
        });
    };
    while hi - lo > INVERSION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if c.eval(mid) >= z {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Which shock fired first for a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cause {
    Shock1,
    Shock2,
    Common,
    /// Own threshold of the Gumbel-coupled pair.
    GumbelPair,
}

impl Cause {
    pub fn code(self) -> &'static str {
        match self {
            Cause::Shock1 => "shock1",
            Cause::Shock2 => "shock2",
            Cause::Common => "common",
            Cause::GumbelPair => "gumbel-pair",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePair {
    pub tau1: f64,
    pub tau2: f64,
    /// The common shock fired first for both components.
    pub equal: bool,
    pub cause: [Cause; 2],
    /// An own threshold crossed at exactly the common-shock time (floating
    /// point tie, resolved in favour of the own shock).
    pub tie: bool,
}

/// Where the realized compensators of each sample come from.
enum CurvePool {
    /// One realization (constant models or a fixed path), or an ensemble
    /// from which each sample picks a path uniformly.
    Shared(Vec<Realized>),
    /// A fresh OU path per sample.
    FreshOu {
        spec: OuSpec,
        models: Vec<IntensityModel>,
    },
}

impl CurvePool {
    fn new(models: &[&IntensityModel], source: &PathSource) -> Result<Self> {
        match source {
            PathSource::Ou { spec, .. } if models.iter().any(|m| m.is_path_driven()) => {
                for m in models {
                    m.validate()?;
                }
                source.validate()?;
                Ok(CurvePool::FreshOu {
                    spec: *spec,
                    models: models.iter().map(|m| (*m).clone()).collect(),
                })
            }
            _ => Ok(CurvePool::Shared(ensemble::realize(models, source)?)),
        }
    }

    fn with<R>(
        &self,
        rng: &mut SampleRng,
        f: impl FnOnce(&Realized, &mut SampleRng) -> R,
    ) -> Result<R> {
        match self {
            CurvePool::Shared(all) if all.len() == 1 => Ok(f(&all[0], rng)),
            CurvePool::Shared(all) => {
                let k = rng.random_range(0..all.len());
                Ok(f(&all[k], rng))
            }
            CurvePool::FreshOu { spec, models } => {
                let path = spec.simulate(rng.next_u64())?;
                let refs: Vec<&IntensityModel> = models.iter().collect();
                let r = ensemble::realize_on(&refs, &path)?;
                Ok(f(&r, rng))
            }
        }
    }
}

/// Solves `P(Z2 > t | Z1 = s) = e^{-e}` for the Gumbel law, i.e.
/// `g(t) = t(1 + δs) - ln(1 + δt) = e`. `g` is increasing and convex, so
/// after bracketing, Newton steps started from the upper end stay inside
/// the bracket and decrease monotonically; any step that would leave it
/// falls back to bisection.
fn gumbel_conditional(s: f64, delta: f64, e: f64) -> Result<f64> {
    if delta == 0.0 {
        return Ok(e);
    }
    let slope = 1.0 + delta * s;
    let g = |t: f64| t * slope - (delta * t).ln_1p();
    // g(t) < t(1 + δs), so e/(1 + δs) is below the root.
    let mut lo = e / slope;
    let mut hi = 2.0 * lo;
    while g(hi) < e {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numeric(format!(
                "Gumbel conditional inversion did not bracket e = {e}"
            )));
        }
    }
    let mut t = hi;
    for _ in 0..200 {
        let r = g(t) - e;
        if r <= 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= INVERSION_TOL {
            break;
        }
        let d = slope - delta / (1.0 + delta * t);
        let next = t - r / d;
        let step_ok = d > 0.0 && next > lo && next < hi;
        let next = if step_ok { next } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= INVERSION_TOL * 1e-3 * t.max(1.0) {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

/// Samples `(τ1, τ2)` from the common-shock model, with the idiosyncratic
/// thresholds either independent or Gumbel-coupled.
pub struct PairSampler {
    pool: CurvePool,
    delta: Option<f64>,
}

impl PairSampler {
    pub fn mo(sc: &BivariateScenario) -> Result<Self> {
        Ok(PairSampler {
            pool: CurvePool::new(&sc.models(), &sc.paths)?,
            delta: None,
        })
    }

    pub fn gumbel(gs: &GumbelScenario) -> Result<Self> {
        gs.validate()?;
        Ok(PairSampler {
            pool: CurvePool::new(&gs.base.models(), &gs.base.paths)?,
            delta: Some(gs.delta),
        })
    }

    pub fn sample(&self, rng: &mut SampleRng) -> Result<SamplePair> {
        self.pool.with(rng, |r, rng| {
            let z1 = unit_exponential(rng);
            let e = unit_exponential(rng);
            let z3 = unit_exponential(rng);
            let z2 = match self.delta {
                Some(delta) => gumbel_conditional(z1, delta, e)?,
                None => e,
            };
            let eta1 = sample_eta(&r.curves[0], z1)?;
            let eta2 = sample_eta(&r.curves[1], z2)?;
            let eta3 = sample_eta(&r.curves[2], z3)?;
            let own = if self.delta.is_some() {
                [Cause::GumbelPair; 2]
            } else {
                [Cause::Shock1, Cause::Shock2]
            };
            let pick = |eta: f64, own: Cause| {
                if eta3 < eta {
                    (eta3, Cause::Common)
                } else {
                    (eta, own)
                }
            };
            let (tau1, c1) = pick(eta1, own[0]);
            let (tau2, c2) = pick(eta2, own[1]);
            let tie = eta3.is_finite() && (eta1 == eta3 || eta2 == eta3);
            Ok(SamplePair {
                tau1,
                tau2,
                equal: c1 == Cause::Common && c2 == Cause::Common,
                cause: [c1, c2],
                tie,
            })
        })?
    }
}

pub fn sample_mo_pair(sc: &BivariateScenario, rng: RngSpec) -> Result<SamplePair> {
    PairSampler::mo(sc)?.sample(&mut rng.generator())
}

pub fn sample_gumbel_pair(gs: &GumbelScenario, rng: RngSpec) -> Result<SamplePair> {
    PairSampler::gumbel(gs)?.sample(&mut rng.generator())
}

/// One draw of an `n`-component shock system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSample {
    pub taus: Vec<f64>,
    /// Index (into [`ShockSystem::shocks`]) of the shock that killed each
    /// component.
    pub causes: Vec<usize>,
    /// Floating-point ties between distinct shocks, resolved toward the
    /// shock earlier in canonical order.
    pub ties: u32,
}

impl SystemSample {
    pub fn all_equal(&self) -> bool {
        self.causes.iter().all(|&c| c == self.causes[0])
    }

    /// Components (1-indexed) grouped by the shock that killed them, in
    /// order of first member.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, &c) in self.causes.iter().enumerate() {
            match groups.iter_mut().find(|g| g.0 == c) {
                Some(g) => g.1.push(i + 1),
                None => groups.push((c, vec![i + 1])),
            }
        }
        groups.into_iter().map(|g| g.1).collect()
    }
}

pub struct SystemSampler {
    pool: CurvePool,
    masks: Vec<u16>,
    n: usize,
}

impl SystemSampler {
    pub fn new(sys: &ShockSystem) -> Result<Self> {
        sys.validate()?;
        let models: Vec<&IntensityModel> = sys.shocks().iter().map(|s| &s.model).collect();
        Ok(SystemSampler {
            pool: CurvePool::new(&models, &sys.paths)?,
            masks: sys.shocks().iter().map(|s| s.mask()).collect(),
            n: sys.n(),
        })
    }

    pub fn sample(&self, rng: &mut SampleRng) -> Result<SystemSample> {
        self.pool.with(rng, |r, rng| {
            let etas = r
                .curves
                .iter()
                .map(|c| sample_eta(c, unit_exponential(rng)))
                .collect::<Result<Vec<f64>>>()?;
            let mut taus = vec![f64::INFINITY; self.n];
            let mut causes = vec![usize::MAX; self.n];
            let mut ties = 0;
            for (j, (&eta, &mask)) in etas.iter().zip(&self.masks).enumerate() {
                for i in 0..self.n {
                    if mask & (1 << i) == 0 {
                        continue;
                    }
                    if eta < taus[i] || causes[i] == usize::MAX {
                        taus[i] = eta;
                        causes[i] = j;
                    } else if eta == taus[i] && eta.is_finite() {
                        ties += 1;
                    }
                }
            }
            Ok(SystemSample { taus, causes, ties })
        })?
    }
}

pub fn sample_system(sys: &ShockSystem, rng: RngSpec) -> Result<SystemSample> {
    SystemSampler::new(sys)?.sample(&mut rng.generator())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
    pub ci99_halfwidth: f64,
}

impl EstimateWithCI {
    fn new(mean: f64, std_error: f64, n: u64) -> Self {
        EstimateWithCI {
            mean,
            std_error,
            n,
            ci99_halfwidth: Z99 * std_error,
        }
    }

    /// `(mean - reference) / std_error`; zero when both agree exactly.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.mean - reference;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.n == 0.0 {
            return b;
        }
        if b.n == 0.0 {
            return a;
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        Moments {
            n,
            mean: a.mean + d * b.n / n,
            m2: a.m2 + b.m2 + d * d * a.n * b.n / n,
        }
    }

    fn pairwise(xs: &[Moments]) -> Moments {
        match xs.len() {
            0 => Moments::default(),
            1 => xs[0],
            len => Moments::merge(
                Self::pairwise(&xs[..len / 2]),
                Self::pairwise(&xs[len / 2..]),
            ),
        }
    }

    fn estimate(&self) -> EstimateWithCI {
        let var = if self.n > 1.0 {
            self.m2 / (self.n - 1.0)
        } else {
            0.0
        };
        EstimateWithCI::new(self.mean, (var / self.n).sqrt(), self.n as u64)
    }
}

fn check_count(n: u64) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "at least {MIN_SAMPLES} samples are required, got {n}"
        )));
    }
    Ok(())
}

/// Means of `width` functionals of `n` draws; `f` fills one row per draw.
/// Blocks are reduced pairwise in stream order.
pub fn estimate_dyn<T>(
    draw: impl Fn(&mut SampleRng) -> Result<T> + Sync,
    width: usize,
    f: impl Fn(&T, &mut [f64]) + Sync,
    n: u64,
    seed: u64,
) -> Result<Vec<EstimateWithCI>> {
    check_count(n)?;
    let blocks = n.div_ceil(BLOCK_SIZE);
    let per_block: Vec<Vec<Moments>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngSpec::new(seed, b).generator();
            let mut m = vec![Moments::default(); width];
            let mut row = vec![0.0; width];
            for _ in 0..BLOCK_SIZE.min(n - b * BLOCK_SIZE) {
                f(&draw(&mut rng)?, &mut row);
                for (acc, &x) in m.iter_mut().zip(&row) {
                    acc.push(x);
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok((0..width)
        .map(|k| {
            let column: Vec<Moments> = per_block.iter().map(|m| m[k]).collect();
            Moments::pairwise(&column).estimate()
        })
        .collect())
}

/// [`estimate_dyn`] with a fixed number of functionals.
pub fn estimate_many<T, const K: usize>(
    draw: impl Fn(&mut SampleRng) -> Result<T> + Sync,
    f: impl Fn(&T) -> [f64; K] + Sync,
    n: u64,
    seed: u64,
) -> Result<[EstimateWithCI; K]> {
    let v = estimate_dyn(draw, K, |x, row| row.copy_from_slice(&f(x)), n, seed)?;
    Ok(std::array::from_fn(|k| v[k]))
}

/// Mean of one functional of `n` draws.
pub fn estimate<T>(
    draw: impl Fn(&mut SampleRng) -> Result<T> + Sync,
    f: impl Fn(&T) -> f64 + Sync,
    n: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    Ok(estimate_many(draw, |x| [f(x)], n, seed)?[0])
}

/// `E[a] / E[b]` from the sample means of `a`, `b`, `a²`, `b²` and `ab`, with
/// a delta-method standard error.
pub fn ratio_from_means(means: [EstimateWithCI; 5]) -> Result<EstimateWithCI> {
    let [num, den, nn, dd, nd] = means;
    if !(den.mean > 0.0) {
        return Err(Error::UndefinedConditional {
            probability: den.mean,
        });
    }
    let r = num.mean / den.mean;
    let var = (nn.mean - 2.0 * r * nd.mean + r * r * dd.mean).max(0.0);
    Ok(EstimateWithCI::new(
        r,
        (var / num.n as f64).sqrt() / den.mean,
        num.n,
    ))
}

/// `E[num] / E[den]` (a conditional frequency when both are indicators).
pub fn estimate_ratio<T>(
    draw: impl Fn(&mut SampleRng) -> Result<T> + Sync,
    f: impl Fn(&T) -> (f64, f64) + Sync,
    n: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    ratio_from_means(estimate_many(
        draw,
        |x| {
            let (a, b) = f(x);
            [a, b, a * a, b * b, a * b]
        },
        n,
        seed,
    )?)
}

/// Unbiased covariance from the mean of centered products.
pub fn covariance_from_centered(products: EstimateWithCI) -> EstimateWithCI {
    let n = products.n as f64;
    let scale = n / (n - 1.0);
    EstimateWithCI::new(
        products.mean * scale,
        products.std_error * scale,
        products.n,
    )
}

/// `Cov(X, Y)` by two passes over the same draws: the means first, then the
/// centered products.
pub fn estimate_covariance<T>(
    draw: impl Fn(&mut SampleRng) -> Result<T> + Sync,
    f: impl Fn(&T) -> (f64, f64) + Sync,
    n: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    let [mx, my] = estimate_many(
        &draw,
        |x| {
            let (a, b) = f(x);
            [a, b]
        },
        n,
        seed,
    )?;
    let c = estimate(
        &draw,
        |x| {
            let (a, b) = f(x);
            (a - mx.mean) * (b - my.mean)
        },
        n,
        seed,
    )?;
    Ok(covariance_from_centered(c))
}

/// Writes `n` pair samples as CSV (`tau1,tau2,equal,cause1,cause2`).
pub fn write_pair_samples(sampler: &PairSampler, n: u64, seed: u64, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau1", "tau2", "equal", "cause1", "cause2"])?;
    for b in 0..n.div_ceil(BLOCK_SIZE) {
        let mut rng = RngSpec::new(seed, b).generator();
        for _ in 0..BLOCK_SIZE.min(n - b * BLOCK_SIZE) {
            let s = sampler.sample(&mut rng)?;
            w.write_record([
                format!("{:.16e}", s.tau1),
                format!("{:.16e}", s.tau2),
                s.equal.to_string(),
                s.cause[0].code().to_string(),
                s.cause[1].code().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `n` system samples as CSV: `tau1..taun`, `all_equal`, and for each
/// component the killing shock as its members joined by `+`.
pub fn write_system_samples(sys: &ShockSystem, n: u64, seed: u64, out: impl Write) -> Result<()> {
    let sampler = SystemSampler::new(sys)?;
    let labels: Vec<String> = sys
        .shocks()
        .iter()
        .map(|s| {
            s.members()
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=sys.n()).map(|i| format!("tau{i}")).collect();
    header.push("all_equal".into());
    header.extend((1..=sys.n()).map(|i| format!("cause{i}")));
    w.write_record(&header)?;
    for b in 0..n.div_ceil(BLOCK_SIZE) {
        let mut rng = RngSpec::new(seed, b).generator();
        for _ in 0..BLOCK_SIZE.min(n - b * BLOCK_SIZE) {
            let s = sampler.sample(&mut rng)?;
            let mut row: Vec<String> = s.taus.iter().map(|t| format!("{t:.16e}")).collect();
            row.push(s.all_equal().to_string());
            row.extend(s.causes.iter().map(|&c| labels[c].clone()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bivariate::{joint_survival, prob_within_eps};
    use crate::intensity::{Shape, StatePath};
    use crate::multivariate::{PatternKind, SubsetPattern};
    use proptest::prelude::*;

    fn within(e: &EstimateWithCI, want: f64, k: f64) {
        assert!(
            (e.mean - want).abs() <= k * e.std_error,
            "{} ± {} vs {want}",
            e.mean,
            e.std_error
        );
    }

    fn mo(l1: f64, l2: f64, l3: f64) -> PairSampler {
        PairSampler::mo(&BivariateScenario::constant(l1, l2, l3)).unwrap()
    }

    #[test]
    fn mixing_is_documented_splitmix() {
        // First SplitMix64 output for state 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_ne!(mix(42, 0), mix(42, 1));
        let a: Vec<u64> = (0..4)
            .map(|_| rand::RngCore::next_u64(&mut RngSpec::new(7, 3).generator()))
            .collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn eta_examples() {
        let c = CompensatorCurve::constant(2.0);
        assert_eq!(sample_eta(&c, 1.0).unwrap(), 0.5);
        assert_eq!(
            sample_eta(&CompensatorCurve::constant(0.0), 1.0).unwrap(),
            f64::INFINITY
        );
        let path = StatePath::identity(5.0, 0.01).unwrap();
        let m = IntensityModel::path_driven(Shape::Polynomial {
            coefficients: vec![0.0, 1.0],
        });
        let c = CompensatorCurve::new(&m, Some(&path)).unwrap();
        assert!((sample_eta(&c, 2.0).unwrap() - 2.0).abs() < 1e-11);
        assert!(matches!(
            sample_eta(&c, 13.0),
            Err(Error::HorizonExceeded { .. })
        ));
        assert!(sample_eta(&c, 0.0).is_err());
    }

    #[test]
    fn eta_is_exponential() {
        let c = CompensatorCurve::constant(1.0);
        let n = 200_000usize;
        let mut rng = RngSpec::new(1, 0).generator();
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_eta(&c, unit_exponential(&mut rng)).unwrap())
            .collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-x).exp();
                (f - i as f64 / n as f64)
                    .abs()
                    .max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample Kolmogorov–Smirnov statistic.
        assert!(d < 1.628 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn gumbel_conditional_inverts_survival() {
        for &(s, delta, e) in &[
            (0.3, 1.0, 0.7),
            (2.0, 0.5, 3.0),
            (0.0, 1.0, 1e-6),
            (5.0, 1.0, 40.0),
        ] {
            let t = gumbel_conditional(s, delta, e).unwrap();
            let surv = (1.0 + delta * t) * (-t * (1.0 + delta * s)).exp();
            assert!((surv.ln() + e).abs() < 1e-9, "s={s} e={e} t={t}");
        }
    }

    fn bisect(s: f64, delta: f64, e: f64) -> f64 {
        let g = |t: f64| t * (1.0 + delta * s) - (delta * t).ln_1p();
        let (mut lo, mut hi) = (0.0, 1.0);
        while g(hi) < e {
            hi *= 2.0;
        }
        while hi - lo > INVERSION_TOL {
            let mid = 0.5 * (lo + hi);
            if g(mid) >= e {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn conditional_law_integrates_to_joint_survival() {
        // ∫_s^∞ e^{-u} P(Z2 > t | Z1 = u) du = e^{-s-t-δst}
        let delta = 0.8;
        for &(s, t) in &[(0.5, 0.5), (1.0, 2.0), (0.1, 3.0)] {
            let f = crate::quadrature::Integrand1D::new(|v: f64| {
                let u = s + v;
                (-u).exp() * (1.0 + delta * t) * (-t * (1.0 + delta * u)).exp()
            });
            let lhs = crate::quadrature::integrate_semi_infinite(&f, 1e-12)
                .unwrap()
                .value;
            let rhs = (-s - t - delta * s * t).exp();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn equality_frequency_same_intensity() {
        let s = mo(1.0, 1.0, 1.0);
        let e = estimate(|r| s.sample(r), |p| p.equal as u8 as f64, 1_000_000, 42).unwrap();
        within(&e, 1.0 / 3.0, 3.0);
        let binomial_se = (2.0f64 / 9.0).sqrt() / 1e3;
        assert!((e.ci99_halfwidth - Z99 * binomial_se).abs() < 1e-5);
    }

    #[test]
    fn pair_battery() {
        let s = mo(2.0, 3.0, 5.0);
        within(
            &estimate(|r| s.sample(r), |p| p.equal as u8 as f64, 1_000_000, 1).unwrap(),
            0.5,
            3.0,
        );
        let s = mo(1.0, 2.0, 3.0);
        let e = estimate(
            |r| s.sample(r),
            |p| (p.tau1 > 1.0) as u8 as f64,
            1_000_000,
            2,
        )
        .unwrap();
        within(&e, (-4.0f64).exp(), 3.0);
        let s = mo(1.0, 1.0, 0.0);
        let e = estimate(|r| s.sample(r), |p| (p.tau1 - p.tau2).powi(2), 1_000_000, 3).unwrap();
        within(&e, 2.0, 3.0);
        let sc = BivariateScenario::constant(1.0, 1.0, 1.0);
        let s = PairSampler::mo(&sc).unwrap();
        let e = estimate(
            |r| s.sample(r),
            |p| ((p.tau1 - p.tau2).abs() <= 0.5) as u8 as f64,
            1_000_000,
            4,
        )
        .unwrap();
        within(&e, 1.0 - 2.0 / 3.0 * (-1.0f64).exp(), 3.0);
        within(&e, prob_within_eps(&sc, 0.5).unwrap().value, 3.0);
    }

    #[test]
    fn cause_bookkeeping() {
        let s = mo(0.5, 1.5, 1.0);
        let mut rng = RngSpec::new(9, 0).generator();
        let mut ties = 0;
        for _ in 0..100_000 {
            let p = s.sample(&mut rng).unwrap();
            ties += p.tie as u32;
            assert_eq!(p.equal, p.cause == [Cause::Common, Cause::Common]);
            if p.equal {
                assert_eq!(p.tau1, p.tau2);
            } else {
                assert_ne!(p.tau1, p.tau2);
            }
        }
        assert_eq!(ties, 0);
    }

    #[test]
    fn gumbel_without_coupling_matches_mo_draws() {
        let base = BivariateScenario::constant(1.0, 2.0, 0.5);
        let g = PairSampler::gumbel(&GumbelScenario::new(base.clone(), 0.0).unwrap()).unwrap();
        let m = PairSampler::mo(&base).unwrap();
        let (mut rg, mut rm) = (
            RngSpec::new(5, 0).generator(),
            RngSpec::new(5, 0).generator(),
        );
        for _ in 0..1000 {
            let (a, b) = (g.sample(&mut rg).unwrap(), m.sample(&mut rm).unwrap());
            assert_eq!((a.tau1, a.tau2, a.equal), (b.tau1, b.tau2, b.equal));
        }
    }

    #[test]
    fn gumbel_joint_survival_matches() {
        let gs = GumbelScenario::new(BivariateScenario::constant(1.0, 1.0, 1.0), 1.0).unwrap();
        let s = PairSampler::gumbel(&gs).unwrap();
        let e = estimate(
            |r| s.sample(r),
            |p| (p.tau1 > 1.0 && p.tau2 > 1.0) as u8 as f64,
            1_000_000,
            6,
        )
        .unwrap();
        within(&e, (-4.0f64).exp(), 3.0);
    }

    #[test]
    fn system_battery() {
        let all_ones = {
            let mut sys = ShockSystem::new(3).unwrap();
            for m in [&[1][..], &[2], &[3], &[1, 2], &[1, 3], &[2, 3], &[1, 2, 3]] {
                sys = sys.with_shock(m, IntensityModel::constant(1.0)).unwrap();
            }
            sys
        };
        let s = SystemSampler::new(&all_ones).unwrap();
        within(
            &estimate(
                |r| s.sample(r),
                |x| x.all_equal() as u8 as f64,
                1_000_000,
                7,
            )
            .unwrap(),
            1.0 / 7.0,
            3.0,
        );
        let mult = ShockSystem::from_pattern(
            4,
            SubsetPattern {
                kind: PatternKind::Multiplicative,
                base_rate: 1.0,
            },
        )
        .unwrap();
        let s = SystemSampler::new(&mult).unwrap();
        within(
            &estimate(
                |r| s.sample(r),
                |x| x.all_equal() as u8 as f64,
                1_000_000,
                8,
            )
            .unwrap(),
            0.125,
            3.0,
        );
        let grand = ShockSystem::new(3)
            .unwrap()
            .with_shock(&[1, 2, 3], IntensityModel::constant(1.0))
            .unwrap();
        let s = SystemSampler::new(&grand).unwrap();
        let mut rng = RngSpec::new(1, 0).generator();
        for _ in 0..1000 {
            let x = s.sample(&mut rng).unwrap();
            assert!(x.taus.iter().all(|&t| t == x.taus[0]));
            assert_eq!(x.partition(), vec![vec![1, 2, 3]]);
        }
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let s = mo(1.0, 2.0, 3.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate(|r| s.sample(r), |p| p.tau1, 50_000, 11).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn ratio_and_covariance_estimators() {
        let sc = BivariateScenario::constant(1.0, 1.0, 1.0);
        let s = PairSampler::mo(&sc).unwrap();
        let cov =
            estimate_covariance(|r| s.sample(r), |p| (p.tau1, p.tau2), 1_000_000, 12).unwrap();
        within(&cov, 1.0 / 12.0, 3.0);
        let t = 1.0;
        let e = estimate_ratio(
            |r| s.sample(r),
            |p| {
                (
                    (p.equal && p.tau1 <= t) as u8 as f64,
                    (p.tau1 <= t) as u8 as f64,
                )
            },
            1_000_000,
            13,
        )
        .unwrap();
        let both = 1.0 - joint_survival(&sc, t, 0.0).unwrap().value;
        let num = (1.0 - (-3.0f64 * t).exp()) / 3.0;
        within(&e, num / both, 3.0);
        assert!(estimate(|r| s.sample(r), |p| p.tau1, 50, 1).is_err());
    }

    #[test]
    fn fixed_path_and_ensemble_modes() {
        let path = StatePath::identity(40.0, 0.01).unwrap();
        let shape = Shape::SinSquared {
            offset: 1.0,
            amplitude: 1.0,
            frequency: 1.0,
        };
        let base = IntensityModel::path_driven(shape);
        let sc = BivariateScenario::new(
            IntensityModel::proportional(base.clone(), 1.0),
            IntensityModel::proportional(base.clone(), 2.0),
            base,
        )
        .with_paths(PathSource::Fixed(path.clone()));
        let s = PairSampler::mo(&sc).unwrap();
        within(
            &estimate(|r| s.sample(r), |p| p.equal as u8 as f64, 200_000, 14).unwrap(),
            0.25,
            3.0,
        );
        let shifted = StatePath::from_fn(40.0, 0.01, |t| t + 0.7).unwrap();
        let ens = sc
            .clone()
            .with_paths(PathSource::Ensemble(vec![path, shifted]));
        let s = PairSampler::mo(&ens).unwrap();
        within(
            &estimate(|r| s.sample(r), |p| p.equal as u8 as f64, 200_000, 15).unwrap(),
            0.25,
            3.0,
        );
    }

    #[test]
    fn sample_export() {
        let s = mo(1.0, 1.0, 1.0);
        let mut buf = Vec::new();
        write_pair_samples(&s, 10, 3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("tau1,tau2,equal,cause1,cause2"));
        let sys = ShockSystem::from_pattern(
            3,
            SubsetPattern {
                kind: PatternKind::Fractional,
                base_rate: 1.0,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_system_samples(&sys, 5, 3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau1,tau2,tau3,all_equal,cause1,cause2,cause3"));
        assert_eq!(text.lines().count(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn equal_iff_common_shock_first(l1 in 0.1..5.0f64, l2 in 0.1..5.0f64, l3 in 0.1..5.0f64, seed: u64) {
            let s = mo(l1, l2, l3);
            let mut rng = RngSpec::new(seed, 0).generator();
            for _ in 0..200 {
                let p = s.sample(&mut rng).unwrap();
                prop_assert_eq!(p.equal, p.cause == [Cause::Common, Cause::Common]);
                prop_assert!(p.tau1 > 0.0 && p.tau2 > 0.0);
            }
        }

        #[test]
        fn newton_matches_bisection(s in 0.0..20.0f64, delta in 0.0..=1.0f64, e in 1e-9..40.0f64) {
            let t = gumbel_conditional(s, delta, e).unwrap();
            prop_assert!((t - bisect(s, delta, e)).abs() <= 2.0 * INVERSION_TOL * t.max(1.0));
        }

        #[test]
        fn gumbel_conditional_is_monotone_in_e(s in 0.0..5.0f64, delta in 0.0..=1.0f64, e in 1e-6..20.0f64) {
            let a = gumbel_conditional(s, delta, e).unwrap();
            let b = gumbel_conditional(s, delta, e * 1.01).unwrap();
            prop_assert!(b >= a);
        }
    }
}
