//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria listed in `KNOWN_FAILURES` cannot be met as stated and still
//! print FAIL. The process exits nonzero when the set of failures differs
//! from that list in either direction.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use simulstop::bivariate::{
    decompose, joint_hazard_ratio, joint_survival, l2_distance_sq, marginal_survival, prob_equal,
    prob_equal_and_before, prob_equal_bounds, prob_equal_closed, prob_equal_given_both_before,
    prob_equal_given_tau1_before, prob_within_eps,
};
use simulstop::gumbel::{
    erfc_bound_h, erfc_bound_optimize, gumbel_covariance_constant, gumbel_joint_survival,
    gumbel_marginal_survival, gumbel_prob_equal,
};
use simulstop::montecarlo::{estimate, estimate_covariance, estimate_ratio, SampleRng};
use simulstop::multivariate::{prob_all_equal, prob_all_equal_pattern};
use simulstop::{
    BivariateScenario, BoundSpec, ClosedForm, EstimateWithCI, GumbelScenario, IntensityModel,
    PairSampler, PathSource, PatternKind, Shape, ShockSystem, StatePath, SubsetPattern,
    SystemSampler,
};
use simulstop_cli::config::load;
use simulstop_cli::{cmd_validate, render_validation, resolve_seed, OutputFormat};

type Outcome = Result<Vec<String>, String>;
type Criterion = (&'static str, fn() -> Outcome);

const KNOWN_FAILURES: [(usize, &str); 2] = [
    (
        7,
        "the ratio is 5 - 6.5 eps + O(eps^2), a bias of 6.5e-4 at eps = 1e-4",
    ),
    (
        12,
        "h(1, ell) = 0 has its root at 1.2779350285, 1.4e-3 from 1.27935",
    ),
];

const MC_SAMPLES: u64 = 1_000_000;
const SEED: u64 = 20_240_601;

fn ok(pass: bool, detail: String, notes: &mut Vec<String>) -> bool {
    notes.push(format!("{} {detail}", if pass { "ok  " } else { "MISS" }));
    pass
}

fn fail_if(pass: bool, notes: Vec<String>) -> Outcome {
    if pass {
        Ok(notes)
    } else {
        Err(notes.join("\n        "))
    }
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn mc_check(label: &str, est: &EstimateWithCI, reference: f64, notes: &mut Vec<String>) -> bool {
    let z = est.z_score(reference);
    ok(
        z.abs() <= 3.0,
        format!(
            "{label}: mc {:.6} ± {:.2e} vs {reference:.6} (z = {z:+.2})",
            est.mean, est.std_error
        ),
        notes,
    )
}

fn timed(label: &str, limit: Duration, start: Instant, notes: &mut Vec<String>) -> bool {
    let took = start.elapsed();
    ok(
        took < limit,
        format!(
            "{label}: {:.2} s (limit {} s)",
            took.as_secs_f64(),
            limit.as_secs()
        ),
        notes,
    )
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn oscillating_base() -> IntensityModel {
    IntensityModel::path_driven(Shape::SinSquared {
        offset: 1.0,
        amplitude: 1.0,
        frequency: 1.0,
    })
}

fn sin2(offset: f64, amplitude: f64, frequency: f64) -> Shape {
    Shape::SinSquared {
        offset,
        amplitude,
        frequency,
    }
}

fn identity_path() -> PathSource {
    PathSource::Fixed(StatePath::identity(40.0, 0.01).expect("identity path"))
}

fn same_intensity() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for (k, a) in [0.5, 1.0, 3.0].into_iter().enumerate() {
        let sc = BivariateScenario::constant(a, a, a);
        let v = prob_equal(&sc).map_err(err)?.value;
        pass &= ok(
            within(v, 1.0 / 3.0, 1e-10),
            format!("alpha = {a}: quadrature {v:.15}"),
            &mut notes,
        );
        let sampler = PairSampler::mo(&sc).map_err(err)?;
        let est = estimate(
            |r| sampler.sample(r),
            |p| p.equal as u8 as f64,
            MC_SAMPLES,
            SEED + k as u64,
        )
        .map_err(err)?;
        pass &= mc_check(&format!("alpha = {a}"), &est, 1.0 / 3.0, &mut notes);
    }
    pass &= timed("runtime", Duration::from_secs(10), start, &mut notes);
    fail_if(pass, notes)
}

fn constant_formula() -> Outcome {
    let mut worst: f64 = 0.0;
    let levels = [0.3, 1.0, 2.5];
    for &a1 in &levels {
        for &a2 in &levels {
            for &a3 in &levels {
                let v = prob_equal(&BivariateScenario::constant(a1, a2, a3))
                    .map_err(err)?
                    .value;
                let cf = prob_equal_closed(ClosedForm::Constant {
                    rate1: a1,
                    rate2: a2,
                    rate3: a3,
                })
                .map_err(err)?;
                worst = worst
                    .max((v - cf).abs())
                    .max((cf - a3 / (a1 + a2 + a3)).abs());
            }
        }
    }
    let mut notes = Vec::new();
    let pass = ok(
        worst <= 1e-10,
        format!("27 points, max |error| = {worst:.2e}"),
        &mut notes,
    );
    fail_if(pass, notes)
}

fn proportional_formula() -> Outcome {
    let mut worst: f64 = 0.0;
    let factors = [0.25, 1.0, 3.0];
    for &f1 in &factors {
        for &f2 in &factors {
            let sc = BivariateScenario::new(
                IntensityModel::proportional(oscillating_base(), f1),
                IntensityModel::proportional(oscillating_base(), f2),
                oscillating_base(),
            )
            .with_paths(identity_path());
            let v = prob_equal(&sc).map_err(err)?.value;
            let cf = prob_equal_closed(ClosedForm::Proportional {
                factor1: f1,
                factor2: f2,
            })
            .map_err(err)?;
            worst = worst
                .max((v - cf).abs())
                .max((cf - 1.0 / (f1 + f2 + 1.0)).abs());
        }
    }
    let mut notes = Vec::new();
    let pass = ok(
        worst <= 1e-10,
        format!("9 points on base 1 + sin²(x), max |error| = {worst:.2e}"),
        &mut notes,
    );
    fail_if(pass, notes)
}

fn decomposition() -> Outcome {
    let sc = BivariateScenario::constant(2.0, 3.0, 5.0);
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (s, t) = (rng.random_range(0.0..1.5), rng.random_range(0.0..1.5));
        let d = decompose(&sc, s, t).map_err(err)?;
        let f = joint_survival(&sc, s, t).map_err(err)?.value;
        worst = worst.max((d.reconstruct() - f).abs());
    }
    let h = 1e-2;
    let sing = |s: f64, t: f64| -> Result<f64, String> {
        decompose(&sc, s, t)
            .map_err(err)?
            .f_sing_value
            .ok_or_else(|| "singular part missing".to_string())
    };
    let mut mixed: f64 = 0.0;
    for _ in 0..100 {
        let s: f64 = rng.random_range(0.0..1.5);
        let mut t: f64 = rng.random_range(0.0..1.5);
        while (s - t).abs() < 3.0 * h {
            t = rng.random_range(0.0..1.5);
        }
        let m = (sing(s + h, t + h)? - sing(s + h, t)? - sing(s, t + h)? + sing(s, t)?) / (h * h);
        mixed = mixed.max(m.abs());
    }
    let mut notes = Vec::new();
    let mut pass = ok(
        worst <= 1e-8,
        format!("100 points, max reconstruction error {worst:.2e}"),
        &mut notes,
    );
    pass &= ok(
        mixed <= 1e-6,
        format!("max off-diagonal mixed difference of singular part {mixed:.2e}"),
        &mut notes,
    );
    fail_if(pass, notes)
}

fn bound_scenarios(rng: &mut StdRng, family: usize) -> (BoundSpec, BivariateScenario) {
    let pd = IntensityModel::path_driven;
    match family {
        0 => {
            let b = rng.random_range(0.3..2.0);
            let lower: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..1.5));
            let upper: [f64; 3] = std::array::from_fn(|i| lower[i] + rng.random_range(0.1..1.5));
            let model = |i: usize, rng: &mut StdRng| {
                pd(sin2(
                    lower[i] * b,
                    (upper[i] - lower[i]) * b,
                    rng.random_range(0.3..3.0),
                ))
            };
            let sc = BivariateScenario::new(model(0, rng), model(1, rng), model(2, rng))
                .with_paths(identity_path());
            let spec = BoundSpec::BoundedIntensity {
                lower,
                upper,
                base: IntensityModel::constant(b),
            };
            (spec, sc)
        }
        1 => {
            // Idiosyncratic shocks switch off at t1, the common shock starts at t0 > t1.
            let (r1, r2) = (rng.random_range(0.1..1.0), rng.random_range(0.1..1.0));
            let t1 = rng.random_range(0.5..2.0);
            let t0 = t1 + rng.random_range(0.1..1.0);
            let c = rng.random_range(1.0..3.0);
            let step = |r: f64| Shape::Table {
                points: vec![(0.0, r), (t1, r), (t1 + 0.01, 0.0)],
            };
            let sc = BivariateScenario::new(
                pd(step(r1)),
                pd(step(r2)),
                pd(Shape::Table {
                    points: vec![(0.0, 0.0), (t0, 0.0), (t0 + 0.01, c)],
                }),
            )
            .with_paths(identity_path());
            let total = (r1 + r2) * (t1 + 0.005);
            let spec = BoundSpec::BoundedSumCompensators {
                lower: 0.9 * total,
                upper: 1.1 * total,
            };
            (spec, sc)
        }
        2 => {
            // A¹ ∈ [a, a+b]·t, A² = d·t, A³ = c·t.
            let (a, b, d, c) = (
                rng.random_range(0.1..1.0),
                rng.random_range(0.1..2.0),
                rng.random_range(0.1..1.0),
                rng.random_range(0.3..2.0),
            );
            let sc = BivariateScenario::new(
                pd(sin2(a, b, rng.random_range(0.3..3.0))),
                IntensityModel::constant(d),
                IntensityModel::constant(c),
            )
            .with_paths(identity_path());
            let spec = BoundSpec::CompensatorRatio {
                lower: (a + d) / c,
                upper: (a + b + d) / c,
            };
            (spec, sc)
        }
        _ => {
            let lower = rng.random_range(0.2..2.0);
            let upper = lower + rng.random_range(0.0..0.9);
            let s1 = sin2(
                rng.random_range(0.2..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.3..3.0),
            );
            let s2 = sin2(
                rng.random_range(0.2..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.3..3.0),
            );
            let common = Shape::Sum {
                terms: vec![
                    Shape::Scaled {
                        factor: lower,
                        inner: Box::new(s1.clone()),
                    },
                    Shape::Scaled {
                        factor: upper,
                        inner: Box::new(s2.clone()),
                    },
                ],
            };
            let sc = BivariateScenario::new(pd(s1), pd(s2), pd(common)).with_paths(identity_path());
            (BoundSpec::IntensityVsSum { lower, upper }, sc)
        }
    }
}

fn bounds_sandwich() -> Outcome {
    let names = [
        "bounded intensity",
        "bounded sum of compensators",
        "compensator ratio",
        "intensity vs sum",
    ];
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut notes = Vec::new();
    let mut pass = true;
    for (family, name) in names.iter().enumerate() {
        let mut inside = 0;
        let mut hypotheses = 0;
        let mut min_gap = f64::INFINITY;
        for _ in 0..20 {
            let (spec, sc) = bound_scenarios(&mut rng, family);
            if spec.holds_for(&sc).map_err(err)? {
                hypotheses += 1;
            }
            let (lo, hi) = prob_equal_bounds(&spec).map_err(err)?;
            let v = prob_equal(&sc).map_err(err)?.value;
            if lo <= v && v <= hi {
                inside += 1;
            }
            min_gap = min_gap.min((v - lo).min(hi - v));
        }
        pass &= ok(
            inside == 20 && hypotheses == 20,
            format!("{name}: hypotheses hold {hypotheses}/20, inside {inside}/20, min margin {min_gap:.2e}"),
            &mut notes,
        );
    }
    fail_if(pass, notes)
}

fn conditionals() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let constant = BivariateScenario::constant(1.0, 2.0, 3.0);
    // Total rate 6 gives a compensator of 36 at t = 6.
    let oscillating = BivariateScenario::new(
        IntensityModel::proportional(oscillating_base(), 0.5),
        IntensityModel::constant(1.0),
        oscillating_base(),
    )
    .with_paths(identity_path());
    // Total compensator here exceeds 2.5 t.
    for (label, sc, t) in [
        ("constant (1, 2, 3)", &constant, 6.0),
        ("oscillating base", &oscillating, 13.0),
    ] {
        let before = prob_equal_and_before(sc, t).map_err(err)?.value;
        let total = prob_equal(sc).map_err(err)?.value;
        pass &= ok(
            (before - total).abs() < 1e-8,
            format!(
                "{label}: P(equal, tau1 <= {t}) - P(equal) = {:.2e}",
                before - total
            ),
            &mut notes,
        );
    }
    let t = 0.3;
    let sampler = PairSampler::mo(&constant).map_err(err)?;
    let draw = |r: &mut SampleRng| sampler.sample(r);
    let given1 = prob_equal_given_tau1_before(&constant, t)
        .map_err(err)?
        .value;
    let est = estimate_ratio(
        draw,
        |p| {
            let hit = (p.tau1 <= t) as u8 as f64;
            (hit * p.equal as u8 as f64, hit)
        },
        MC_SAMPLES,
        SEED,
    )
    .map_err(err)?;
    pass &= mc_check("P(equal | tau1 <= 0.3)", &est, given1, &mut notes);
    let given_both = prob_equal_given_both_before(&constant, t)
        .map_err(err)?
        .value;
    let est = estimate_ratio(
        draw,
        |p| {
            let hit = (p.tau1 <= t && p.tau2 <= t) as u8 as f64;
            (hit * p.equal as u8 as f64, hit)
        },
        MC_SAMPLES,
        SEED + 1,
    )
    .map_err(err)?;
    pass &= mc_check("P(equal | tau1, tau2 <= 0.3)", &est, given_both, &mut notes);
    fail_if(pass, notes)
}

fn hazard_limit() -> Outcome {
    let sc = BivariateScenario::constant(2.0, 3.0, 5.0);
    let mut notes = Vec::new();
    let mut pass = true;
    for t in [0.0, 0.5, 2.0] {
        let v = joint_hazard_ratio(&sc, t, 1e-4).map_err(err)?.value;
        pass &= ok(
            within(v, 5.0, 5e-4),
            format!(
                "t = {t}: ratio {v:.9}, |error| {:.3e} (tol 5e-4)",
                (v - 5.0).abs()
            ),
            &mut notes,
        );
    }
    fail_if(pass, notes)
}

fn distances() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for (a1, a2, a3) in [(1.0, 1.0, 1.0), (2.0, 3.0, 5.0), (0.5, 4.0, 0.2)] {
        let sc = BivariateScenario::constant(a1, a2, a3);
        worst = worst.max(
            (prob_within_eps(&sc, 0.0).map_err(err)?.value - prob_equal(&sc).map_err(err)?.value)
                .abs(),
        );
    }
    let osc = BivariateScenario::new(
        IntensityModel::proportional(oscillating_base(), 2.0),
        IntensityModel::constant(0.5),
        oscillating_base(),
    )
    .with_paths(identity_path());
    worst = worst.max(
        (prob_within_eps(&osc, 0.0).map_err(err)?.value - prob_equal(&osc).map_err(err)?.value)
            .abs(),
    );
    pass &= ok(
        worst <= 1e-10,
        format!("within_eps(0) vs prob_equal, max |difference| {worst:.2e}"),
        &mut notes,
    );

    let l2 = l2_distance_sq(&BivariateScenario::constant(1.0, 1.0, 0.0))
        .map_err(err)?
        .value;
    pass &= ok(
        within(l2, 2.0, 1e-8),
        format!("independent unit rates: E[(tau1 - tau2)^2] = {l2:.12}"),
        &mut notes,
    );

    let mo = BivariateScenario::constant(1.0, 1.0, 1.0);
    let l2 = l2_distance_sq(&mo).map_err(err)?.value;
    let sampler = PairSampler::mo(&mo).map_err(err)?;
    let est = estimate(
        |r| sampler.sample(r),
        |p| (p.tau1 - p.tau2).powi(2),
        MC_SAMPLES,
        SEED,
    )
    .map_err(err)?;
    pass &= mc_check("common shock (1, 1, 1) L2", &est, l2, &mut notes);
    fail_if(pass, notes)
}

fn multivariate() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let multiplicative = SubsetPattern {
        kind: PatternKind::Multiplicative,
        base_rate: 1.0,
    };
    let mut worst: f64 = 0.0;
    for n in 2..=8 {
        let v = prob_all_equal_pattern(n, multiplicative).map_err(err)?;
        worst = worst.max((v - 0.5f64.powi(n as i32 - 1)).abs());
    }
    pass &= ok(
        worst <= 1e-10,
        format!("multiplicative closed form n = 2..8, max |error| {worst:.2e}"),
        &mut notes,
    );

    let mut worst: f64 = 0.0;
    for kind in [PatternKind::Multiplicative, PatternKind::Fractional] {
        for n in 2..=6 {
            let p = SubsetPattern {
                kind,
                base_rate: 1.3,
            };
            let sys = ShockSystem::from_pattern(n, p).map_err(err)?;
            let v = prob_all_equal(&sys).map_err(err)?.value;
            worst = worst.max((v - prob_all_equal_pattern(n, p).map_err(err)?).abs());
        }
    }
    pass &= ok(
        worst <= 1e-9,
        format!("explicit systems n = 2..6 vs closed forms, max |error| {worst:.2e}"),
        &mut notes,
    );

    for kind in [PatternKind::Multiplicative, PatternKind::Fractional] {
        for n in 2..=4 {
            let p = SubsetPattern {
                kind,
                base_rate: 1.0,
            };
            let sampler =
                SystemSampler::new(&ShockSystem::from_pattern(n, p).map_err(err)?).map_err(err)?;
            let est = estimate(
                |r| sampler.sample(r),
                |s| s.all_equal() as u8 as f64,
                MC_SAMPLES,
                SEED + n as u64,
            )
            .map_err(err)?;
            pass &= mc_check(
                &format!("{kind:?} n = {n}"),
                &est,
                prob_all_equal_pattern(n, p).map_err(err)?,
                &mut notes,
            );
        }
    }
    fail_if(pass, notes)
}

fn gumbel_reduction() -> Outcome {
    let mut notes = Vec::new();
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rates: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..4.0));
        let mo = BivariateScenario::constant(rates[0], rates[1], rates[2]);
        let gs = GumbelScenario::new(mo.clone(), 0.0).map_err(err)?;
        let (s, t) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let pairs = [
            (
                gumbel_joint_survival(&gs, s, t).map_err(err)?.value,
                joint_survival(&mo, s, t).map_err(err)?.value,
            ),
            (
                gumbel_marginal_survival(&gs, 1, s).map_err(err)?.value,
                marginal_survival(&mo, 1, s).map_err(err)?.value,
            ),
            (
                gumbel_marginal_survival(&gs, 2, t).map_err(err)?.value,
                marginal_survival(&mo, 2, t).map_err(err)?.value,
            ),
            (
                gumbel_prob_equal(&gs).map_err(err)?.value,
                prob_equal(&mo).map_err(err)?.value,
            ),
        ];
        for (a, b) in pairs {
            worst = worst.max((a - b).abs());
        }
    }
    let mut pass = ok(
        worst <= 1e-12,
        format!("delta = 0 vs common-shock model, 20 scenarios, max |difference| {worst:.2e}"),
        &mut notes,
    );

    let mut above = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for l1 in [0.5, 1.0, 2.0] {
        for l2 in [0.5, 1.0, 2.0] {
            for delta in [0.25, 0.5, 1.0] {
                let gs = GumbelScenario::new(BivariateScenario::constant(l1, l2, 1.0), delta)
                    .map_err(err)?;
                let v = gumbel_prob_equal(&gs).map_err(err)?.value;
                let excess = v - 1.0 / (l1 + l2 + 1.0);
                max_excess = max_excess.max(excess);
                if excess > 0.0 {
                    above += 1;
                }
            }
        }
    }
    pass &= ok(
        above == 0,
        format!("27-point grid, max of value - lambda3/total = {max_excess:.3e}"),
        &mut notes,
    );
    fail_if(pass, notes)
}

fn negative_covariance() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let cf = gumbel_covariance_constant(2.0, 2.0, 1.0).map_err(err)?;
    let mut pass = ok(
        cf < 0.0,
        format!("quadrature covariance {cf:.8}"),
        &mut notes,
    );
    let gs = GumbelScenario::new(BivariateScenario::constant(2.0, 2.0, 1.0), 1.0).map_err(err)?;
    let sampler = PairSampler::gumbel(&gs).map_err(err)?;
    let est = estimate_covariance(
        |r| sampler.sample(r),
        |p| (p.tau1, p.tau2),
        10_000_000,
        SEED,
    )
    .map_err(err)?;
    pass &= ok(
        est.mean < 0.0 && est.mean.abs() > 3.0 * est.std_error,
        format!(
            "mc covariance {:.6} ± {:.2e} at 1e7 samples",
            est.mean, est.std_error
        ),
        &mut notes,
    );
    pass &= timed("runtime", Duration::from_secs(60), start, &mut notes);
    fail_if(pass, notes)
}

fn erfc_bound() -> Outcome {
    let mut notes = Vec::new();
    let r = erfc_bound_optimize().map_err(err)?;
    let mut pass = ok(
        within(r.ell, 1.27935, 1e-4),
        format!("ell* = {:.10} (target 1.27935 ± 1e-4)", r.ell),
        &mut notes,
    );
    pass &= ok(
        within(r.x_star, 1.2043, 1e-3),
        format!("x* = {:.7} (target 1.2043 ± 1e-3)", r.x_star),
        &mut notes,
    );
    pass &= ok(
        within(r.h_max, 0.00131266, 1e-5),
        format!("h_max = {:.10} (target 0.00131266 ± 1e-5)", r.h_max),
        &mut notes,
    );
    let points = 10_000;
    let mut min_h = f64::INFINITY;
    for k in 0..points {
        let x = 1.0 + 9.0 * k as f64 / (points - 1) as f64;
        min_h = min_h.min(erfc_bound_h(x, 1.25).map_err(err)?);
    }
    pass &= ok(
        min_h >= 0.0,
        format!("min h(x, 5/4) on 1e4 points of [1, 10] = {min_h:.3e}"),
        &mut notes,
    );
    fail_if(pass, notes)
}

fn end_to_end() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["mo_constant.toml", "gumbel_delta1.toml", "system_n3.toml"] {
        let loaded = load(&dir.join(name), None).map_err(err)?;
        let seed = resolve_seed(None, Some(&loaded)).map_err(err)?;
        let first = cmd_validate(&loaded, MC_SAMPLES, seed).map_err(err)?;
        let second = cmd_validate(&loaded, MC_SAMPLES, seed).map_err(err)?;
        let same = render_validation(&first, OutputFormat::Json).map_err(err)?
            == render_validation(&second, OutputFormat::Json).map_err(err)?;
        let failed = first.rows.iter().filter(|r| !r.pass).count();
        pass &= ok(
            first.pass && same && seed == 42,
            format!(
                "{name}: seed {seed}, {} rows, {failed} failed, repeat identical: {same}",
                first.rows.len()
            ),
            &mut notes,
        );
    }
    fail_if(pass, notes)
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("same-intensity identity", same_intensity),
        ("constant-rate formula", constant_formula),
        ("proportional formula", proportional_formula),
        ("decomposition reconstruction", decomposition),
        ("bounds sandwich", bounds_sandwich),
        ("conditional probabilities", conditionals),
        ("joint hazard limit", hazard_limit),
        ("distance metrics", distances),
        ("multivariate all-equal", multivariate),
        ("Gumbel reduction and domination", gumbel_reduction),
        ("Gumbel negative covariance", negative_covariance),
        ("complementary error function bound", erfc_bound),
        ("end-to-end validation", end_to_end),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        let start = Instant::now();
        let (status, detail) = match check() {
            Ok(notes) => ("PASS", notes.join("\n        ")),
            Err(detail) => {
                failed.push(id);
                ("FAIL", detail)
            }
        };
        println!(
            "{status} {id:>2} {name} ({:.1} s)",
            start.elapsed().as_secs_f64()
        );
        println!("        {detail}");
        if let Some((_, reason)) = KNOWN_FAILURES.iter().find(|(k, _)| *k == id) {
            println!("        known failure: {reason}");
        }
    }
    let known: Vec<usize> = KNOWN_FAILURES.iter().map(|(k, _)| *k).collect();
    let unexpected: Vec<usize> = failed
        .iter()
        .copied()
        .filter(|k| !known.contains(k))
        .collect();
    let fixed: Vec<usize> = known
        .iter()
        .copied()
        .filter(|k| !failed.contains(k))
        .collect();
    println!(
        "acceptance: {} passed, {} failed {failed:?}; unexpected failures {unexpected:?}, known failures now passing {fixed:?}",
        criteria.len() - failed.len(),
        failed.len(),
    );
    if !unexpected.is_empty() || !fixed.is_empty() {
        std::process::exit(1);
    }
}
