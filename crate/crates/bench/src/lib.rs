//! Scenarios shared by the benchmarks.

use simulstop::{
    BivariateScenario, GumbelScenario, IntensityModel, PathSource, PatternKind, Shape, ShockSystem,
    StatePath, SubsetPattern,
};

pub fn constant() -> BivariateScenario {
    BivariateScenario::constant(2.0, 3.0, 5.0)
}

/// Rates proportional to `1 + sin²(x)` along `X_t = t`.
pub fn oscillating(dt: f64) -> BivariateScenario {
    let base = IntensityModel::path_driven(Shape::SinSquared {
        offset: 1.0,
        amplitude: 1.0,
        frequency: 1.0,
    });
    BivariateScenario::new(
        IntensityModel::proportional(base.clone(), 2.0),
        IntensityModel::proportional(base.clone(), 0.5),
        base,
    )
    .with_paths(PathSource::Fixed(StatePath::identity(40.0, dt).unwrap()))
}

pub fn gumbel() -> GumbelScenario {
    GumbelScenario::new(BivariateScenario::constant(2.0, 2.0, 1.0), 1.0).unwrap()
}

pub fn pattern_system(n: usize) -> ShockSystem {
    ShockSystem::from_pattern(
        n,
        SubsetPattern {
            kind: PatternKind::Fractional,
            base_rate: 1.0,
        },
    )
    .unwrap()
}
