//! Simultaneous default times in common-shock intensity models: analytic
//! evaluators for the two-component and `n`-component models, a Gumbel-coupled
//! variant, and an exact Monte Carlo sampler for cross-checking them.

// `!(x >= 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bivariate;
pub mod ensemble;
pub mod error;
pub mod gumbel;
pub mod intensity;
pub mod montecarlo;
pub mod multivariate;
pub mod quadrature;

pub use bivariate::{BivariateScenario, BoundSpec, ClosedForm, Decomposition};
pub use ensemble::{Evaluation, PathSource};
pub use error::{Error, Result};
pub use gumbel::{ErfcBoundReport, GumbelScenario};
pub use intensity::{CompensatorCurve, IntensityModel, Interpolation, OuSpec, Shape, StatePath};
pub use montecarlo::{
    EstimateWithCI, PairSampler, RngSpec, SamplePair, SystemSample, SystemSampler,
};
pub use multivariate::{PatternKind, ShockSystem, SubsetPattern};
pub use quadrature::{QuadratureResult, Region};
