//! Quantities the `eval` and `sweep` commands can compute.

use serde::Serialize;
use serde_json::{json, Map, Value};
use simulstop::{bivariate as bv, gumbel, multivariate as mv, Evaluation};

use crate::config::Scenario;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionalKind {
    AndBefore,
    GivenTau1,
    GivenBoth,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Quantity {
    Survival(Vec<f64>),
    Marginal { i: usize, s: f64 },
    ProbEqual,
    Decompose { s: f64, t: f64 },
    Conditional { kind: ConditionalKind, t: f64 },
    Quadrant { s: f64, t: f64 },
    WithinEps { eps: f64 },
    L2,
    Covariance,
    ProbAllEqual,
    Hazard { t: f64, eps: f64 },
    ErfcH { x: f64, ell: f64 },
}

/// Quantity names with the names of their positional arguments.
/// `survival` takes one time per component (`s t` for pairs).
pub const QUANTITIES: &[(&str, &[&str])] = &[
    ("survival", &["s", "t"]),
    ("marginal", &["i", "s"]),
    ("prob-equal", &[]),
    ("decompose", &["s", "t"]),
    ("conditional", &["kind", "t"]),
    ("quadrant", &["s", "t"]),
    ("within-eps", &["eps"]),
    ("l2", &[]),
    ("covariance", &[]),
    ("prob-all-equal", &[]),
    ("hazard", &["t", "eps"]),
    ("erfc-h", &["x", "ell"]),
];

/// Name of the argument in slot `k` of `quantity`.
pub fn arg_name(quantity: &str, k: usize) -> Option<String> {
    if quantity == "survival" && k >= 2 {
        return Some(format!("t{}", k + 1));
    }
    QUANTITIES
        .iter()
        .find(|(q, _)| *q == quantity)
        .and_then(|(_, args)| args.get(k))
        .map(|s| s.to_string())
}

fn number(name: &str, word: &str) -> CliResult<f64> {
    let v: f64 = word.parse().map_err(|_| {
        CliError::config(format!("argument `{name}` must be a number, got {word:?}"))
    })?;
    if v.is_nan() {
        return Err(CliError::config(format!("argument `{name}` is NaN")));
    }
    Ok(v)
}

fn time(name: &str, word: &str) -> CliResult<f64> {
    let v = number(name, word)?;
    if v == f64::INFINITY || v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(format!(
            "argument `{name}` must be a time, got {word}"
        )))
    }
}

impl Quantity {
    pub fn parse(words: &[String]) -> CliResult<Self> {
        let (name, args) = words
            .split_first()
            .ok_or_else(|| CliError::config("missing quantity"))?;
        let Some((_, names)) = QUANTITIES.iter().find(|(q, _)| q == name) else {
            let known: Vec<&str> = QUANTITIES.iter().map(|q| q.0).collect();
            return Err(CliError::config(format!(
                "unknown quantity {name:?}; expected one of {}",
                known.join(", ")
            )));
        };
        let variadic = name == "survival";
        if (variadic && args.len() < 2) || (!variadic && args.len() != names.len()) {
            return Err(CliError::config(format!(
                "`{name}` takes arguments: {}",
                if variadic {
                    "t1 t2 [t3 ...]".to_string()
                } else {
                    names.join(" ")
                }
            )));
        }
        let a = |k: usize| args[k].as_str();
        Ok(match name.as_str() {
            "survival" => Quantity::Survival(
                args.iter()
                    .enumerate()
                    .map(|(k, w)| time(&arg_name("survival", k).unwrap(), w))
                    .collect::<CliResult<_>>()?,
            ),
            "marginal" => Quantity::Marginal {
                i: a(0).parse().map_err(|_| CliError::config("component must be 1 or 2"))?,
                s: time("s", a(1))?,
            },
            "prob-equal" => Quantity::ProbEqual,
            "decompose" => Quantity::Decompose {
                s: time("s", a(0))?,
                t: time("t", a(1))?,
            },
            "conditional" => Quantity::Conditional {
                kind: match a(0) {
                    "and-before" => ConditionalKind::AndBefore,
                    "given-tau1" => ConditionalKind::GivenTau1,
                    "given-both" => ConditionalKind::GivenBoth,
                    other => {
                        return Err(CliError::config(format!(
                            "conditional kind must be and-before, given-tau1 or given-both, got {other:?}"
                        )))
                    }
                },
                t: time("t", a(1))?,
            },
            "quadrant" => Quantity::Quadrant {
                s: time("s", a(0))?,
                t: time("t", a(1))?,
            },
            "within-eps" => Quantity::WithinEps { eps: number("eps", a(0))? },
            "l2" => Quantity::L2,
            "covariance" => Quantity::Covariance,
            "prob-all-equal" => Quantity::ProbAllEqual,
            "hazard" => Quantity::Hazard {
                t: time("t", a(0))?,
                eps: number("eps", a(1))?,
            },
            "erfc-h" => Quantity::ErfcH {
                x: number("x", a(0))?,
                ell: number("ell", a(1))?,
            },
            _ => unreachable!("name checked against QUANTITIES"),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Survival(_) => "survival",
            Quantity::Marginal { .. } => "marginal",
            Quantity::ProbEqual => "prob-equal",
            Quantity::Decompose { .. } => "decompose",
            Quantity::Conditional { .. } => "conditional",
            Quantity::Quadrant { .. } => "quadrant",
            Quantity::WithinEps { .. } => "within-eps",
            Quantity::L2 => "l2",
            Quantity::Covariance => "covariance",
            Quantity::ProbAllEqual => "prob-all-equal",
            Quantity::Hazard { .. } => "hazard",
            Quantity::ErfcH { .. } => "erfc-h",
        }
    }

    pub fn needs_scenario(&self) -> bool {
        !matches!(self, Quantity::ErfcH { .. })
    }

    fn inputs(&self) -> Map<String, Value> {
        let v = match self {
            Quantity::Survival(ts) => json!({ "times": ts }),
            Quantity::Marginal { i, s } => json!({ "i": i, "s": s }),
            Quantity::Decompose { s, t } | Quantity::Quadrant { s, t } => json!({ "s": s, "t": t }),
            Quantity::Conditional { kind, t } => json!({
                "kind": match kind {
                    ConditionalKind::AndBefore => "and-before",
                    ConditionalKind::GivenTau1 => "given-tau1",
                    ConditionalKind::GivenBoth => "given-both",
                },
                "t": t,
            }),
            Quantity::WithinEps { eps } => json!({ "eps": eps }),
            Quantity::Hazard { t, eps } => json!({ "t": t, "eps": eps }),
            Quantity::ErfcH { x, ell } => json!({ "x": x, "ell": ell }),
            _ => json!({}),
        };
        match v {
            Value::Object(m) => m,
            _ => Map::new(),
        }
    }
}

/// Result of one evaluation, as printed by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityResult {
    pub quantity: String,
    pub inputs: Map<String, Value>,
    /// A number, or an object for composite results such as `decompose`.
    pub value: Value,
    pub abs_error_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl QuantityResult {
    /// The value when it is a single number.
    pub fn scalar(&self) -> Option<f64> {
        self.value.as_f64()
    }
}

fn unsupported(q: &Quantity, sc: &Scenario) -> CliError {
    CliError::config(format!(
        "quantity `{}` is not available for a {:?} scenario",
        q.name(),
        sc.kind()
    ))
}

fn from_evaluation(q: &Quantity, ev: Evaluation) -> QuantityResult {
    QuantityResult {
        quantity: q.name().into(),
        inputs: q.inputs(),
        value: json!(ev.value),
        abs_error_estimate: Some(ev.abs_error_estimate),
        std_error: ev.std_error,
        warnings: ev.warnings,
    }
}

fn exact(q: &Quantity, value: Value) -> QuantityResult {
    QuantityResult {
        quantity: q.name().into(),
        inputs: q.inputs(),
        value,
        abs_error_estimate: None,
        std_error: None,
        warnings: Vec::new(),
    }
}

fn pair(ts: &[f64], q: &Quantity, sc: &Scenario) -> CliResult<(f64, f64)> {
    match ts {
        [s, t] => Ok((*s, *t)),
        _ => Err(CliError::config(format!(
            "`{}` takes two times for a {:?} scenario",
            q.name(),
            sc.kind()
        ))),
    }
}

pub fn evaluate(q: &Quantity, scenario: Option<&Scenario>) -> CliResult<QuantityResult> {
    if let Quantity::ErfcH { x, ell } = q {
        return Ok(exact(q, json!(gumbel::erfc_bound_h(*x, *ell)?)));
    }
    let sc =
        scenario.ok_or_else(|| CliError::config(format!("`{}` needs --scenario", q.name())))?;
    let ev = match (sc, q) {
        (Scenario::Bivariate(b), q) => match q {
            Quantity::Survival(ts) => {
                let (s, t) = pair(ts, q, sc)?;
                bv::joint_survival(b, s, t)?
            }
            Quantity::Marginal { i, s } => bv::marginal_survival(b, *i, *s)?,
            Quantity::ProbEqual => bv::prob_equal(b)?,
            Quantity::Decompose { s, t } => {
                let d = bv::decompose(b, *s, *t)?;
                return Ok(exact(
                    q,
                    json!({
                        "beta": d.beta,
                        "f_aa": d.f_aa_value,
                        "f_sing": d.f_sing_value,
                        "reconstructed": d.reconstruct(),
                    }),
                ));
            }
            Quantity::Conditional { kind, t } => match kind {
                ConditionalKind::AndBefore => bv::prob_equal_and_before(b, *t)?,
                ConditionalKind::GivenTau1 => bv::prob_equal_given_tau1_before(b, *t)?,
                ConditionalKind::GivenBoth => bv::prob_equal_given_both_before(b, *t)?,
            },
            Quantity::Quadrant { s, t } => bv::quadrant_prob(b, *s, *t)?,
            Quantity::WithinEps { eps } => bv::prob_within_eps(b, *eps)?,
            Quantity::L2 => bv::l2_distance_sq(b)?,
            Quantity::Covariance => bv::covariance(b)?,
            Quantity::Hazard { t, eps } => bv::joint_hazard_ratio(b, *t, *eps)?,
            _ => return Err(unsupported(q, sc)),
        },
        (Scenario::Gumbel(g), q) => match q {
            Quantity::Survival(ts) => {
                let (s, t) = pair(ts, q, sc)?;
                gumbel::gumbel_joint_survival(g, s, t)?
            }
            Quantity::Marginal { i, s } => gumbel::gumbel_marginal_survival(g, *i, *s)?,
            Quantity::ProbEqual => gumbel::gumbel_prob_equal(g)?,
            Quantity::Covariance => {
                let rates = g.base.constant_rates().filter(|_| g.delta == 1.0).ok_or_else(|| {
                    CliError::config(
                        "the Gumbel covariance is available for constant intensities with delta = 1; \
                         use `simulate` or `validate` otherwise",
                    )
                })?;
                let v = gumbel::gumbel_covariance_constant(rates[0], rates[1], rates[2])?;
                return Ok(exact(q, json!(v)));
            }
            _ => return Err(unsupported(q, sc)),
        },
        (Scenario::System(sys), q) => match q {
            Quantity::Survival(ts) => mv::joint_survival_n(sys, ts)?,
            Quantity::ProbAllEqual => mv::prob_all_equal(sys)?,
            _ => return Err(unsupported(q, sc)),
        },
    };
    Ok(from_evaluation(q, ev))
}
