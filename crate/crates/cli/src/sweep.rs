//! Parameter sweeps: one quantity evaluated over a grid of values.

use serde::Serialize;
use serde_json::Value;

use crate::config::LoadedScenario;
use crate::error::{CliError, CliResult};
use crate::quantity::{arg_name, evaluate, Quantity};

/// Marks the swept slot among the quantity arguments.
pub const PLACEHOLDER: &str = "_";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub value: Option<f64>,
    pub abs_error_estimate: Option<f64>,
    /// `exit code N: message` for rows that failed.
    pub error: Option<String>,
}

/// Grid from a comma-separated list or an inclusive `start:stop:step` range.
pub fn parse_grid(list: Option<&str>, range: Option<&str>) -> CliResult<Vec<f64>> {
    let num = |w: &str| {
        w.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::config(format!("bad grid value {w:?}")))
    };
    match (list, range) {
        (Some(list), None) => list.split(',').map(num).collect(),
        (None, Some(range)) => {
            let parts: Vec<&str> = range.split(':').collect();
            let [start, stop, step] = parts[..] else {
                return Err(CliError::config("range must be start:stop:step"));
            };
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(CliError::config("range needs step > 0 and stop >= start"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|k| start + k as f64 * step).collect())
        }
        _ => Err(CliError::config("give exactly one of --grid or --range")),
    }
}

/// Sets the entry at a dotted path (`intensities.alpha1.rate`, `delta`, `n`).
fn set_path(tree: &mut Value, path: &str, v: f64) -> CliResult<()> {
    let mut node = tree;
    for key in path.split('.') {
        node = match node {
            Value::Object(m) => m.get_mut(key),
            Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| CliError::config(format!("parameter `{path}` is not in the scenario")))?;
    }
    if !node.is_number() {
        return Err(CliError::config(format!(
            "parameter `{path}` is not numeric"
        )));
    }
    *node = if node.is_u64() && v.fract() == 0.0 && v >= 0.0 {
        Value::from(v as u64)
    } else {
        Value::from(v)
    };
    Ok(())
}

fn row(param: f64, result: CliResult<f64>, err_est: Option<f64>) -> SweepRow {
    match result {
        Ok(value) => SweepRow {
            param,
            value: Some(value),
            abs_error_estimate: err_est,
            error: None,
        },
        Err(e) => SweepRow {
            param,
            value: None,
            abs_error_estimate: None,
            error: Some(format!("exit code {}: {e}", e.exit_code())),
        },
    }
}

fn scalar(
    q: &Quantity,
    scenario: Option<&crate::config::Scenario>,
) -> (CliResult<f64>, Option<f64>) {
    match evaluate(q, scenario) {
        Ok(r) => match r.scalar() {
            Some(v) => (Ok(v), r.abs_error_estimate),
            None => (
                Err(CliError::config(format!(
                    "`{}` is not a scalar quantity",
                    q.name()
                ))),
                None,
            ),
        },
        Err(e) => (Err(e), None),
    }
}

/// Evaluates `words` (a quantity and its arguments) at every grid value of
/// `param`. If an argument is [`PLACEHOLDER`], `param` must name that
/// argument and the value is substituted there; otherwise `param` is a
/// dotted path into the scenario file. Failed rows are recorded and the
/// sweep continues.
pub fn sweep(
    template: Option<&LoadedScenario>,
    param: &str,
    grid: &[f64],
    words: &[String],
) -> CliResult<Vec<SweepRow>> {
    if words.is_empty() {
        return Err(CliError::config("missing quantity"));
    }
    let slot = words.iter().position(|w| w == PLACEHOLDER);
    if let Some(k) = slot {
        let expected = k.checked_sub(1).and_then(|i| arg_name(&words[0], i));
        if expected.as_deref() != Some(param) {
            return Err(CliError::config(format!(
                "the placeholder is in the slot of `{}`, not `{param}`",
                expected.unwrap_or_default()
            )));
        }
        let mut rows = Vec::with_capacity(grid.len());
        for &v in grid {
            let mut w = words.to_vec();
            w[k] = v.to_string();
            let q = Quantity::parse(&w)?;
            let (res, err) = scalar(&q, template.map(|t| &t.scenario));
            rows.push(row(v, res, err));
        }
        return Ok(rows);
    }
    let template = template.ok_or_else(|| {
        CliError::config(format!(
            "`{param}` is not a quantity argument and no --scenario was given"
        ))
    })?;
    let q = Quantity::parse(words)?;
    // Check the parameter exists before running anything.
    set_path(
        &mut template.tree.clone(),
        param,
        grid.first().copied().unwrap_or(0.0),
    )?;
    let mut rows = Vec::with_capacity(grid.len());
    for &v in grid {
        let mut tree = template.tree.clone();
        set_path(&mut tree, param, v)?;
        let (res, err) = match LoadedScenario::from_tree(tree, template.base_dir.clone()) {
            Ok(loaded) => scalar(&q, Some(&loaded.scenario)),
            Err(e) => (Err(e), None),
        };
        rows.push(row(v, res, err));
    }
    Ok(rows)
}
