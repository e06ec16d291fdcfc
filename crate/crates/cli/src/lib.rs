//! Front end for the `simulstop` evaluators: scenario files, the `eval`,
//! `validate`, `sweep`, `simulate` and `erfc-report` commands, and their
//! output formats.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod quantity;
pub mod sweep;
pub mod validate;

use std::io::Write;

use serde::Serialize;
use simulstop::gumbel::{erfc_bound_optimize, erfc_bound_report};
use simulstop::montecarlo::{write_pair_samples, write_system_samples};
use simulstop::PairSampler;

use crate::config::{LoadedScenario, Scenario};
use crate::error::{CliError, CliResult};
use crate::output::{fmt17, fmt_opt, table};
use crate::quantity::{evaluate, Quantity};
use crate::sweep::SweepRow;
use crate::validate::ValidationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Table,
}

fn to_json(v: &impl Serialize) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// The seed from `--seed`, else from the scenario file. There is no
/// time-based default.
pub fn resolve_seed(flag: Option<u64>, loaded: Option<&LoadedScenario>) -> CliResult<u64> {
    flag.or_else(|| loaded.and_then(|l| l.file.seed))
        .ok_or_else(|| {
            CliError::config("randomized commands need --seed (or `seed` in the scenario file)")
        })
}

pub fn cmd_eval(
    loaded: Option<&LoadedScenario>,
    words: &[String],
    format: OutputFormat,
) -> CliResult<String> {
    let q = Quantity::parse(words)?;
    let r = evaluate(&q, loaded.map(|l| &l.scenario))?;
    let value = match r.scalar() {
        Some(v) => fmt17(v),
        None => r.value.to_string(),
    };
    match format {
        OutputFormat::Json => to_json(&r),
        OutputFormat::Csv => csv_text(
            &["quantity", "value", "abs_error_estimate"],
            &[vec![
                r.quantity.clone(),
                value,
                fmt_opt(r.abs_error_estimate),
            ]],
        ),
        OutputFormat::Table => {
            let mut rows = vec![
                vec!["quantity".into(), r.quantity.clone()],
                vec![
                    "inputs".into(),
                    serde_json::Value::Object(r.inputs.clone()).to_string(),
                ],
                vec!["value".into(), value],
                vec!["abs_error_estimate".into(), fmt_opt(r.abs_error_estimate)],
            ];
            if let Some(se) = r.std_error {
                rows.push(vec!["std_error".into(), fmt17(se)]);
            }
            for w in &r.warnings {
                rows.push(vec!["warning".into(), w.clone()]);
            }
            Ok(table(&["field", "value"], &rows))
        }
    }
}

pub fn validation_table(report: &ValidationReport) -> String {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                fmt17(r.closed_form),
                fmt17(r.mc_mean),
                fmt_opt(r.mc_se),
                r.z_score.map(|z| format!("{z:.3}")).unwrap_or_default(),
                if r.pass { "pass" } else { "FAIL" }.into(),
            ]
        })
        .collect();
    let mut out = table(
        &["check", "closed_form", "mc_mean", "mc_se", "z", "result"],
        &rows,
    );
    out.push_str(&format!(
        "overall: {} ({} samples, seed {})\n",
        if report.pass { "pass" } else { "FAIL" },
        report.samples,
        report.seed
    ));
    out
}

pub fn cmd_validate(
    loaded: &LoadedScenario,
    samples: u64,
    seed: u64,
) -> CliResult<ValidationReport> {
    validate::validate(&loaded.scenario, loaded.file.pattern, samples, seed)
}

pub fn render_validation(report: &ValidationReport, format: OutputFormat) -> CliResult<String> {
    match format {
        OutputFormat::Json => to_json(report),
        OutputFormat::Table => Ok(validation_table(report)),
        OutputFormat::Csv => csv_text(
            &[
                "check",
                "kind",
                "closed_form",
                "mc_mean",
                "mc_se",
                "z_score",
                "pass",
            ],
            &report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.name.clone(),
                        format!("{:?}", r.kind).to_lowercase(),
                        fmt17(r.closed_form),
                        fmt17(r.mc_mean),
                        fmt_opt(r.mc_se),
                        fmt_opt(r.z_score),
                        r.pass.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
    }
}

pub fn render_sweep(rows: &[SweepRow], format: OutputFormat) -> CliResult<String> {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.param.to_string(),
                fmt_opt(r.value),
                fmt_opt(r.abs_error_estimate),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let header = ["param", "value", "abs_error_estimate", "error"];
    match format {
        OutputFormat::Json => to_json(&rows),
        OutputFormat::Csv => csv_text(&header, &cells),
        OutputFormat::Table => Ok(table(&header, &cells)),
    }
}

/// Raw samples as CSV.
pub fn cmd_simulate(
    loaded: &LoadedScenario,
    samples: u64,
    seed: u64,
    out: impl Write,
) -> CliResult<()> {
    match &loaded.scenario {
        Scenario::Bivariate(sc) => write_pair_samples(&PairSampler::mo(sc)?, samples, seed, out)?,
        Scenario::Gumbel(gs) => write_pair_samples(&PairSampler::gumbel(gs)?, samples, seed, out)?,
        Scenario::System(sys) => write_system_samples(sys, samples, seed, out)?,
    }
    Ok(())
}

/// The optimized bound, or the report for a given `ell`.
pub fn cmd_erfc_report(ell: Option<f64>, format: OutputFormat) -> CliResult<String> {
    let r = match ell {
        Some(ell) => erfc_bound_report(ell)?,
        None => erfc_bound_optimize()?,
    };
    match format {
        OutputFormat::Json => to_json(&r),
        OutputFormat::Csv => csv_text(
            &["ell", "x_star", "h_max", "feasible"],
            &[vec![
                fmt17(r.ell),
                fmt17(r.x_star),
                fmt17(r.h_max),
                r.feasible.to_string(),
            ]],
        ),
        OutputFormat::Table => Ok(table(
            &["field", "value"],
            &[
                vec!["ell".into(), fmt17(r.ell)],
                vec!["x_star".into(), fmt17(r.x_star)],
                vec!["h_max".into(), fmt17(r.h_max)],
                vec!["feasible".into(), r.feasible.to_string()],
            ],
        )),
    }
}
