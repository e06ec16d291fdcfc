use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simulstop_cli::config::{self, ConfigFormat, LoadedScenario};
use simulstop_cli::error::{CliError, CliResult, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK};
use simulstop_cli::{
    cmd_erfc_report, cmd_eval, cmd_simulate, cmd_validate, render_sweep, render_validation,
    resolve_seed, sweep, OutputFormat,
};

#[derive(Parser)]
#[command(
    name = "simulstop",
    version,
    about = "Simultaneous default times in common-shock models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML, or JSON for `.json` files).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the scenario file format.
    #[arg(long, value_enum)]
    config_format: Option<ConfigFormat>,
}

impl ScenarioArgs {
    fn load(&self) -> CliResult<Option<LoadedScenario>> {
        self.scenario
            .as_deref()
            .map(|p| config::load(p, self.config_format))
            .transpose()
    }

    fn require(&self) -> CliResult<LoadedScenario> {
        self.load()?
            .ok_or_else(|| CliError::config("this command needs --scenario"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one quantity, e.g. `eval --scenario s.toml survival 1 2`.
    Eval {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Quantity and its arguments: survival S T [..] | marginal I S |
        /// prob-equal | decompose S T | conditional KIND T | quadrant S T |
        /// within-eps EPS | l2 | covariance | prob-all-equal | hazard T EPS |
        /// erfc-h X ELL.
        #[arg(required = true, num_args = 1.., allow_hyphen_values = true)]
        quantity: Vec<String>,
    },
    /// Compare every closed form with its Monte Carlo estimate.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
    },
    /// Evaluate a quantity over a grid of one parameter. Mark a swept
    /// quantity argument with `_`, or name a scenario field by dotted path.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, conflicts_with = "range")]
        grid: Option<String>,
        /// Inclusive `start:stop:step`.
        #[arg(long)]
        range: Option<String>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true, num_args = 1.., allow_hyphen_values = true)]
        quantity: Vec<String>,
    },
    /// Export raw Monte Carlo samples as CSV.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize the rational bound on the Gaussian tail integral.
    ErfcReport {
        /// Report for this `ell` instead of the optimal one.
        #[arg(long)]
        ell: Option<f64>,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SIMULSTOP_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| {
        CliError::config(format!("SIMULSTOP_THREADS must be an integer, got {v:?}"))
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<i32> {
    configure_threads()?;
    match cli.command {
        Command::Eval {
            scenario,
            format,
            out,
            quantity,
        } => {
            let loaded = scenario.load()?;
            emit(
                &cmd_eval(loaded.as_ref(), &quantity, format)?,
                out.as_deref(),
            )?;
        }
        Command::Validate {
            scenario,
            samples,
            seed,
            out,
            format,
        } => {
            let loaded = scenario.require()?;
            let seed = resolve_seed(seed, Some(&loaded))?;
            let report = cmd_validate(&loaded, samples, seed)?;
            if let Some(p) = out {
                emit(&render_validation(&report, OutputFormat::Json)?, Some(&p))?;
            }
            emit(&render_validation(&report, format)?, None)?;
            if !report.pass {
                return Ok(EXIT_CHECK_FAILED);
            }
        }
        Command::Sweep {
            scenario,
            param,
            grid,
            range,
            format,
            out,
            quantity,
        } => {
            let loaded = scenario.load()?;
            let values = sweep::parse_grid(grid.as_deref(), range.as_deref())?;
            let rows = sweep::sweep(loaded.as_ref(), &param, &values, &quantity)?;
            emit(&render_sweep(&rows, format)?, out.as_deref())?;
        }
        Command::Simulate {
            scenario,
            samples,
            seed,
            out,
        } => {
            let loaded = scenario.require()?;
            let seed = resolve_seed(seed, Some(&loaded))?;
            match out {
                Some(p) => cmd_simulate(&loaded, samples, seed, BufWriter::new(File::create(p)?))?,
                None => cmd_simulate(&loaded, samples, seed, BufWriter::new(io::stdout().lock()))?,
            }
        }
        Command::ErfcReport { ell, format, out } => {
            emit(&cmd_erfc_report(ell, format)?, out.as_deref())?;
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
