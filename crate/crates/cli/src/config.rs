//! Scenario files: one model per file, TOML by default or JSON.
//!
//! A proportional intensity may name another entry of `[intensities]` as its
//! base (`base = "alpha3"`); names are replaced by the referenced model
//! before the file is checked against the schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use simulstop::ensemble::DEFAULT_ENSEMBLE_SIZE;
use simulstop::{
    BivariateScenario, GumbelScenario, IntensityModel, Interpolation, OuSpec, PathSource,
    ShockSystem, StatePath, SubsetPattern,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bivariate,
    Gumbel,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ConfigFormat {
    #[default]
    Toml,
    Json,
}

impl ConfigFormat {
    /// JSON for `.json` files, TOML otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intensities {
    pub alpha1: IntensityModel,
    pub alpha2: IntensityModel,
    pub alpha3: IntensityModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockEntry {
    pub members: Vec<usize>,
    pub intensity: IntensityModel,
}

fn default_ensemble_size() -> usize {
    DEFAULT_ENSEMBLE_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathsConfig {
    /// One state path read from CSV (columns `time,value`); relative paths
    /// are taken from the scenario file's directory.
    Fixed {
        csv: PathBuf,
        #[serde(default)]
        interpolation: Interpolation,
    },
    Ensemble {
        csv: Vec<PathBuf>,
        #[serde(default)]
        interpolation: Interpolation,
    },
    Ou {
        process: OuSpec,
        #[serde(default = "default_ensemble_size")]
        ensemble_size: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelKind,
    /// Default seed for randomized commands; `--seed` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensities: Option<Intensities>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<SubsetPattern>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shocks: Vec<ShockEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<PathsConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Bivariate(BivariateScenario),
    Gumbel(GumbelScenario),
    System(ShockSystem),
}

impl Scenario {
    pub fn kind(&self) -> ModelKind {
        match self {
            Scenario::Bivariate(_) => ModelKind::Bivariate,
            Scenario::Gumbel(_) => ModelKind::Gumbel,
            Scenario::System(_) => ModelKind::System,
        }
    }
}

/// Parses scenario text into an untyped tree (used by sweeps to edit
/// parameters before the typed parse).
pub fn parse_tree(text: &str, format: ConfigFormat) -> CliResult<Value> {
    match format {
        ConfigFormat::Toml => toml::from_str(text).map_err(|e| CliError::config(e.to_string())),
        ConfigFormat::Json => Ok(serde_json::from_str(text)?),
    }
}

const MAX_REFERENCE_DEPTH: usize = 16;

fn resolve_model(
    model: &mut Value,
    table: &serde_json::Map<String, Value>,
    depth: usize,
) -> CliResult<()> {
    if depth > MAX_REFERENCE_DEPTH {
        return Err(CliError::config("intensity base references form a cycle"));
    }
    let Some(obj) = model.as_object_mut() else {
        return Ok(());
    };
    if let Some(Value::String(name)) = obj.get("base") {
        let mut target = table
            .get(name)
            .cloned()
            .ok_or_else(|| CliError::config(format!("unknown intensity reference {name:?}")))?;
        resolve_model(&mut target, table, depth + 1)?;
        obj.insert("base".into(), target);
    } else if let Some(base) = obj.get_mut("base") {
        resolve_model(base, table, depth + 1)?;
    }
    Ok(())
}

fn resolve_references(tree: &mut Value) -> CliResult<()> {
    let Some(table) = tree.get("intensities").and_then(Value::as_object).cloned() else {
        return Ok(());
    };
    if let Some(Value::Object(models)) = tree.get_mut("intensities") {
        for model in models.values_mut() {
            resolve_model(model, &table, 0)?;
        }
    }
    if let Some(Value::Array(shocks)) = tree.get_mut("shocks") {
        for shock in shocks {
            if let Some(model) = shock.get_mut("intensity") {
                resolve_model(model, &table, 0)?;
            }
        }
    }
    Ok(())
}

impl ScenarioFile {
    pub fn from_tree(mut tree: Value) -> CliResult<Self> {
        resolve_references(&mut tree)?;
        serde_json::from_value(tree).map_err(|e| CliError::config(format!("invalid scenario: {e}")))
    }

    pub fn parse(text: &str, format: ConfigFormat) -> CliResult<Self> {
        Self::from_tree(parse_tree(text, format)?)
    }

    pub fn to_text(&self, format: ConfigFormat) -> CliResult<String> {
        match format {
            ConfigFormat::Toml => {
                toml::to_string(self).map_err(|e| CliError::config(e.to_string()))
            }
            ConfigFormat::Json => Ok(serde_json::to_string_pretty(self)?),
        }
    }

    fn reject(&self, field: &str, present: bool) -> CliResult<()> {
        if present {
            Err(CliError::config(format!(
                "`{field}` does not apply to a {:?} scenario",
                self.model
            )))
        } else {
            Ok(())
        }
    }

    fn path_source(&self, base_dir: &Path) -> CliResult<PathSource> {
        Ok(match &self.paths {
            None => PathSource::Deterministic,
            Some(PathsConfig::Fixed { csv, interpolation }) => {
                PathSource::Fixed(StatePath::read_csv(base_dir.join(csv), *interpolation)?)
            }
            Some(PathsConfig::Ensemble { csv, interpolation }) => PathSource::Ensemble(
                csv.iter()
                    .map(|p| StatePath::read_csv(base_dir.join(p), *interpolation))
                    .collect::<simulstop::Result<_>>()?,
            ),
            Some(PathsConfig::Ou {
                process,
                ensemble_size,
                seed,
            }) => PathSource::Ou {
                spec: *process,
                ensemble_size: *ensemble_size,
                seed: *seed,
            },
        })
    }

    /// Builds and validates the scenario; CSV paths are read relative to
    /// `base_dir`.
    pub fn build(&self, base_dir: &Path) -> CliResult<Scenario> {
        let paths = self.path_source(base_dir)?;
        let scenario = match self.model {
            ModelKind::Bivariate | ModelKind::Gumbel => {
                self.reject("n", self.n.is_some())?;
                self.reject("pattern", self.pattern.is_some())?;
                self.reject("shocks", !self.shocks.is_empty())?;
                let m = self
                    .intensities
                    .clone()
                    .ok_or_else(|| CliError::config("missing [intensities] table"))?;
                let base = BivariateScenario::new(m.alpha1, m.alpha2, m.alpha3).with_paths(paths);
                if self.model == ModelKind::Bivariate {
                    self.reject("delta", self.delta.is_some())?;
                    base.validate()?;
                    Scenario::Bivariate(base)
                } else {
                    let delta = self
                        .delta
                        .ok_or_else(|| CliError::config("a gumbel scenario needs `delta`"))?;
                    let gs = GumbelScenario::new(base, delta)?;
                    gs.validate()?;
                    Scenario::Gumbel(gs)
                }
            }
            ModelKind::System => {
                self.reject("intensities", self.intensities.is_some())?;
                self.reject("delta", self.delta.is_some())?;
                let n = self
                    .n
                    .ok_or_else(|| CliError::config("a system scenario needs `n`"))?;
                let sys = match (&self.pattern, self.shocks.is_empty()) {
                    (Some(p), true) => ShockSystem::from_pattern(n, *p)?,
                    (None, false) => {
                        let mut sys = ShockSystem::new(n)?;
                        for s in &self.shocks {
                            sys = sys.with_shock(&s.members, s.intensity.clone())?;
                        }
                        sys
                    }
                    _ => {
                        return Err(CliError::config(
                            "a system scenario needs exactly one of `pattern` or `shocks`",
                        ))
                    }
                };
                let sys = sys.with_paths(paths);
                sys.validate()?;
                Scenario::System(sys)
            }
        };
        Ok(scenario)
    }
}

/// A scenario file as loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub tree: Value,
    pub file: ScenarioFile,
    pub scenario: Scenario,
    pub base_dir: PathBuf,
}

impl LoadedScenario {
    pub fn from_tree(tree: Value, base_dir: PathBuf) -> CliResult<Self> {
        let file = ScenarioFile::from_tree(tree.clone())?;
        let scenario = file.build(&base_dir)?;
        Ok(LoadedScenario {
            tree,
            file,
            scenario,
            base_dir,
        })
    }
}

pub fn load(path: &Path, format: Option<ConfigFormat>) -> CliResult<LoadedScenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let format = format.unwrap_or_else(|| ConfigFormat::from_path(path));
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    LoadedScenario::from_tree(parse_tree(&text, format)?, base_dir)
}
