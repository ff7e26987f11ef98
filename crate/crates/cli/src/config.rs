//! Experiment configuration: a TOML (or manifest JSON) file with the keys
//! `experiment`, `seed`, `output_dir` and a flat `[parameters]` table,
//! followed by `key=value` overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Scalar parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    /// Parses an override literal: booleans, integers, floats, else a string.
    pub fn parse(text: &str) -> Self {
        let t = text.trim();
        if let Ok(b) = t.parse::<bool>() {
            return Self::Bool(b);
        }
        if let Ok(i) = t.parse::<i64>() {
            return Self::Int(i);
        }
        if let Ok(f) = t.parse::<f64>() {
            return Self::Float(f);
        }
        Self::Str(t.trim_matches('"').to_string())
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Bool(_) => "boolean",
            Self::Int(_) => "integer",
            Self::Float(_) => "number",
            Self::Str(_) => "string",
        }
    }

    /// Converts to the type of `template`; integers widen to floats and
    /// string parameters take any literal as text.
    fn coerce_like(&self, template: &Value) -> Option<Value> {
        match (template, self) {
            (Value::Float(_), Value::Int(i)) => Some(Value::Float(*i as f64)),
            (Value::Str(_), Value::Int(_) | Value::Float(_) | Value::Bool(_)) => Some(Value::Str(self.to_string())),
            (Value::Float(_), Value::Float(_))
            | (Value::Int(_), Value::Int(_))
            | (Value::Bool(_), Value::Bool(_))
            | (Value::Str(_), Value::Str(_)) => Some(self.clone()),
            _ => None,
        }
    }

    fn from_toml(key: &str, v: &toml::Value) -> Result<Self, CliError> {
        Ok(match v {
            toml::Value::Boolean(b) => Self::Bool(*b),
            toml::Value::Integer(i) => Self::Int(*i),
            toml::Value::Float(f) => Self::Float(*f),
            toml::Value::String(s) => Self::Str(s.clone()),
            _ => return Err(CliError::Validation(format!("parameter `{key}` must be a scalar"))),
        })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bool(b) => write!(f, "{b}"),
            Self::Int(i) => write!(f, "{i}"),
            Self::Float(x) => write!(f, "{x}"),
            Self::Str(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DarkstateVerify,
    LindbladRun,
    TrajectoryRun,
    TebdRun,
    GlauberRun,
    CqedValidate,
}

impl Experiment {
    pub const ALL: [Experiment; 6] =
        [Self::DarkstateVerify, Self::LindbladRun, Self::TrajectoryRun, Self::TebdRun, Self::GlauberRun, Self::CqedValidate];

    pub fn name(self) -> &'static str {
        match self {
            Self::DarkstateVerify => "darkstate-verify",
            Self::LindbladRun => "lindblad-run",
            Self::TrajectoryRun => "trajectory-run",
            Self::TebdRun => "tebd-run",
            Self::GlauberRun => "glauber-run",
            Self::CqedValidate => "cqed-validate",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        Self::ALL.into_iter().find(|e| e.name() == name).ok_or_else(|| {
            let known: Vec<_> = Self::ALL.iter().map(|e| e.name()).collect();
            CliError::Validation(format!("unknown experiment `{name}` (known: {})", known.join(", ")))
        })
    }
}

/// Declared parameter with its default.
#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub key: &'static str,
    pub default: Value,
    pub help: &'static str,
}

impl ParamSpec {
    pub fn new(key: &'static str, default: Value, help: &'static str) -> Self {
        Self { key, default, help }
    }
}

/// Configuration before defaults are applied.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub parameters: BTreeMap<String, Value>,
}

const TOP_KEYS: [&str; 4] = ["experiment", "seed", "output_dir", "parameters"];
/// Keys a manifest carries in addition to the configuration.
const MANIFEST_KEYS: [&str; 2] = ["version", "csv_schema"];

impl RawConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Validation(format!("malformed config: {e}")))?;
        let mut raw = Self::default();
        for (key, v) in &table {
            match key.as_str() {
                "experiment" => raw.experiment = Some(expect_str(key, v.as_str())?),
                "seed" => raw.seed = Some(expect_seed(v.as_integer())?),
                "output_dir" => raw.output_dir = Some(expect_str(key, v.as_str())?.into()),
                "parameters" => {
                    let t = v.as_table().ok_or_else(|| CliError::Validation("`parameters` must be a table".into()))?;
                    for (k, pv) in t {
                        raw.parameters.insert(k.clone(), Value::from_toml(k, pv)?);
                    }
                }
                _ => return Err(unknown_top(key)),
            }
        }
        Ok(raw)
    }

    /// Reads a `manifest.json` written by a previous run.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("malformed config: {e}")))?;
        let mut raw = Self::default();
        for (key, v) in &map {
            match key.as_str() {
                "experiment" => raw.experiment = Some(expect_str(key, v.as_str())?),
                "seed" => raw.seed = Some(expect_seed(v.as_i64())?),
                "output_dir" => raw.output_dir = Some(expect_str(key, v.as_str())?.into()),
                "parameters" => {
                    raw.parameters = serde_json::from_value(v.clone())
                        .map_err(|e| CliError::Validation(format!("`parameters` must hold scalars: {e}")))?;
                }
                k if MANIFEST_KEYS.contains(&k) => {}
                _ => return Err(unknown_top(key)),
            }
        }
        Ok(raw)
    }

    /// Applies one `key=value` override. `seed`, `output_dir` and
    /// `experiment` address the top level, everything else a parameter.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("override `{assignment}` is not of the form key=value")))?;
        let key = key.trim();
        let key = key.strip_prefix("parameters.").unwrap_or(key);
        match key {
            "experiment" => self.experiment = Some(value.trim().to_string()),
            "seed" => {
                self.seed = Some(
                    value
                        .trim()
                        .parse()
                        .map_err(|_| CliError::Validation(format!("seed must be a non-negative integer, got `{value}`")))?,
                )
            }
            "output_dir" => self.output_dir = Some(value.trim().into()),
            "" => return Err(CliError::Validation(format!("override `{assignment}` has an empty key"))),
            _ => {
                self.parameters.insert(key.to_string(), Value::parse(value));
            }
        }
        Ok(())
    }
}

fn unknown_top(key: &str) -> CliError {
    CliError::Validation(format!("unknown key `{key}` (allowed: {})", TOP_KEYS.join(", ")))
}

fn expect_str(key: &str, v: Option<&str>) -> Result<String, CliError> {
    v.map(str::to_string).ok_or_else(|| CliError::Validation(format!("`{key}` must be a string")))
}

fn expect_seed(v: Option<i64>) -> Result<u64, CliError> {
    v.and_then(|i| u64::try_from(i).ok()).ok_or_else(|| CliError::Validation("`seed` must be a non-negative integer".into()))
}

/// Fully resolved configuration, echoed into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub parameters: BTreeMap<String, Value>,
}

pub const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    /// Fills defaults and type-checks every parameter against `specs`.
    pub fn resolve(raw: RawConfig, specs: impl Fn(Experiment) -> Vec<ParamSpec>) -> Result<Self, CliError> {
        let name = raw.experiment.ok_or_else(|| CliError::Validation("missing key `experiment`".into()))?;
        let experiment = Experiment::parse(&name)?;
        let specs = specs(experiment);
        let mut parameters = BTreeMap::new();
        for s in &specs {
            parameters.insert(s.key.to_string(), s.default.clone());
        }
        for (key, v) in raw.parameters {
            let spec = specs
                .iter()
                .find(|s| s.key == key)
                .ok_or_else(|| CliError::Validation(format!("unknown parameter `{key}` for experiment {}", experiment.name())))?;
            let typed = v.coerce_like(&spec.default).ok_or_else(|| {
                CliError::Validation(format!("parameter `{key}` expects a {}, got {} `{v}`", spec.default.kind(), v.kind()))
            })?;
            parameters.insert(key, typed);
        }
        Ok(Self {
            experiment,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out").join(experiment.name())),
            parameters,
        })
    }

    pub fn params(&self) -> Params<'_> {
        Params(&self.parameters)
    }
}

/// Typed read access to resolved parameters.
#[derive(Clone, Copy, Debug)]
pub struct Params<'a>(pub &'a BTreeMap<String, Value>);

impl Params<'_> {
    fn get(&self, key: &str) -> &Value {
        self.0.get(key).unwrap_or_else(|| panic!("parameter `{key}` is not declared"))
    }

    pub fn float(&self, key: &str) -> f64 {
        match self.get(key) {
            Value::Float(x) => *x,
            Value::Int(i) => *i as f64,
            v => panic!("parameter `{key}` is not numeric: {v:?}"),
        }
    }

    pub fn int(&self, key: &str) -> i64 {
        match self.get(key) {
            Value::Int(i) => *i,
            v => panic!("parameter `{key}` is not an integer: {v:?}"),
        }
    }

    /// Non-negative integer parameter.
    pub fn count(&self, key: &str) -> Result<usize, CliError> {
        usize::try_from(self.int(key))
            .map_err(|_| CliError::Validation(format!("parameter `{key}` must be non-negative, got {}", self.int(key))))
    }

    pub fn flag(&self, key: &str) -> bool {
        match self.get(key) {
            Value::Bool(b) => *b,
            v => panic!("parameter `{key}` is not a boolean: {v:?}"),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match self.get(key) {
            Value::Str(s) => s,
            v => panic!("parameter `{key}` is not a string: {v:?}"),
        }
    }
}
