use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use corrq::coupling::CouplingKind;
use corrq::des::InitSpec;
use corrq::{CorrelationMode, ModelParams};

use crate::CliError;

/// Reads a TOML (or, by `.json` extension, JSON) file into a JSON object.
pub fn read_table(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value: Value = if is_json {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    match value {
        Value::Object(m) => Ok(m),
        _ => Err(CliError::Config(format!(
            "{}: top level must be a table",
            path.display()
        ))),
    }
}

/// Deserializes `table` into `T`, naming the offending field on failure.
pub fn decode<T: DeserializeOwned>(table: Map<String, Value>, what: &str) -> Result<T, CliError> {
    serde_json::from_value(Value::Object(table))
        .map_err(|e| CliError::Config(format!("{what} config: {e}")))
}

/// Arrival process and patience of one system. Exactly one of `beta` and
/// `lambda` fixes the arrival rate.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    pub theta: f64,
    #[serde(default = "perfect")]
    pub mode: CorrelationMode,
}

fn perfect() -> CorrelationMode {
    CorrelationMode::Perfect
}

impl SystemSpec {
    pub fn params(&self) -> Result<ModelParams, CliError> {
        let p = match (self.beta, self.lambda) {
            (Some(b), None) => ModelParams::new(self.n, b, self.theta, self.mode),
            (None, Some(l)) => ModelParams::with_arrival_rate(self.n, l, self.theta, self.mode),
            (None, None) => {
                return Err(CliError::Config(
                    "missing field `beta` (or `lambda`)".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give only one of `beta` and `lambda`".into(),
                ))
            }
        };
        Ok(p?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    pub theta: f64,
    #[serde(default = "perfect")]
    pub mode: CorrelationMode,
    pub horizon: f64,
    #[serde(default = "empty_init")]
    pub init: InitSpec,
    /// Snapshot spacing; every epoch is recorded when absent.
    #[serde(default)]
    pub record_step: Option<f64>,
    #[serde(default)]
    pub replication: u64,
    #[serde(default)]
    pub audit: bool,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn empty_init() -> InitSpec {
    InitSpec::Empty
}

impl SimulateConfig {
    pub fn system(&self) -> SystemSpec {
        SystemSpec {
            n: self.n,
            beta: self.beta,
            lambda: self.lambda,
            theta: self.theta,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleConfig {
    pub kind: CouplingKind,
    pub seed: u64,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub replication: u64,
    /// The single system of `pc_infserver` and `pc_erlangA_stat`.
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub system1: Option<SystemSpec>,
    #[serde(default)]
    pub system2: Option<SystemSpec>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_factor: f64,
    #[serde(default = "one")]
    pub spacing_factor: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_samples() -> usize {
    2000
}

fn default_burn_in() -> f64 {
    corrq::des::DEFAULT_BURN_IN_FACTOR
}

fn one() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.01
}

impl CoupleConfig {
    pub fn horizon(&self) -> Result<f64, CliError> {
        self.horizon
            .ok_or_else(|| CliError::Config("missing field `horizon`".into()))
    }

    pub fn system(&self, field: &str) -> Result<&SystemSpec, CliError> {
        let s = match field {
            "system1" => &self.system1,
            "system2" => &self.system2,
            _ => &self.system,
        };
        s.as_ref()
            .ok_or_else(|| CliError::Config(format!("missing table `{field}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(json: &str) -> Map<String, Value> {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn missing_theta_is_named() {
        let err = decode::<SimulateConfig>(
            table(r#"{"n":1,"beta":0,"horizon":10,"seed":1}"#),
            "simulate",
        )
        .unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");
    }

    #[test]
    fn system_needs_one_rate() {
        let s: SystemSpec = serde_json::from_str(r#"{"n":4,"theta":1}"#).unwrap();
        assert!(s.params().unwrap_err().to_string().contains("beta"));
        let s: SystemSpec = serde_json::from_str(r#"{"n":4,"lambda":3.5,"theta":1}"#).unwrap();
        assert_eq!(s.params().unwrap().lambda_n, 3.5);
    }

    #[test]
    fn couple_kind_names() {
        let c: CoupleConfig = decode(
            table(r#"{"kind":"pc_erlangA_stat","seed":3,"system":{"n":4,"beta":0,"theta":1}}"#),
            "couple",
        )
        .unwrap();
        assert_eq!(c.kind, CouplingKind::PcErlangAStat);
        assert!(c.horizon().is_err());
    }
}
