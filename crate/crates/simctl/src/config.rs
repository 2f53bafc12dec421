//! Experiment configuration files (TOML).
//!
//! ```toml
//! schema_id = "simctl/1"
//! mode = "ps_perfect_sample"
//! replications = 1000
//! base_seed = 42
//! max_lookback = 10000
//!
//! [input]
//! model = "iid"
//! xi = { dist = "exp", mean = 3.0 }
//! sigma = { dist = "exp", mean = 1.0 }
//!
//! [rate]
//! kind = "half_interference"
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use psq_core::input::{Dist, InputModel, Mark, StateMarks};
use psq_core::rates::{RateFormula, RateFunction, RateKind, RateTable, TableExtension};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_ID: &str = "simctl/1";

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ForwardSim,
    GginfStationary,
    PsPerfectSample,
    StabilitySweep,
    InvariantSuite,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ForwardSim => "forward_sim",
            Self::GginfStationary => "gginf_stationary",
            Self::PsPerfectSample => "ps_perfect_sample",
            Self::StabilitySweep => "stability_sweep",
            Self::InvariantSuite => "invariant_suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Iid { xi: Dist, sigma: Dist },
    Deterministic { xi: f64, sigma: f64 },
    /// `[xi, sigma]` pairs repeated forever; index 0 gets the first one.
    Periodic { marks: Vec<[f64; 2]> },
    MarkovModulated { transition: Vec<Vec<f64>>, states: Vec<StateMarks> },
}

impl InputSpec {
    pub fn build(&self) -> Result<InputModel, ConfigError> {
        let model = match self {
            Self::Iid { xi, sigma } => InputModel::iid(*xi, *sigma),
            Self::Deterministic { xi, sigma } => InputModel::deterministic(*xi, *sigma),
            Self::Periodic { marks } => {
                InputModel::periodic(marks.iter().map(|&[xi, sigma]| Mark { xi, sigma }).collect())
            }
            Self::MarkovModulated { transition, states } => {
                InputModel::markov_modulated(transition.clone(), states.clone())
            }
        };
        model.map_err(|e| ConfigError(format!("[input]: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    PureDelay {},
    ClassicalPs {},
    HalfInterference {},
    /// The degradation table `{1: 1, 2: 0.495, 3: 0.3, 100: 0.008}`.
    NominalTable {
        #[serde(default)]
        extension: TableExtension,
    },
    CustomTable {
        /// Keys are customer counts, values the per-customer rate.
        table: BTreeMap<String, f64>,
        floor: f64,
        #[serde(default = "yes")]
        single_server: bool,
        #[serde(default)]
        extension: TableExtension,
    },
    CustomFormula {
        formula: FormulaName,
        throughput: Option<f64>,
        scale: Option<f64>,
        exponent: Option<f64>,
        floor: Option<f64>,
        single_server: Option<bool>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaName {
    /// `r(n) = throughput / n`.
    ConstantThroughput,
    /// `r(n) = scale * n^(-exponent)`.
    PowerLaw,
}

impl RateSpec {
    pub fn build(&self) -> Result<RateFunction, ConfigError> {
        let err = |e: psq_core::rates::RateError| ConfigError(format!("[rate]: {e}"));
        Ok(match self {
            Self::PureDelay {} => RateFunction::pure_delay(),
            Self::ClassicalPs {} => RateFunction::classical_ps(),
            Self::HalfInterference {} => RateFunction::half_interference(),
            Self::NominalTable { extension } => {
                let base = RateFunction::nominal_table();
                let RateKind::Table(t) = base.kind() else { unreachable!("nominal table is tabulated") };
                let table = RateTable::new(t.points().to_vec(), *extension).map_err(err)?;
                RateFunction::table(table, base.floor(), true).map_err(err)?
            }
            Self::CustomTable { table, floor, single_server, extension } => {
                let mut points = Vec::with_capacity(table.len());
                for (key, &rate) in table {
                    let n: u64 = key.trim().parse().map_err(|_| {
                        ConfigError(format!("[rate.table]: key {key:?} is not a positive customer count"))
                    })?;
                    if n == 0 {
                        return invalid("[rate.table]: customer counts start at 1");
                    }
                    points.push((n, rate));
                }
                let t = RateTable::new(points, *extension).map_err(err)?;
                RateFunction::table(t, *floor, *single_server).map_err(err)?
            }
            Self::CustomFormula { formula, throughput, scale, exponent, floor, single_server } => {
                let need = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| ConfigError(format!("[rate]: formula {formula:?} needs `{name}`")))
                };
                let (f, default_floor, default_single) = match formula {
                    FormulaName::ConstantThroughput => {
                        let k = need(*throughput, "throughput")?;
                        (RateFormula::ConstantThroughput { throughput: k }, k, k <= 1.0)
                    }
                    FormulaName::PowerLaw => {
                        let f = RateFormula::PowerLaw { scale: need(*scale, "scale")?, exponent: need(*exponent, "exponent")? };
                        (f, need(*floor, "floor")?, false)
                    }
                };
                RateFunction::formula(f, floor.unwrap_or(default_floor), single_server.unwrap_or(default_single))
                    .map_err(err)?
            }
        })
    }
}

/// Either an explicit list or `"start:stop:step"` (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoGrid {
    List(Vec<f64>),
    Range(String),
}

impl RhoGrid {
    pub fn values(&self) -> Result<Vec<f64>, ConfigError> {
        let values = match self {
            Self::List(v) => v.clone(),
            Self::Range(s) => parse_range(s)?,
        };
        if values.is_empty() {
            return invalid("[sweep]: the rho grid is empty");
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return invalid(format!("[sweep]: rho values must be positive, got {bad}"));
        }
        Ok(values)
    }
}

pub fn parse_range(s: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    let (start, stop, step) = match nums.as_deref() {
        Ok([a, b, c]) => (*a, *b, *c),
        _ => return invalid(format!("rho range {s:?} must look like start:stop:step, e.g. 0.1:1.5:0.1")),
    };
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return invalid(format!("rho range {s:?} needs step > 0 and stop >= start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return invalid(format!("rho range {s:?} has {count} points"));
    }
    Ok((0..count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub rho: RhoGrid,
    /// Marks used by the stability verdict at each grid point.
    #[serde(default = "default_stability_samples")]
    pub stability_samples: u64,
}

fn default_stability_samples() -> u64 {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    #[serde(default = "default_cases")]
    pub cases: u64,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default = "default_steps")]
    pub steps: u64,
}

fn default_cases() -> u64 {
    10_000
}

fn default_replications() -> u64 {
    1_000
}

fn default_steps() -> u64 {
    10_000
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self { cases: default_cases(), replications: default_replications(), steps: default_steps() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_id: String,
    pub mode: Mode,
    pub input: Option<InputSpec>,
    pub rate: Option<RateSpec>,
    #[serde(default = "one")]
    pub replications: u64,
    #[serde(default)]
    pub base_seed: u64,
    /// Forward steps for `forward_sim`.
    #[serde(default = "default_steps")]
    pub horizon: u64,
    #[serde(default = "default_lookback")]
    pub max_lookback: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub strict: bool,
    /// Also write the per-step path of replication 0 (`forward_sim`).
    #[serde(default)]
    pub trace: bool,
    pub sweep: Option<SweepSpec>,
    pub suite: Option<SuiteSpec>,
}

fn one() -> u64 {
    1
}

fn default_lookback() -> u64 {
    10_000
}

fn default_output() -> PathBuf {
    PathBuf::from("simctl-out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_id != SCHEMA_ID {
            return invalid(format!("schema_id {:?} is not supported; expected {SCHEMA_ID:?}", self.schema_id));
        }
        if self.replications < 1 {
            return invalid("replications must be at least 1");
        }
        if self.horizon < 1 {
            return invalid("horizon must be at least 1");
        }
        if self.max_lookback < 1 {
            return invalid("max_lookback must be at least 1");
        }
        if self.mode != Mode::InvariantSuite {
            if self.input.is_none() {
                return invalid(format!("mode {} needs an [input] section", self.mode.as_str()));
            }
            self.input_model()?;
        }
        if matches!(self.mode, Mode::ForwardSim | Mode::PsPerfectSample | Mode::StabilitySweep) || self.rate.is_some()
        {
            if self.rate.is_none() {
                return invalid(format!("mode {} needs a [rate] section", self.mode.as_str()));
            }
            self.rate_function()?;
        }
        if self.mode == Mode::StabilitySweep {
            match &self.sweep {
                None => return invalid("mode stability_sweep needs a [sweep] section with `rho`"),
                Some(s) => {
                    s.rho.values()?;
                    if s.stability_samples < 1 {
                        return invalid("[sweep]: stability_samples must be at least 1");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn input_model(&self) -> Result<InputModel, ConfigError> {
        match &self.input {
            Some(spec) => spec.build(),
            None => invalid("missing [input] section"),
        }
    }

    pub fn rate_function(&self) -> Result<RateFunction, ConfigError> {
        match &self.rate {
            Some(spec) => spec.build(),
            None => invalid("missing [rate] section"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_id = "simctl/1"
mode = "ps_perfect_sample"
replications = 10

[input]
model = "iid"
xi = { dist = "exp", mean = 3.0 }
sigma = { dist = "exp", mean = 1.0 }

[rate]
kind = "half_interference"
"#;

    #[test]
    fn parses_a_full_config() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.mode, Mode::PsPerfectSample);
        assert_eq!(cfg.replications, 10);
        assert_eq!(cfg.max_lookback, 10_000);
        assert_eq!(cfg.rate_function().unwrap().floor(), 0.5);
        assert!((cfg.input_model().unwrap().mean_xi() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_values_with_a_message() {
        let bad = BASE.replace("replications = 10", "replications = 0");
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().0.contains("replications"));
        let bad = BASE.replace("simctl/1", "simctl/0");
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().0.contains("schema_id"));
        let bad = BASE.replace("mean = 3.0", "mean = -3.0");
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().0.contains("[input]"));
        let bad = BASE.replace("half_interference", "quarter");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = BASE.replace("ps_perfect_sample", "stability_sweep");
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().0.contains("[sweep]"));
        let bad = format!("unknown_key = 1\n{BASE}");
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().0.contains("unknown_key"));
        let bad = format!("{BASE}\nfloor = 1\n");
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().0.contains("floor"));
    }

    #[test]
    fn custom_table_and_formula() {
        let text = BASE.replace(
            "kind = \"half_interference\"",
            "kind = \"custom_table\"\nfloor = 0.6\nextension = \"hold_throughput\"\ntable = { \"1\" = 1.0, \"3\" = 0.2 }",
        );
        let r = ExperimentConfig::from_toml(&text).unwrap().rate_function().unwrap();
        assert!((r.rate(2) - 0.4).abs() < 1e-12);
        let text = BASE.replace(
            "kind = \"half_interference\"",
            "kind = \"custom_formula\"\nformula = \"constant_throughput\"\nthroughput = 0.7",
        );
        let r = ExperimentConfig::from_toml(&text).unwrap().rate_function().unwrap();
        assert_eq!(r.floor(), 0.7);
        let text = BASE.replace("kind = \"half_interference\"", "kind = \"custom_formula\"\nformula = \"power_law\"");
        assert!(ExperimentConfig::from_toml(&text).unwrap_err().0.contains("scale"));
    }

    #[test]
    fn other_input_models() {
        let det = BASE.replace(
            "model = \"iid\"\nxi = { dist = \"exp\", mean = 3.0 }\nsigma = { dist = \"exp\", mean = 1.0 }",
            "model = \"deterministic\"\nxi = 1.0\nsigma = 2.5",
        );
        assert!(ExperimentConfig::from_toml(&det).unwrap().input_model().is_ok());
        let markov = BASE.replace(
            "model = \"iid\"\nxi = { dist = \"exp\", mean = 3.0 }\nsigma = { dist = \"exp\", mean = 1.0 }",
            "model = \"markov_modulated\"\ntransition = [[0.9, 0.1], [0.1, 0.9]]\n\
             states = [{ xi = { dist = \"exp\", mean = 1.0 }, sigma = { dist = \"deterministic\", value = 0.5 } },\n\
                       { xi = { dist = \"uniform\", a = 2.0, b = 4.0 }, sigma = { dist = \"pareto\", scale = 0.5, shape = 2.5 } }]",
        );
        let model = ExperimentConfig::from_toml(&markov).unwrap().input_model().unwrap();
        assert!((model.mean_xi() - 2.0).abs() < 1e-12);
        let periodic = BASE.replace(
            "model = \"iid\"\nxi = { dist = \"exp\", mean = 3.0 }\nsigma = { dist = \"exp\", mean = 1.0 }",
            "model = \"periodic\"\nmarks = [[1.1, 2.0], [1.1, 0.1]]",
        );
        assert!(ExperimentConfig::from_toml(&periodic).is_ok());
    }

    #[test]
    fn rho_ranges() {
        assert_eq!(parse_range("0.3:1.5:0.3").unwrap(), vec![0.3, 0.6, 0.9, 1.2, 1.5]);
        assert_eq!(parse_range("0.1:1.5:0.1").unwrap().len(), 15);
        assert!(parse_range("1:0:0.1").is_err());
        assert!(parse_range("0.1-1.5").is_err());
    }
}
