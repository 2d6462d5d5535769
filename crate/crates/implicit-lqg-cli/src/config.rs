//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "system": { "preset": "fully-actuated-vi-a" },
//!   "horizon": 30,
//!   "policy": { "name": "im-comm-opt", "theta": 0.88, "epsilon": 0.001, "budget": 5000 },
//!   "policies": ["ex-comm", "leader-only", "im-comm-heuristic", "im-comm-opt"],
//!   "runs": 50,
//!   "seed": 2024,
//!   "target": [-1.0, 2.0, 2.0, -2.0],
//!   "out": "out"
//! }
//! ```
//!
//! `system` is either `{"preset": NAME}` or an inline model with the keys
//! `a, b1, b2, w, f, f_n, g1, g2, sigma0, x0`, each a row-major nested array.
//! `target` is a vector or the string `"sampled"`; when omitted it defaults to
//! the preset's comparison target, or to `"sampled"` for inline models.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use implicit_lqg::matcore::{Mat, Vector};
use implicit_lqg::model::{self, SystemModel, DEFAULT_HORIZON};
use implicit_lqg::sim::Target;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyName>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_runs() -> usize {
    50
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_policies() -> Vec<PolicyName> {
    PolicyName::ALL.to_vec()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemSpec::Preset {
                preset: model::PRESET_NAMES[0].to_string(),
            },
            horizon: None,
            policy: PolicySpec::default(),
            policies: default_policies(),
            runs: default_runs(),
            seed: 0,
            target: None,
            out: default_out(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset { preset: String },
    Inline(Box<ModelSpec>),
}

impl<'de> Deserialize<'de> for SystemSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;

        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Named {
            preset: String,
        }

        let value = serde_json::Value::deserialize(d)?;
        if value.get("preset").is_some() {
            let named = Named::deserialize(value).map_err(D::Error::custom)?;
            Ok(Self::Preset { preset: named.preset })
        } else {
            ModelSpec::deserialize(value)
                .map(|m| Self::Inline(Box::new(m)))
                .map_err(|e| D::Error::custom(format!("inline system: {e}")))
        }
    }
}

/// Matrices as row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub a: Vec<Vec<f64>>,
    pub b1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub f_n: Vec<Vec<f64>>,
    pub g1: Vec<Vec<f64>>,
    pub g2: Vec<Vec<f64>>,
    pub sigma0: Vec<Vec<f64>>,
    pub x0: Vec<Vec<f64>>,
}

impl ModelSpec {
    pub fn from_model(m: &SystemModel) -> Self {
        let rows = |m: &Mat| m.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self {
            a: rows(&m.a),
            b1: rows(&m.b1),
            b2: rows(&m.b2),
            w: rows(&m.w),
            f: rows(&m.f),
            f_n: rows(&m.f_n),
            g1: rows(&m.g1),
            g2: rows(&m.g2),
            sigma0: rows(&m.sigma0),
            x0: rows(&m.x0),
        }
    }

    fn to_model(&self, n: usize) -> Result<SystemModel, CliError> {
        Ok(SystemModel {
            a: matrix("a", &self.a)?,
            b1: matrix("b1", &self.b1)?,
            b2: matrix("b2", &self.b2)?,
            w: matrix("w", &self.w)?,
            f: matrix("f", &self.f)?,
            f_n: matrix("f_n", &self.f_n)?,
            g1: matrix("g1", &self.g1)?,
            g2: matrix("g2", &self.g2)?,
            sigma0: matrix("sigma0", &self.sigma0)?,
            x0: matrix("x0", &self.x0)?,
            n,
        })
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<Mat, CliError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(CliError::validation(format!("system.{field}"), "matrix is empty"));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(CliError::validation(
            format!("system.{field}[{i}]"),
            format!("row has {} entries, expected {cols}", r.len()),
        ));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(CliError::validation(format!("system.{field}"), "entries must be finite"));
    }
    Ok(Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    ExComm,
    LeaderOnly,
    NoComm,
    ImCommHeuristic,
    ImCommOpt,
}

impl PolicyName {
    pub const ALL: [PolicyName; 5] = [
        Self::ExComm,
        Self::LeaderOnly,
        Self::NoComm,
        Self::ImCommHeuristic,
        Self::ImCommOpt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ExComm => "ex-comm",
            Self::LeaderOnly => "leader-only",
            Self::NoComm => "no-comm",
            Self::ImCommHeuristic => "im-comm-heuristic",
            Self::ImCommOpt => "im-comm-opt",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|p| p.as_str()).collect();
            format!("unknown policy {s:?}, expected one of {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub name: PolicyName,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_theta() -> f64 {
    0.88
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_budget() -> usize {
    5000
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self {
            name: PolicyName::ImCommOpt,
            theta: default_theta(),
            epsilon: default_epsilon(),
            budget: default_budget(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampled {
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Sampled(Sampled),
    Fixed(Vec<f64>),
}

impl FromStr for TargetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "sampled" {
            return Ok(Self::Sampled(Sampled::Sampled));
        }
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad target entry {v:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Self::Fixed)
    }
}

/// A validated configuration with the model materialized.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: SystemModel,
    pub target: Target,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Check every field and build the model.
    pub fn resolve(&self) -> Result<Experiment, CliError> {
        if self.runs == 0 {
            return Err(CliError::validation("runs", "must be at least 1"));
        }
        if self.horizon == Some(0) {
            return Err(CliError::validation("horizon", "must be at least 1"));
        }
        let p = &self.policy;
        if !(p.theta > 0.0 && p.theta <= 1.0) {
            return Err(CliError::validation("policy.theta", format!("must lie in (0, 1], got {}", p.theta)));
        }
        if !(p.epsilon > 0.0 && p.epsilon < 1.0) {
            return Err(CliError::validation(
                "policy.epsilon",
                format!("must lie in (0, 1), got {}", p.epsilon),
            ));
        }
        if p.budget == 0 {
            return Err(CliError::validation("policy.budget", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(CliError::validation("policies", "list is empty"));
        }
        let n = self.horizon.unwrap_or(DEFAULT_HORIZON);
        let (model, default_target) = match &self.system {
            SystemSpec::Preset { preset } => {
                let m = model::preset(preset).ok_or_else(|| {
                    CliError::validation(
                        "system.preset",
                        format!("unknown preset {preset:?}, expected one of {}", model::PRESET_NAMES.join(", ")),
                    )
                })?;
                (m.with_horizon(n), model::preset_target(preset).map(Target::Fixed))
            }
            SystemSpec::Inline(spec) => (spec.to_model(n)?, None),
        };
        model
            .validate()
            .map_err(|e| CliError::validation(format!("system.{}", e.field), e.reason))?;
        let target = match &self.target {
            Some(TargetSpec::Sampled(_)) => Target::Sampled,
            Some(TargetSpec::Fixed(v)) => {
                if v.len() != model.d0() {
                    return Err(CliError::validation(
                        "target",
                        format!("has {} entries, the state has {}", v.len(), model.d0()),
                    ));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(CliError::validation("target", "entries must be finite"));
                }
                Target::Fixed(Vector::from_column_slice(v))
            }
            None => default_target.unwrap_or(Target::Sampled),
        };
        Ok(Experiment {
            config: self.clone(),
            model,
            target,
        })
    }
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)?.resolve()
}
