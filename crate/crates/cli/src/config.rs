//! Scenario files.
//!
//! ```toml
//! [model]
//! preset = "example1"   # or n_x, n_y, A, H, Q, R
//! A = "0.98"            # row-major, whitespace separated
//!
//! [prior]
//! x0_mean = "1"
//! x0_cov = "1"
//!
//! [trigger]
//! kind = "pt"           # et | pt | st
//! M = 2
//! M_max = 10000
//! cost = 0.6            # or cost_table = "costs.txt"
//!
//! [sim]
//! steps = 200
//! runs = 2000
//! seed = 1
//! ```
//!
//! Explicit model entries override the preset. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use predtrig::triggering::DEFAULT_MAX_HORIZON;
use predtrig::{CostSchedule, LtiModel, Matrix, ModelProvider, Prior, TriggerKind};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_RUNS: u64 = 2000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Entries {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Entries {
    fn values(&self, key: &str) -> Result<Vec<f64>, CliError> {
        match self {
            Self::Int(v) => Ok(vec![*v as f64]),
            Self::Float(v) => Ok(vec![*v]),
            Self::Text(s) => s
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| {
                            CliError::Config(format!("{key}: '{t}' is not a finite number"))
                        })
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Option<String>,
    pub n_x: Option<usize>,
    pub n_y: Option<usize>,
    #[serde(rename = "A")]
    pub a: Option<Entries>,
    #[serde(rename = "H")]
    pub h: Option<Entries>,
    #[serde(rename = "Q")]
    pub q: Option<Entries>,
    #[serde(rename = "R")]
    pub r: Option<Entries>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub x0_mean: Option<Entries>,
    pub x0_cov: Option<Entries>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TriggerSection {
    pub kind: Option<String>,
    #[serde(rename = "M")]
    pub horizon: Option<usize>,
    #[serde(rename = "M_max")]
    pub max_horizon: Option<usize>,
    pub cost: Option<f64>,
    pub cost_table: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub steps: Option<usize>,
    pub runs: Option<u64>,
    pub seed: Option<u64>,
}

/// A parsed scenario file before model construction.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub trigger: TriggerSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostSetting {
    Constant(f64),
    TablePath(PathBuf),
}

/// Validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub model: LtiModel,
    pub prior: Prior,
    pub kind: Option<TriggerKind>,
    pub max_horizon: usize,
    pub cost: Option<CostSetting>,
    pub steps: usize,
    pub runs: Option<u64>,
    pub seed: u64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<Scenario, CliError> {
    let raw: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or_else(String::new, |s| {
            format!("line {}: ", line_of(text, s.start))
        });
        CliError::Config(format!("{line}{}", e.message().trim()))
    })?;
    raw.resolve()
}

pub fn load_config(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut scenario = parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(CostSetting::TablePath(p)) = &mut scenario.cost {
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                *p = dir.join(&*p);
            }
        }
    }
    Ok(scenario)
}

pub fn preset(name: &str) -> Result<(LtiModel, Prior), CliError> {
    match name {
        "example1" => Ok((LtiModel::example1(), Prior::example())),
        "example2" => Ok((LtiModel::example2(), Prior::example())),
        other => Err(CliError::Config(format!(
            "unknown preset '{other}' (expected example1 or example2)"
        ))),
    }
}

pub fn parse_kind(name: &str, horizon: Option<usize>) -> Result<TriggerKind, CliError> {
    match name {
        "et" => Ok(TriggerKind::Event),
        "st" => Ok(TriggerKind::SelfTrigger),
        "pt" => match horizon {
            Some(m) if m >= 1 => Ok(TriggerKind::Predictive { horizon: m }),
            Some(_) => Err(CliError::Config("pt needs M >= 1".into())),
            None => Err(CliError::Config("pt needs a horizon M".into())),
        },
        other => Err(CliError::Config(format!(
            "unknown trigger '{other}' (expected et, pt or st)"
        ))),
    }
}

pub fn check_cost(c: f64) -> Result<f64, CliError> {
    if c.is_finite() && c >= 0.0 {
        Ok(c)
    } else {
        Err(CliError::Config(format!(
            "cost must be finite and non-negative, got {c}"
        )))
    }
}

fn matrix(key: &str, e: &Entries, rows: usize, cols: usize) -> Result<Matrix, CliError> {
    let v = e.values(key)?;
    if v.len() != rows * cols {
        return Err(CliError::Config(format!(
            "{key}: expected {rows}x{cols} = {} entries, got {}",
            rows * cols,
            v.len()
        )));
    }
    Matrix::from_row_major(rows, cols, v).map_err(|e| CliError::Config(format!("{key}: {e}")))
}

impl ScenarioConfig {
    fn resolve(self) -> Result<Scenario, CliError> {
        let m = &self.model;
        let base = m.preset.as_deref().map(preset).transpose()?;
        let n_x = m.n_x.or(base.as_ref().map(|(b, _)| b.state_dim()));
        let n_y = m.n_y.or(base.as_ref().map(|(b, _)| b.measurement_dim()));
        let (Some(n_x), Some(n_y)) = (n_x, n_y) else {
            return Err(CliError::Config(
                "model needs a preset or n_x and n_y".into(),
            ));
        };
        if n_x == 0 || n_y == 0 {
            return Err(CliError::Config("n_x and n_y must be at least 1".into()));
        }
        let pick = |key: &str, e: &Option<Entries>, rows, cols, fallback: Option<&Matrix>| match (
            e, fallback,
        ) {
            (Some(e), _) => matrix(&format!("model.{key}"), e, rows, cols),
            (None, Some(f)) if f.shape() == (rows, cols) => Ok(f.clone()),
            _ => Err(CliError::Config(format!("model.{key} is missing"))),
        };
        let b = base.as_ref().map(|(b, _)| b);
        let model = LtiModel::new(
            pick("A", &m.a, n_x, n_x, b.map(|b| b.a()))?,
            pick("H", &m.h, n_y, n_x, b.map(|b| b.h()))?,
            pick("Q", &m.q, n_x, n_x, b.map(|b| b.q().as_matrix()))?,
            pick("R", &m.r, n_y, n_y, b.map(|b| b.r().as_matrix()))?,
        )
        .map_err(|e| CliError::Config(format!("model: {e}")))?;

        let base_prior = base.as_ref().map(|(_, p)| p).filter(|p| p.dim() == n_x);
        let mean = match &self.prior.x0_mean {
            Some(e) => {
                let v = e.values("prior.x0_mean")?;
                if v.len() != n_x {
                    return Err(CliError::Config(format!(
                        "prior.x0_mean: expected {n_x} entries, got {}",
                        v.len()
                    )));
                }
                v
            }
            None => base_prior
                .map(|p| p.mean.clone())
                .ok_or_else(|| CliError::Config("prior.x0_mean is missing".into()))?,
        };
        let cov = pick(
            "x0_cov",
            &self.prior.x0_cov,
            n_x,
            n_x,
            base_prior.map(|p| p.cov.as_matrix()),
        )
        .map_err(|e| match e {
            CliError::Config(s) => CliError::Config(s.replace("model.x0_cov", "prior.x0_cov")),
            other => other,
        })?;
        let prior = Prior::new(mean, cov).map_err(|e| CliError::Config(format!("prior: {e}")))?;

        let t = &self.trigger;
        let kind = t
            .kind
            .as_deref()
            .map(|k| parse_kind(k, t.horizon))
            .transpose()?;
        let cost = match (t.cost, &t.cost_table) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give trigger.cost or trigger.cost_table, not both".into(),
                ))
            }
            (Some(c), None) => Some(CostSetting::Constant(check_cost(c)?)),
            (None, Some(p)) => Some(CostSetting::TablePath(p.clone())),
            (None, None) => None,
        };
        let max_horizon = t.max_horizon.unwrap_or(DEFAULT_MAX_HORIZON);
        if max_horizon == 0 {
            return Err(CliError::Config("trigger.M_max must be at least 1".into()));
        }
        let steps = self.sim.steps.unwrap_or(DEFAULT_STEPS);
        if steps == 0 {
            return Err(CliError::Config("sim.steps must be at least 1".into()));
        }
        if self.sim.runs == Some(0) {
            return Err(CliError::Config("sim.runs must be at least 1".into()));
        }
        Ok(Scenario {
            model,
            prior,
            kind,
            max_horizon,
            cost,
            steps,
            runs: self.sim.runs,
            seed: self.sim.seed.unwrap_or(DEFAULT_SEED),
        })
    }
}

impl Scenario {
    pub fn from_preset(name: &str) -> Result<Self, CliError> {
        let (model, prior) = preset(name)?;
        Ok(Self {
            model,
            prior,
            kind: None,
            max_horizon: DEFAULT_MAX_HORIZON,
            cost: None,
            steps: DEFAULT_STEPS,
            runs: None,
            seed: DEFAULT_SEED,
        })
    }
}

/// Reads a cost table: numbers separated by whitespace or commas, one
/// entry per time step starting at `k = 1`.
pub fn load_cost_table(path: &Path) -> Result<CostSchedule, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let v = tok.parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "{}: line {}: '{tok}' is not a number",
                    path.display(),
                    i + 1
                ))
            })?;
            values.push(check_cost(v)?);
        }
    }
    CostSchedule::table(values).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
