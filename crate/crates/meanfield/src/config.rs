//! Resolved run configuration, model lookup and action-function files.

use std::collections::BTreeMap;
use std::path::Path;

use meanfield_core::action::ActionFunction;
use meanfield_core::model::{ModelDef, ModelSpec};
use meanfield_core::models::{broker_model, pricing_model, virus_model, BrokerParams, VirusParams};
use meanfield_core::{ActionValue, OccupancyMeasure};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_model_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything that determines a run's output, minus output paths and the
/// worker count.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub set: BTreeMap<String, f64>,
    pub seed: u64,
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// `open-loop`, `feedback` or `constant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<usize>,
    /// Contents of the action-function file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<AlphaRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub t_start: f64,
    pub t_end: f64,
    pub action: Vec<f64>,
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A model together with the defaults its source implies.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub model: ModelSpec,
    pub horizon: Option<f64>,
    pub initial: Vec<f64>,
}

pub const BUILTINS: [&str; 3] = ["pricing", "virus", "broker"];

/// `source` is a file path or `builtin:NAME`; `set` overrides declared parameters.
pub fn resolve_model(source: &str, set: &BTreeMap<String, f64>) -> Result<ResolvedModel> {
    let (model, horizon, initial) = match source.strip_prefix("builtin:") {
        Some("pricing") => (pricing_model(), Some(1.0), vec![1.0, 0.0]),
        Some("virus") => {
            let p = VirusParams::default();
            (virus_model(&p)?, Some(p.horizon), p.initial.to_vec())
        }
        Some("broker") => {
            let p = BrokerParams::default();
            (broker_model(&p)?, Some(10.0), p.initial())
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown built-in model `{other}` (expected one of {})",
                BUILTINS.join(", ")
            )))
        }
        None => {
            let model = read_model_file(Path::new(source))?;
            let mut initial = vec![0.0; model.num_states()];
            initial[0] = 1.0;
            (model, None, initial)
        }
    };
    Ok(ResolvedModel {
        model: override_params(&model, set)?,
        horizon,
        initial,
    })
}

pub fn override_params(model: &ModelSpec, set: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    if set.is_empty() {
        return Ok(model.clone());
    }
    let mut def: ModelDef = model.def().clone();
    for (k, v) in set {
        match def.params.get_mut(k) {
            Some(slot) => *slot = *v,
            None => {
                let known: Vec<&str> = def.params.keys().map(String::as_str).collect();
                return Err(Error::Config(format!(
                    "model has no parameter `{k}` (known: {})",
                    known.join(", ")
                )));
            }
        }
    }
    Ok(ModelSpec::new(def)?)
}

/// `key=value`.
pub fn parse_assignment(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

pub fn measure(weights: &[f64], states: usize) -> Result<OccupancyMeasure> {
    if weights.len() != states {
        return Err(Error::Config(format!(
            "initial measure has {} entries, model has {states} states",
            weights.len()
        )));
    }
    Ok(OccupancyMeasure::new(weights.to_vec())?)
}

/// Rows of `t_start,t_end,action_0[,action_1..]`; `#` lines and a header are skipped.
pub fn parse_alpha_csv(text: &str) -> Result<Vec<AlphaRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line()) as usize;
        let fields: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match fields {
            Ok(f) if f.len() >= 3 => rows.push(AlphaRow {
                t_start: f[0],
                t_end: f[1],
                action: f[2..].to_vec(),
            }),
            Err(_) if rows.is_empty() && rec.get(0).is_some_and(|c| c.starts_with("t_start")) => {}
            _ => {
                return Err(Error::Parse {
                    line,
                    column: 1,
                    message: "expected t_start,t_end,action_0[,action_1..]".into(),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Config("action-function file has no pieces".into()));
    }
    Ok(rows)
}

pub fn read_alpha_file(path: &Path) -> Result<Vec<AlphaRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_alpha_csv(&text)
}

pub fn alpha_function(rows: &[AlphaRow]) -> Result<ActionFunction> {
    let mut breakpoints = vec![rows[0].t_start];
    for w in rows.windows(2) {
        if (w[0].t_end - w[1].t_start).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "pieces must be contiguous: one ends at {}, the next starts at {}",
                w[0].t_end, w[1].t_start
            )));
        }
    }
    breakpoints.extend(rows.iter().map(|r| r.t_end));
    let values = rows.iter().map(|r| ActionValue(r.action.clone())).collect();
    Ok(ActionFunction::piecewise_constant(breakpoints, values)?)
}

pub fn alpha_rows(alpha: &ActionFunction) -> Result<Vec<AlphaRow>> {
    let bps = alpha.breakpoints();
    alpha
        .pieces()
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if !p.is_constant() {
                return Err(Error::Config("only piecewise-constant action functions can be written".into()));
            }
            Ok(AlphaRow {
                t_start: bps[k],
                t_end: bps[k + 1],
                action: p.start.0.clone(),
            })
        })
        .collect()
}
