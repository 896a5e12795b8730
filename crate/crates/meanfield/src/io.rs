//! JSON model files.
//!
//! ```json
//! {
//!   "states": ["U", "S"],
//!   "actions": { "type": "finite", "values": [0, 1] },
//!   "params": {},
//!   "rates": [{ "from": "U", "to": "S", "expr": "1 - a" }],
//!   "reward": "m[S] * a",
//!   "rate_cap": 1
//! }
//! ```
//!
//! Box actions use `"bounds": [[lo, hi], ..], "steps": [n, ..]`; simplex
//! actions use `"dim": C, "steps": n`.

use std::collections::BTreeMap;
use std::path::Path;

use meanfield_core::action::{ActionDomain, ActionSpace};
use meanfield_core::model::{ModelDef, ModelSpec};
use meanfield_core::{ActionValue, Expr};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    actions: ActionsFile,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default)]
    rates: Vec<RateFile>,
    reward: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terminal_reward: Option<String>,
    rate_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ActionsFile {
    Finite { values: Vec<ActionEntry> },
    Box { bounds: Vec<[f64; 2]>, steps: Vec<usize> },
    Simplex { dim: usize, steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ActionEntry {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateFile {
    from: String,
    to: String,
    expr: String,
}

/// Line and column (1-based) of byte `offset` in `text`.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parse an expression embedded in the document, mapping syntax errors to
/// document coordinates when the literal can be found verbatim.
fn parse_expr(text: &str, field: &str, src: &str) -> Result<Expr> {
    Expr::parse(src).map_err(|e| match e {
        meanfield_core::Error::Syntax { line, column, message } => {
            let quoted = serde_json::to_string(src).unwrap_or_default();
            match text.find(&quoted) {
                Some(at) if line == 1 => {
                    let (l, c) = position(text, at + 1);
                    Error::Parse {
                        line: l,
                        column: c + column - 1,
                        message: format!("{field}: {message}"),
                    }
                }
                _ => Error::Parse {
                    line,
                    column,
                    message: format!("{field} (within the expression): {message}"),
                },
            }
        }
        other => Error::Model(other),
    })
}

/// Parse a JSON model document.
pub fn parse_model_spec(text: &str) -> Result<ModelSpec> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let actions = match file.actions {
        ActionsFile::Finite { values } => ActionDomain::Finite(
            values
                .into_iter()
                .map(|v| match v {
                    ActionEntry::Scalar(x) => ActionValue::scalar(x),
                    ActionEntry::Vector(xs) => ActionValue(xs),
                })
                .collect(),
        ),
        ActionsFile::Box { bounds, steps } => ActionDomain::Box {
            bounds: bounds.into_iter().map(|[lo, hi]| (lo, hi)).collect(),
            steps,
        },
        ActionsFile::Simplex { dim, steps } => ActionDomain::Simplex { dim, steps },
    };
    let mut rates = Vec::with_capacity(file.rates.len());
    for (i, r) in file.rates.iter().enumerate() {
        let field = format!("rates[{i}] ({} -> {})", r.from, r.to);
        rates.push((r.from.clone(), r.to.clone(), parse_expr(text, &field, &r.expr)?));
    }
    let def = ModelDef {
        states: file.states,
        actions: ActionSpace::new(actions)?,
        params: file.params,
        rates,
        reward: parse_expr(text, "reward", &file.reward)?,
        terminal_reward: file
            .terminal_reward
            .as_deref()
            .map(|t| parse_expr(text, "terminal_reward", t))
            .transpose()?,
        rate_cap: file.rate_cap,
    };
    Ok(ModelSpec::new(def)?)
}

pub fn read_model_file(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_model_spec(&text)
}

/// Pretty-printed JSON document; `parse_model_spec` inverts it.
pub fn serialize_model(model: &ModelSpec) -> String {
    let def = model.def();
    let actions = match def.actions.domain() {
        ActionDomain::Finite(values) => ActionsFile::Finite {
            values: values
                .iter()
                .map(|v| match v.components() {
                    [x] => ActionEntry::Scalar(*x),
                    xs => ActionEntry::Vector(xs.to_vec()),
                })
                .collect(),
        },
        ActionDomain::Box { bounds, steps } => ActionsFile::Box {
            bounds: bounds.iter().map(|&(lo, hi)| [lo, hi]).collect(),
            steps: steps.clone(),
        },
        ActionDomain::Simplex { dim, steps } => ActionsFile::Simplex {
            dim: *dim,
            steps: *steps,
        },
    };
    let file = ModelFile {
        states: def.states.clone(),
        actions,
        params: def.params.clone(),
        rates: def
            .rates
            .iter()
            .map(|(from, to, e)| RateFile {
                from: from.clone(),
                to: to.clone(),
                expr: e.to_string(),
            })
            .collect(),
        reward: def.reward.to_string(),
        terminal_reward: def.terminal_reward.as_ref().map(Expr::to_string),
        rate_cap: def.rate_cap,
    };
    let mut out = serde_json::to_string_pretty(&file).expect("model document serializes");
    out.push('\n');
    out
}
