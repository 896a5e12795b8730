//! Output files. CSV tables start with a `# config: {json}` line; JSON
//! documents carry the config under `"config"`. Either way
//! [`read_metadata`] recovers the [`RunConfig`].

use std::io::Write;
use std::path::Path;

use meanfield_core::meanfield::FlowPath;
use meanfield_core::sim::McEstimate;
use meanfield_core::{ModelSpec, Trajectory};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{AlphaRow, Format, RunConfig};
use crate::error::{Error, Result};
use crate::report::{ReportRow, REPORT_HEADER};

const CSV_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Num(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Trailing `key,value` lines after the rows (CSV) or a `summary` object (JSON).
    pub summary: Vec<(String, Cell)>,
}

pub enum Artifact {
    Table(Table),
    Document(Value),
}

impl Artifact {
    pub fn render(&self, cfg: &RunConfig) -> String {
        match (self, cfg.format) {
            (Artifact::Table(t), Format::Csv) => render_csv(t, cfg),
            (Artifact::Table(t), Format::Json) => {
                let rows: Vec<Value> = t.rows.iter().map(|r| Value::Array(r.iter().map(Cell::to_json).collect())).collect();
                let summary: serde_json::Map<String, Value> =
                    t.summary.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
                let mut doc = json!({ "config": cfg, "columns": t.columns, "rows": rows });
                if !summary.is_empty() {
                    doc["summary"] = Value::Object(summary);
                }
                pretty(&doc)
            }
            (Artifact::Document(v), _) => {
                let mut doc = json!({ "config": cfg });
                doc["result"] = v.clone();
                pretty(&doc)
            }
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

fn render_csv(t: &Table, cfg: &RunConfig) -> String {
    let mut out = format!("{CSV_PREFIX}{}\n", cfg.to_json());
    out.push_str(&t.columns.join(","));
    out.push('\n');
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    for (k, v) in &t.summary {
        out.push_str(&format!("# {k},{}\n", v.render()));
    }
    out
}

/// Write to `path`, or to stdout when absent.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn read_metadata(text: &str) -> Result<RunConfig> {
    if let Some(line) = text.lines().next().and_then(|l| l.strip_prefix(CSV_PREFIX)) {
        return RunConfig::from_json(line);
    }
    let doc: Value = serde_json::from_str(text)?;
    let cfg = doc
        .get("config")
        .ok_or_else(|| Error::Config("artifact has no config block".into()))?;
    Ok(serde_json::from_value(cfg.clone())?)
}

fn state_columns(model: &ModelSpec) -> Vec<String> {
    model.state_names().iter().map(|s| format!("m_{s}")).collect()
}

fn action_columns(arity: usize) -> Vec<String> {
    (0..arity).map(|k| format!("action_{k}")).collect()
}

fn nums(xs: &[f64]) -> impl Iterator<Item = Cell> + '_ {
    xs.iter().map(|&x| Cell::Num(x))
}

/// `slot,t,action_0..,delta,m_<state>..`; the final measure row has empty
/// action and delta fields.
pub fn trajectory_table(model: &ModelSpec, traj: &Trajectory, value: f64) -> Table {
    let arity = model.actions().arity();
    let mut columns = vec!["slot".to_string(), "t".to_string()];
    columns.extend(action_columns(arity));
    columns.push("delta".into());
    columns.extend(state_columns(model));
    let mut rows = Vec::with_capacity(traj.measures.len());
    for (k, m) in traj.measures.iter().enumerate() {
        let mut row = vec![Cell::Int(k as u64), Cell::Num(traj.time(k))];
        match (traj.actions.get(k), traj.transition_counts.get(k)) {
            (Some(a), Some(&d)) => {
                row.extend(nums(a.components()));
                row.push(Cell::Int(d as u64));
            }
            _ => row.extend(std::iter::repeat_n(Cell::Empty, arity + 1)),
        }
        row.extend(nums(m.weights()));
        rows.push(row);
    }
    Table {
        columns,
        rows,
        summary: vec![("value".into(), Cell::Num(value))],
    }
}

/// `rep,value` followed by the summary.
pub fn mc_table(est: &McEstimate) -> Table {
    Table {
        columns: vec!["rep".into(), "value".into()],
        rows: est
            .values
            .iter()
            .enumerate()
            .map(|(r, &v)| vec![Cell::Int(r as u64), Cell::Num(v)])
            .collect(),
        summary: vec![
            ("mean".into(), Cell::Num(est.mean)),
            ("std_error".into(), Cell::Num(est.std_error)),
            ("replications".into(), Cell::Int(est.values.len() as u64)),
        ],
    }
}

/// `t,action_0..,m_<state>..`; the action column holds the action in force
/// from that sample on.
pub fn flow_table(model: &ModelSpec, flow: &FlowPath, value: f64) -> Table {
    let mut columns = vec!["t".to_string()];
    columns.extend(action_columns(model.actions().arity()));
    columns.extend(state_columns(model));
    let rows = flow
        .times
        .iter()
        .zip(&flow.points)
        .enumerate()
        .map(|(i, (&t, m))| {
            let mut row = vec![Cell::Num(t)];
            row.extend(nums(flow.action_at(i).components()));
            row.extend(nums(m));
            row
        })
        .collect();
    Table {
        columns,
        rows,
        summary: vec![("value".into(), Cell::Num(value))],
    }
}

/// The action-function file format itself.
pub fn alpha_table(rows: &[AlphaRow], summary: Vec<(String, Cell)>) -> Table {
    let arity = rows.first().map_or(0, |r| r.action.len());
    let mut columns = vec!["t_start".to_string(), "t_end".to_string()];
    columns.extend(action_columns(arity));
    Table {
        columns,
        rows: rows
            .iter()
            .map(|r| {
                let mut row = vec![Cell::Num(r.t_start), Cell::Num(r.t_end)];
                row.extend(nums(&r.action));
                row
            })
            .collect(),
        summary,
    }
}

/// One row per population size, columns as in [`REPORT_HEADER`].
pub fn report_table(rows: &[ReportRow]) -> Table {
    Table {
        columns: REPORT_HEADER.split(',').map(String::from).collect(),
        rows: rows
            .iter()
            .map(|r| {
                let nu: Vec<String> = r.best_nu.iter().map(f64::to_string).collect();
                vec![
                    Cell::Int(r.n as u64),
                    r.v_n_star.map_or(Cell::Empty, Cell::Num),
                    Cell::Num(r.v_n_alpha_star),
                    Cell::Num(r.stderr_alpha),
                    Cell::Num(r.heuristic_value),
                    Cell::Num(r.stderr_heur),
                    Cell::Text(nu.join(";")),
                    Cell::Num(r.v_star),
                    Cell::Num(r.bound_b),
                    Cell::Num(r.bound_b_prime),
                ]
            })
            .collect(),
        summary: vec![],
    }
}
