//! Convergence table comparing the N-object values with the limit.

use meanfield_core::action::{ActionDomain, ActionFunction, ActionSpace};
use meanfield_core::bounds::{bound_b, bound_b_prime, estimate_constants, ScalingConstants};
use meanfield_core::dp::{optimal_value, DEFAULT_ATOM_CAP};
use meanfield_core::hjb::ValueField;
use meanfield_core::lattice::composition_count;
use meanfield_core::meanfield::{value_deterministic, DEFAULT_STEPS};
use meanfield_core::model::{ModelDef, ModelSpec};
use meanfield_core::{ActionValue, ConstantPolicy, OccupancyMeasure, OpenLoopPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::evaluate_value_mc_par;

pub const REPORT_HEADER: &str =
    "N,V_N_star,V_N_alpha_star,stderr_alpha,heuristic_value,stderr_heur,best_nu,v_star,bound_B,bound_Bprime";

/// Points of the default constant-action scan.
pub const HEURISTIC_POINTS: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Constant actions scanned by the heuristic; `None` picks
    /// [`default_heuristic_grid`].
    pub heuristic_grid: Option<Vec<Vec<f64>>>,
    /// Exact DP runs only while the atom count stays below this.
    pub dp_atom_cap: usize,
    /// Samples behind the estimated Lipschitz constants.
    pub constant_samples: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            n_list: vec![10, 20, 50, 100],
            replications: 2000,
            seed: 0,
            heuristic_grid: None,
            dp_atom_cap: 5_000,
            constant_samples: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub v_n_star: Option<f64>,
    pub v_n_alpha_star: f64,
    pub stderr_alpha: f64,
    pub heuristic_value: f64,
    pub stderr_heur: f64,
    pub best_nu: Vec<f64>,
    pub v_star: f64,
    pub bound_b: f64,
    pub bound_b_prime: f64,
}

/// Scalar actions: evenly spaced points between the extreme grid actions.
/// Vector actions: the action grid itself.
pub fn default_heuristic_grid(model: &ModelSpec) -> Vec<ActionValue> {
    let grid = model.actions().actions();
    if model.actions().arity() != 1 {
        return grid.to_vec();
    }
    let lo = grid.iter().map(|a| a.0[0]).fold(f64::INFINITY, f64::min);
    let hi = grid.iter().map(|a| a.0[0]).fold(f64::NEG_INFINITY, f64::max);
    (0..HEURISTIC_POINTS)
        .map(|i| ActionValue::scalar(lo + (hi - lo) * i as f64 / (HEURISTIC_POINTS - 1) as f64))
        .collect()
}

/// The same model with its action set replaced by `actions`.
pub fn with_actions(model: &ModelSpec, actions: Vec<ActionValue>) -> Result<ModelSpec> {
    let def = ModelDef {
        actions: ActionSpace::new(ActionDomain::Finite(actions))?,
        ..model.def().clone()
    };
    Ok(ModelSpec::new(def)?)
}

pub fn convergence_report(
    model: &ModelSpec,
    alpha_star: &ActionFunction,
    field: &ValueField,
    m0: &OccupancyMeasure,
    cfg: &ReportConfig,
) -> Result<Vec<ReportRow>> {
    let horizon = field.horizon;
    if (alpha_star.horizon() - horizon).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "action function covers [0, {}] but the field covers [0, {horizon}]",
            alpha_star.horizon()
        )));
    }
    let s = model.num_states();
    let v_star = value_deterministic(model, m0.weights(), alpha_star, horizon, horizon / DEFAULT_STEPS as f64)?;
    let heuristic = match &cfg.heuristic_grid {
        Some(g) => g.iter().cloned().map(ActionValue).collect(),
        None => default_heuristic_grid(model),
    };
    let heuristic_model = with_actions(model, heuristic.clone())?;
    let scaling = ScalingConstants::for_model(model);
    let constants = estimate_constants(model, cfg.constant_samples, cfg.seed);
    let open_loop = OpenLoopPolicy(alpha_star.clone());

    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let start = m0.round_to_grain(n)?;
        let delta = start.distance(m0);
        let atoms = composition_count(n, s);
        let v_n_star = if atoms <= cfg.dp_atom_cap.min(DEFAULT_ATOM_CAP) as u128 {
            Some(optimal_value(model, n, horizon, &start, cfg.dp_atom_cap)?)
        } else {
            None
        };
        let alpha = evaluate_value_mc_par(model, n, &open_loop, &start, horizon, cfg.replications, cfg.seed)?;
        let mut best: Option<(f64, f64, &ActionValue)> = None;
        for nu in &heuristic {
            let est = evaluate_value_mc_par(
                &heuristic_model,
                n,
                &ConstantPolicy(nu.clone()),
                &start,
                horizon,
                cfg.replications,
                cfg.seed,
            )?;
            if best.is_none_or(|(v, _, _)| est.mean > v) {
                best = Some((est.mean, est.std_error, nu));
            }
        }
        let (heuristic_value, stderr_heur, nu) = best.expect("heuristic grid is nonempty");
        let sc = scaling.at(n as u64);
        rows.push(ReportRow {
            n,
            v_n_star,
            v_n_alpha_star: alpha.mean,
            stderr_alpha: alpha.std_error,
            heuristic_value,
            stderr_heur,
            best_nu: nu.0.clone(),
            v_star,
            bound_b: bound_b(&sc, &constants, horizon, s, delta),
            bound_b_prime: bound_b_prime(&sc, &constants, alpha_star, horizon, s, delta),
        });
    }
    Ok(rows)
}
