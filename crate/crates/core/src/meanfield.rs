//! The deterministic limit: drift, ODE flow and open-loop values.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::action::{ActionFunction, Piece};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::occupancy::{ActionValue, OccupancyMeasure};
use crate::sim::{SampledPath, Trajectory};

/// Number of RK4 steps over the horizon when no step size is given.
pub const DEFAULT_STEPS: usize = 2000;

/// Mass drift or negative mass beyond this is reported as a model defect.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Drift evaluator with reusable buffers.
pub struct Drift<'a> {
    model: &'a ModelSpec,
    rates: Vec<f64>,
    checked: bool,
}

impl<'a> Drift<'a> {
    /// Evaluator that validates rates like the simulator does.
    pub fn new(model: &'a ModelSpec) -> Self {
        Self {
            model,
            rates: Vec::with_capacity(model.rates().len()),
            checked: true,
        }
    }

    /// Evaluator for integrator stages, which may sit a rounding error off the simplex.
    pub fn unchecked(model: &'a ModelSpec) -> Self {
        Self {
            checked: false,
            ..Self::new(model)
        }
    }

    pub fn model(&self) -> &'a ModelSpec {
        self.model
    }

    /// `out = m^T R(m, a)`.
    pub fn eval(&mut self, m: &[f64], a: &[f64], out: &mut [f64]) -> Result<()> {
        if self.checked {
            self.model.eval_rates(m, a, &mut self.rates)?;
        } else {
            self.model.eval_rates_raw(m, a, &mut self.rates)?;
        }
        out.iter_mut().for_each(|x| *x = 0.0);
        for (r, &v) in self.model.rates().iter().zip(&self.rates) {
            let flux = m[r.from] * v;
            out[r.from] -= flux;
            out[r.to] += flux;
        }
        Ok(())
    }
}

/// `f(m, a)`.
pub fn drift_limit(model: &ModelSpec, m: &OccupancyMeasure, a: &ActionValue) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.num_states()];
    Drift::new(model).eval(m.weights(), a.components(), &mut out)?;
    Ok(out)
}

/// `F^N(m, a)`: expected one-slot change, summed over per-object jump probabilities.
pub fn drift_finite(model: &ModelSpec, n: usize, m: &OccupancyMeasure, a: &ActionValue) -> Result<Vec<f64>> {
    if n == 0 || model.rate_cap() > n as f64 {
        return Err(Error::NotSimulable {
            rate_cap: model.rate_cap(),
            n,
        });
    }
    let mut rates = Vec::new();
    model.eval_rates(m.weights(), a.components(), &mut rates)?;
    let mut out = vec![0.0; model.num_states()];
    let w = m.weights();
    for (r, &v) in model.rates().iter().zip(&rates) {
        let p = v / n as f64;
        out[r.from] -= w[r.from] * p;
        out[r.to] += w[r.from] * p;
    }
    Ok(out)
}

/// Grid indices `[start, end]` covered by piece `piece` of the action trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub piece: usize,
    pub start: usize,
    pub end: usize,
}

/// A sampled solution of the limiting ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub segments: Vec<Segment>,
    pub action_trace: ActionFunction,
}

impl FlowPath {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().unwrap()
    }

    /// Action in force at grid index `i` (right-continuous at breakpoints).
    pub fn action_at(&self, i: usize) -> ActionValue {
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.start <= i && i < s.end)
            .or(self.segments.last())
            .unwrap();
        self.action_trace.value_in_piece(seg.piece, self.times[i])
    }
}

impl SampledPath for FlowPath {
    fn times(&self) -> &[f64] {
        &self.times
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }
}

fn check_point(p: &[f64], t: f64) -> Result<()> {
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("flow state at t = {t}")));
    }
    let mass: f64 = p.iter().sum();
    if (mass - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::LeftSimplex(format!("flow mass {mass} at t = {t}")));
    }
    if let Some(x) = p.iter().find(|&&x| x < -SIMPLEX_TOL) {
        return Err(Error::LeftSimplex(format!("flow component {x} at t = {t}")));
    }
    Ok(())
}

struct Rk4<'a> {
    drift: Drift<'a>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(model: &'a ModelSpec) -> Self {
        let s = model.num_states();
        Self {
            drift: Drift::unchecked(model),
            k: [vec![0.0; s], vec![0.0; s], vec![0.0; s], vec![0.0; s]],
            tmp: vec![0.0; s],
        }
    }

    fn step(&mut self, x: &mut [f64], t: f64, h: f64, alpha: &ActionFunction, piece: usize) -> Result<()> {
        let a0 = alpha.value_in_piece(piece, t);
        let am = alpha.value_in_piece(piece, t + 0.5 * h);
        let a1 = alpha.value_in_piece(piece, t + h);
        let [k1, k2, k3, k4] = &mut self.k;
        self.drift.eval(x, a0.components(), k1)?;
        for ((y, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(k1.iter()) {
            *y = xi + 0.5 * h * k;
        }
        self.drift.eval(&self.tmp, am.components(), k2)?;
        for ((y, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(k2.iter()) {
            *y = xi + 0.5 * h * k;
        }
        self.drift.eval(&self.tmp, am.components(), k3)?;
        for ((y, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(k3.iter()) {
            *y = xi + h * k;
        }
        self.drift.eval(&self.tmp, a1.components(), k4)?;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

/// Steps for an interval of length `len`: at least two, always even so that
/// Simpson's rule applies piece by piece.
fn steps_for(len: f64, h: f64) -> usize {
    let n = ((len / h) - 1e-9).ceil().max(2.0) as usize;
    n + n % 2
}

/// RK4 solution of `dm/dt = f(m, alpha(t))` on `[0, T]`, with every breakpoint
/// of `alpha` on the grid.
pub fn integrate_flow(model: &ModelSpec, m0: &[f64], alpha: &ActionFunction, horizon: f64, h: f64) -> Result<FlowPath> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if alpha.horizon() < horizon - 1e-12 {
        return Err(Error::TimeOutOfRange {
            t: horizon,
            horizon: alpha.horizon(),
        });
    }
    if m0.len() != model.num_states() {
        return Err(Error::InvalidMeasure(format!(
            "initial point has {} states, model has {}",
            m0.len(),
            model.num_states()
        )));
    }
    check_point(m0, 0.0)?;
    let bps = alpha.breakpoints();
    let mut rk = Rk4::new(model);
    let mut x = m0.to_vec();
    let mut times = vec![0.0];
    let mut points = vec![x.clone()];
    let mut segments = Vec::new();
    for piece in 0..alpha.pieces().len() {
        let t0 = bps[piece];
        if t0 >= horizon - 1e-12 {
            break;
        }
        let t1 = bps[piece + 1].min(horizon);
        let n = steps_for(t1 - t0, h);
        let dt = (t1 - t0) / n as f64;
        let start = times.len() - 1;
        for i in 0..n {
            let t = t0 + i as f64 * dt;
            rk.step(&mut x, t, dt, alpha, piece)?;
            let t_next = if i + 1 == n { t1 } else { t0 + (i + 1) as f64 * dt };
            check_point(&x, t_next)?;
            times.push(t_next);
            points.push(x.clone());
        }
        segments.push(Segment {
            piece,
            start,
            end: times.len() - 1,
        });
    }
    Ok(FlowPath {
        times,
        points,
        segments,
        action_trace: alpha.clone(),
    })
}

/// `int_0^T r(phi_s, alpha(s)) ds + g(phi_T)` by Simpson's rule on the flow grid.
pub fn flow_value(model: &ModelSpec, flow: &FlowPath) -> Result<f64> {
    let mut total = 0.0;
    for seg in &flow.segments {
        let n = seg.end - seg.start;
        let dt = (flow.times[seg.end] - flow.times[seg.start]) / n as f64;
        let mut acc = 0.0;
        for i in seg.start..=seg.end {
            let a = flow.action_trace.value_in_piece(seg.piece, flow.times[i]);
            let r = model.reward(&flow.points[i], a.components())?;
            let w = if i == seg.start || i == seg.end {
                1.0
            } else if (i - seg.start) % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * r;
        }
        total += acc * dt / 3.0;
    }
    let v = total + model.terminal(flow.last())?;
    if !v.is_finite() {
        return Err(Error::NonFinite("deterministic value".into()));
    }
    Ok(v)
}

/// `v_alpha(m0)`.
pub fn value_deterministic(model: &ModelSpec, m0: &[f64], alpha: &ActionFunction, horizon: f64, h: f64) -> Result<f64> {
    flow_value(model, &integrate_flow(model, m0, alpha, horizon, h)?)
}

/// The piecewise-constant action function played along a simulated path:
/// `A(k)` on `[k/N, (k+1)/N)`, then the final-slot action up to `T`.
pub fn trajectory_actions(traj: &Trajectory) -> Result<ActionFunction> {
    let mut bps = vec![0.0];
    let mut pieces = Vec::new();
    for (k, a) in traj.actions.iter().enumerate() {
        pieces.push(Piece::constant(a.clone()));
        bps.push(traj.time(k + 1));
    }
    let covered = traj.covered_horizon();
    if traj.horizon > covered + 1e-12 {
        pieces.push(Piece::constant(traj.final_action.clone()));
        bps.push(traj.horizon);
    } else if let Some(last) = bps.last_mut() {
        *last = traj.horizon;
    }
    Ok(ActionFunction::new(bps, pieces)?.merged())
}

/// `phi_t(m0, A^N)`: the limiting flow driven by the actions of a sampled run.
pub fn coupled_flow(model: &ModelSpec, m0: &[f64], traj: &Trajectory, h: f64) -> Result<FlowPath> {
    integrate_flow(model, m0, &trajectory_actions(traj)?, traj.horizon, h)
}
