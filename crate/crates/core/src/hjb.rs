//! Semi-Lagrangian solver for the Hamilton-Jacobi-Bellman equation of the
//! limiting system, and the two policy constructions built on its solution.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use smallvec::SmallVec;

use crate::action::ActionFunction;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::meanfield::{integrate_flow, Drift, FlowPath};
use crate::model::ModelSpec;
use crate::occupancy::{ActionValue, OccupancyMeasure};
use crate::sim::Policy;

pub const DEFAULT_NODE_CAP: usize = 4_000_000;

/// Foot points and queries this far outside the simplex are clamped back.
pub const CLAMP_TOL: f64 = 1e-9;

/// Interpolation stencil: up to `S` `(node, weight)` pairs.
pub type Stencil = SmallVec<[(u32, f64); 6]>;

/// The nodes `{c / G : c a composition of G into S parts}`.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    lattice: Lattice,
}

pub fn build_simplex_grid(s: usize, g: usize) -> Result<SimplexGrid> {
    build_simplex_grid_with_cap(s, g, DEFAULT_NODE_CAP)
}

pub fn build_simplex_grid_with_cap(s: usize, g: usize, cap: usize) -> Result<SimplexGrid> {
    Ok(SimplexGrid {
        lattice: Lattice::new(g, s, cap)?,
    })
}

impl SimplexGrid {
    pub fn resolution(&self) -> usize {
        self.lattice.resolution()
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn node_counts(&self, i: usize) -> Vec<usize> {
        self.lattice.unrank(i)
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        let g = self.resolution() as f64;
        self.node_counts(i).iter().map(|&c| c as f64 / g).collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let g = self.resolution() as f64;
        self.lattice
            .points()
            .iter()
            .map(|c| c.iter().map(|&x| x as f64 / g).collect())
            .collect()
    }

    pub fn index_of_counts(&self, counts: &[usize]) -> Option<usize> {
        self.lattice.rank(counts)
    }

    /// Barycentric weights of `m` in the Freudenthal sub-simplex containing it.
    pub fn stencil(&self, m: &[f64]) -> Result<Stencil> {
        let s = self.dim();
        if m.len() != s {
            return Err(Error::InvalidMeasure(format!("point has {} states, grid has {s}", m.len())));
        }
        let m = clamp_to_simplex(m)?;
        let g = self.resolution();
        let gf = g as f64;
        if s == 1 {
            return Ok(SmallVec::from_slice(&[(0, 1.0)]));
        }
        // cumulative coordinates z_k = G (m_0 + .. + m_k), k < S - 1
        let d = s - 1;
        let mut base: SmallVec<[usize; 8]> = SmallVec::new();
        let mut frac: SmallVec<[f64; 8]> = SmallVec::new();
        let mut acc = 0.0;
        for &x in &m[..d] {
            acc += x;
            let mut z = (acc * gf).clamp(0.0, gf);
            if (z - z.round()).abs() < 1e-9 {
                z = z.round();
            }
            let mut b = z.floor();
            if b >= gf {
                b = gf;
            }
            base.push(b as usize);
            frac.push(z - b);
        }
        // the cumulative sums are nondecreasing; keep integer parts consistent with that
        for k in 1..d {
            if base[k] < base[k - 1] {
                base[k] = base[k - 1];
                frac[k] = 0.0;
            }
        }
        let mut order: SmallVec<[usize; 8]> = (0..d).collect();
        order.sort_by(|&i, &j| frac[j].total_cmp(&frac[i]).then(j.cmp(&i)));
        let mut out = Stencil::new();
        let mut vertex = base.clone();
        let mut prev = 1.0;
        for step in 0..=d {
            let next = if step < d { frac[order[step]] } else { 0.0 };
            let w = prev - next;
            if w > 0.0 {
                out.push((self.rank_cumulative(&vertex)?, w));
            }
            if step < d {
                vertex[order[step]] += 1;
                prev = next;
            }
        }
        Ok(out)
    }

    fn rank_cumulative(&self, z: &[usize]) -> Result<u32> {
        let g = self.resolution();
        let mut counts: SmallVec<[usize; 8]> = SmallVec::with_capacity(z.len() + 1);
        let mut prev = 0;
        for &x in z {
            if x < prev || x > g {
                return Err(Error::LeftSimplex(format!("interpolation vertex {z:?}")));
            }
            counts.push(x - prev);
            prev = x;
        }
        counts.push(g - prev);
        self.lattice
            .rank(&counts)
            .map(|r| r as u32)
            .ok_or_else(|| Error::LeftSimplex(format!("interpolation vertex {z:?}")))
    }
}

/// Pull points within [`CLAMP_TOL`] of the simplex back onto it.
fn clamp_to_simplex(m: &[f64]) -> Result<SmallVec<[f64; 8]>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("point {m:?}")));
    }
    let mass: f64 = m.iter().sum();
    if (mass - 1.0).abs() > CLAMP_TOL || m.iter().any(|&x| x < -CLAMP_TOL) {
        return Err(Error::LeftSimplex(format!("point {m:?}")));
    }
    let mut out: SmallVec<[f64; 8]> = m.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

/// Interpolated value of a nodal field at `m`.
pub fn interpolate_simplex(grid: &SimplexGrid, values: &[f64], m: &[f64]) -> Result<f64> {
    Ok(grid
        .stencil(m)?
        .iter()
        .map(|&(i, w)| w * values[i as usize])
        .sum())
}

/// Solved value function `u(m, t)` on grid nodes and `K + 1` time levels.
#[derive(Debug, Clone)]
pub struct ValueField {
    pub grid: SimplexGrid,
    pub horizon: f64,
    pub steps: usize,
    /// `values[k][node]` at time `k T / K`.
    pub values: Vec<Vec<f64>>,
    /// `greedy[k][node]` indexes `actions`, for `k < K`.
    pub greedy: Vec<Vec<u32>>,
    pub actions: Vec<ActionValue>,
    /// Largest `dt * |f| * G` over all nodes and actions; above 1 the foot
    /// points may skip grid cells.
    pub cfl: f64,
}

impl ValueField {
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time level nearest to `t`.
    pub fn slot_at(&self, t: f64) -> Result<usize> {
        if !(t >= -1e-12 && t <= self.horizon + 1e-9) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        Ok(((t / self.dt()).round().max(0.0) as usize).min(self.steps))
    }

    pub fn value(&self, m: &[f64], t: f64) -> Result<f64> {
        let k = self.slot_at(t)?;
        interpolate_simplex(&self.grid, &self.values[k], m)
    }

    pub fn cfl_ok(&self) -> bool {
        self.cfl <= 1.0
    }
}

/// Per node: the discounted-free one-step data `(r dt, stencil of the foot point)` for each action.
struct StepData {
    reward: Vec<f64>,
    stencils: Vec<Stencil>,
}

fn step_data(model: &ModelSpec, grid: &SimplexGrid, dt: f64) -> Result<(Vec<StepData>, f64)> {
    let actions = model.actions().actions();
    let s = model.num_states();
    let g = grid.resolution() as f64;
    let mut drift = Drift::new(model);
    let mut f = vec![0.0; s];
    let mut foot = vec![0.0; s];
    let mut cfl = 0.0f64;
    let mut out = Vec::with_capacity(grid.len());
    for (i, m) in grid.nodes().iter().enumerate() {
        let mut reward = Vec::with_capacity(actions.len());
        let mut stencils = Vec::with_capacity(actions.len());
        for a in actions {
            drift.eval(m, a.components(), &mut f)?;
            reward.push(model.reward(m, a.components())? * dt);
            let mut largest = 0.0f64;
            for k in 0..s {
                foot[k] = m[k] + f[k] * dt;
                largest = largest.max(f[k].abs());
            }
            cfl = cfl.max(largest * dt * g);
            let st = grid.stencil(&foot).map_err(|e| match e {
                Error::LeftSimplex(_) => Error::LeftSimplex(format!("foot point {foot:?} of node {i} ({m:?})")),
                other => other,
            })?;
            stencils.push(st);
        }
        out.push(StepData { reward, stencils });
    }
    Ok((out, cfl))
}

/// Backward sweep of `u(m, t) = max_a [ r(m, a) dt + u(m + f(m, a) dt, t + dt) ]`
/// from `u(., T) = g`, with `dt = T / K`.
pub fn solve_hjb(model: &ModelSpec, grid: SimplexGrid, horizon: f64, steps: usize) -> Result<ValueField> {
    if grid.dim() != model.num_states() {
        return Err(Error::InvalidArgument("grid and model disagree on the state count".into()));
    }
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidArgument("need a positive horizon and at least one time step".into()));
    }
    let dt = horizon / steps as f64;
    let (data, cfl) = step_data(model, &grid, dt)?;
    let terminal: Vec<f64> = grid.nodes().iter().map(|m| model.terminal(m)).collect::<Result<_>>()?;
    let mut values = vec![Vec::new(); steps + 1];
    let mut greedy = vec![Vec::new(); steps];
    values[steps] = terminal;
    for k in (0..steps).rev() {
        let next = &values[k + 1];
        let mut cur = Vec::with_capacity(grid.len());
        let mut arg = Vec::with_capacity(grid.len());
        for node in &data {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0u32;
            for (ai, (&r, st)) in node.reward.iter().zip(&node.stencils).enumerate() {
                let v = r + st.iter().map(|&(j, w)| w * next[j as usize]).sum::<f64>();
                if v > best {
                    best = v;
                    best_a = ai as u32;
                }
            }
            if !best.is_finite() {
                return Err(Error::NonFinite(format!("HJB value at slot {k}")));
            }
            cur.push(best);
            arg.push(best_a);
        }
        values[k] = cur;
        greedy[k] = arg;
    }
    Ok(ValueField {
        grid,
        horizon,
        steps,
        values,
        greedy,
        actions: model.actions().actions().to_vec(),
        cfl,
    })
}

/// Greedy action at `(m, t)`: the one-step lookahead of the scheme evaluated
/// at the (off-grid) point `m`, against the value at the next time level.
pub fn greedy_action(field: &ValueField, model: &ModelSpec, m: &[f64], t: f64) -> Result<usize> {
    let k = field.slot_at(t)?.min(field.steps - 1);
    let dt = field.dt();
    let next = &field.values[k + 1];
    let s = model.num_states();
    let m = clamp_to_simplex(m)?;
    let mut drift = Drift::unchecked(model);
    let mut f = vec![0.0; s];
    let mut foot = vec![0.0; s];
    let mut best = f64::NEG_INFINITY;
    let mut best_a = 0;
    for (ai, a) in field.actions.iter().enumerate() {
        drift.eval(&m, a.components(), &mut f)?;
        for i in 0..s {
            foot[i] = m[i] + f[i] * dt;
        }
        let v = model.reward(&m, a.components())? * dt + interpolate_simplex(&field.grid, next, &foot)?;
        if v > best {
            best = v;
            best_a = ai;
        }
    }
    Ok(best_a)
}

/// Follow the limiting flow from `m0`, playing the greedy action
/// of the field at the current flow point on each time step.
pub fn synthesize_action_function(field: &ValueField, model: &ModelSpec, m0: &[f64]) -> Result<(ActionFunction, FlowPath)> {
    let dt = field.dt();
    let mut x = clamp_to_simplex(m0)?.to_vec();
    let mut chosen = Vec::with_capacity(field.steps);
    let mut bps = Vec::with_capacity(field.steps + 1);
    for k in 0..field.steps {
        let t = k as f64 * dt;
        let ai = greedy_action(field, model, &x, t)?;
        let a = field.actions[ai].clone();
        chosen.push(a.clone());
        bps.push(t);
        let piece = ActionFunction::constant(a, dt)?;
        let seg = integrate_flow(model, &x, &piece, dt, dt / 2.0)?;
        x = seg.last().to_vec();
    }
    bps.push(field.horizon);
    let alpha = ActionFunction::piecewise_constant(bps, chosen)?.merged();
    let flow = integrate_flow(model, m0, &alpha, field.horizon, dt / 2.0)?;
    Ok((alpha, flow))
}

/// Closed-loop lookup of the greedy action at the observed measure.
pub struct FeedbackPolicy<'a> {
    pub field: &'a ValueField,
    pub model: &'a ModelSpec,
}

pub fn feedback_policy<'a>(field: &'a ValueField, model: &'a ModelSpec) -> FeedbackPolicy<'a> {
    FeedbackPolicy { field, model }
}

impl FeedbackPolicy<'_> {
    pub fn action_at(&self, t: f64, m: &[f64]) -> Result<ActionValue> {
        Ok(self.field.actions[greedy_action(self.field, self.model, m, t)?].clone())
    }
}

impl Policy for FeedbackPolicy<'_> {
    fn action(&self, _slot: usize, t: f64, m: &OccupancyMeasure) -> Result<ActionValue> {
        self.action_at(t, m.weights())
    }
}

/// Closed-form optimal rule of the two-state pricing model: sell (1) iff
/// `x > 1/2` or `x > 1 - exp(-(T - t))`.
pub fn pricing_analytic_policy(t: f64, x: f64, horizon: f64) -> u8 {
    u8::from(x > 0.5 || x > 1.0 - (-(horizon - t)).exp())
}
