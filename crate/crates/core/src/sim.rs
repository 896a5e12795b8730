//! Exact simulation of the N-object occupancy chain.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::action::ActionFunction;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::occupancy::{euclidean, ActionValue, OccupancyMeasure};
use crate::rng::replication_rng;

/// Number of slots `floor(T / I(N))` with `I(N) = 1/N`.
pub fn horizon_slots(t: f64, n: usize) -> usize {
    (t * n as f64 + 1e-9).floor().max(0.0) as usize
}

/// Closed-loop decision rule: action at slot `k` (time `t = k/N`) given the
/// observed occupancy measure. Must be a pure function of its inputs.
pub trait Policy: Sync {
    fn action(&self, slot: usize, t: f64, m: &OccupancyMeasure) -> Result<ActionValue>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action(&self, slot: usize, t: f64, m: &OccupancyMeasure) -> Result<ActionValue> {
        (**self).action(slot, t, m)
    }
}

#[derive(Debug, Clone)]
pub struct ConstantPolicy(pub ActionValue);

impl Policy for ConstantPolicy {
    fn action(&self, _: usize, _: f64, _: &OccupancyMeasure) -> Result<ActionValue> {
        Ok(self.0.clone())
    }
}

/// An action function used as a state-independent policy: slot `k` plays `alpha(k I(N))`.
#[derive(Debug, Clone)]
pub struct OpenLoopPolicy(pub ActionFunction);

impl Policy for OpenLoopPolicy {
    fn action(&self, _: usize, t: f64, _: &OccupancyMeasure) -> Result<ActionValue> {
        self.0.eval(t.min(self.0.horizon()))
    }
}

/// Adapter for closures.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(usize, f64, &OccupancyMeasure) -> Result<ActionValue> + Sync,
{
    fn action(&self, slot: usize, t: f64, m: &OccupancyMeasure) -> Result<ActionValue> {
        (self.0)(slot, t, m)
    }
}

/// A simulated path `M(0..=H)`, the actions `A(0..H)` and per-slot transition counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub horizon: f64,
    pub measures: Vec<OccupancyMeasure>,
    pub actions: Vec<ActionValue>,
    /// Policy action at the last slot `H`; it only earns the final running reward.
    pub final_action: ActionValue,
    pub transition_counts: Vec<usize>,
}

impl Trajectory {
    pub fn intensity(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn slots(&self) -> usize {
        self.actions.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }

    /// Last time covered by the slot grid, `H I(N)`.
    pub fn covered_horizon(&self) -> f64 {
        self.time(self.slots())
    }
}

fn check_simulable(model: &ModelSpec, n: usize) -> Result<()> {
    if n == 0 || model.rate_cap() > n as f64 {
        return Err(Error::NotSimulable {
            rate_cap: model.rate_cap(),
            n,
        });
    }
    Ok(())
}

fn grained_counts(m: &OccupancyMeasure, n: usize) -> Result<Vec<usize>> {
    match m.grain() {
        Some(g) if g == n => m.counts(),
        _ => m.clone().with_grain(n)?.counts(),
    }
}

/// Reusable buffers for the occupancy-level step.
struct Stepper<'a> {
    model: &'a ModelSpec,
    n: usize,
    rates: Vec<f64>,
    moves: Vec<(usize, usize, usize)>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a ModelSpec, n: usize) -> Self {
        Self {
            model,
            n,
            rates: Vec::with_capacity(model.rates().len()),
            moves: Vec::new(),
        }
    }

    /// Advance `counts` by one slot; returns the number of objects that moved.
    fn step<R: Rng + ?Sized>(&mut self, counts: &mut [usize], a: &[f64], rng: &mut R) -> Result<usize> {
        let n = self.n as f64;
        let m: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        self.model.eval_rates(&m, a, &mut self.rates)?;
        self.moves.clear();
        let mut moved = 0;
        // Rates are grouped per origin; the multinomial over destinations is
        // drawn as a chain of conditional binomials.
        for origin in 0..counts.len() {
            let mut remaining = counts[origin];
            if remaining == 0 {
                continue;
            }
            let mut mass_left = 1.0f64;
            for (r, &v) in self.model.rates().iter().zip(&self.rates) {
                if r.from != origin || v == 0.0 {
                    continue;
                }
                if remaining == 0 {
                    break;
                }
                let p = v / n;
                let q = if mass_left <= p { 1.0 } else { (p / mass_left).min(1.0) };
                let k = if q >= 1.0 {
                    remaining
                } else {
                    Binomial::new(remaining as u64, q)
                        .map_err(|e| Error::InvalidArgument(format!("binomial({remaining}, {q}): {e}")))?
                        .sample(rng) as usize
                };
                mass_left -= p;
                if k > 0 {
                    self.moves.push((origin, r.to, k));
                    remaining -= k;
                    moved += k;
                }
            }
        }
        for &(from, to, k) in &self.moves {
            counts[from] -= k;
            counts[to] += k;
        }
        Ok(moved)
    }
}

/// One slot of the chain from a measure grained to `N`.
pub fn step<R: Rng + ?Sized>(
    model: &ModelSpec,
    n: usize,
    m: &OccupancyMeasure,
    a: &ActionValue,
    rng: &mut R,
) -> Result<(OccupancyMeasure, usize)> {
    check_simulable(model, n)?;
    let mut counts = grained_counts(m, n)?;
    let moved = Stepper::new(model, n).step(&mut counts, a.components(), rng)?;
    Ok((OccupancyMeasure::from_counts(&counts)?, moved))
}

/// Run the chain for `floor(T N)` slots under `policy`.
pub fn simulate<P: Policy + ?Sized, R: Rng + ?Sized>(
    model: &ModelSpec,
    n: usize,
    policy: &P,
    m0: &OccupancyMeasure,
    horizon: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut measures = Vec::new();
    let mut actions = Vec::new();
    let mut transition_counts = Vec::new();
    let final_action = run(model, n, policy, m0, horizon, rng, |m, a, moved| {
        measures.push(m.clone());
        if let Some((a, moved)) = a.zip(moved) {
            actions.push(a.clone());
            transition_counts.push(moved);
        }
    })?;
    Ok(Trajectory {
        n,
        horizon,
        measures,
        actions,
        final_action,
        transition_counts,
    })
}

/// Core loop. `observe(M(k), A(k), Delta(k))` is called for `k < H` with the
/// action taken and the count it produced, then once for `M(H)` with `None`.
fn run<P: Policy + ?Sized, R: Rng + ?Sized>(
    model: &ModelSpec,
    n: usize,
    policy: &P,
    m0: &OccupancyMeasure,
    horizon: f64,
    rng: &mut R,
    mut observe: impl FnMut(&OccupancyMeasure, Option<&ActionValue>, Option<usize>),
) -> Result<ActionValue> {
    check_simulable(model, n)?;
    if m0.len() != model.num_states() {
        return Err(Error::InvalidMeasure(format!(
            "measure has {} states, model has {}",
            m0.len(),
            model.num_states()
        )));
    }
    let mut counts = grained_counts(m0, n)?;
    let slots = horizon_slots(horizon, n);
    let mut stepper = Stepper::new(model, n);
    let mut m = OccupancyMeasure::from_counts(&counts)?;
    for k in 0..slots {
        let a = policy.action(k, k as f64 / n as f64, &m)?;
        model.actions().check(&a)?;
        let moved = stepper.step(&mut counts, a.components(), rng)?;
        observe(&m, Some(&a), Some(moved));
        m = OccupancyMeasure::from_counts(&counts)?;
    }
    let last = policy.action(slots, slots as f64 / n as f64, &m)?;
    model.actions().check(&last)?;
    observe(&m, None, None);
    Ok(last)
}

/// `sum_{k=0}^{H} I(N) r(M(k), A(k)) + g(M(H))`.
pub fn path_value(model: &ModelSpec, traj: &Trajectory) -> Result<f64> {
    let dt = traj.intensity();
    let mut total = 0.0;
    for (m, a) in traj.measures.iter().zip(traj.actions.iter().chain(core::iter::once(&traj.final_action))) {
        total += dt * model.reward(m.weights(), a.components())?;
    }
    let last = traj.measures.last().expect("trajectory has at least one measure");
    Ok(total + model.terminal(last.weights())?)
}

/// Value of a single replication; same as `path_value(simulate(..))` without
/// storing the path.
pub fn replication_value<P: Policy + ?Sized>(
    model: &ModelSpec,
    n: usize,
    policy: &P,
    m0: &OccupancyMeasure,
    horizon: f64,
    seed: u64,
    replication: u64,
) -> Result<f64> {
    let mut rng = replication_rng(seed, replication);
    let dt = 1.0 / n as f64;
    let mut total = 0.0;
    let mut err = None;
    let mut last_m = None;
    let final_action = run(model, n, policy, m0, horizon, &mut rng, |m, a, _| match a {
        Some(a) => {
            if err.is_none() {
                match model.reward(m.weights(), a.components()) {
                    Ok(r) => total += dt * r,
                    Err(e) => err = Some(e),
                }
            }
        }
        None => last_m = Some(m.clone()),
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let last = last_m.expect("final measure observed");
    Ok(total + dt * model.reward(last.weights(), final_action.components())? + model.terminal(last.weights())?)
}

/// Mean of replicated path values.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub values: Vec<f64>,
}

impl McEstimate {
    /// Summary statistics of per-replication values, aggregated in index order.
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_error = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, values }
    }
}

/// Sequential Monte-Carlo estimate of `V^N_pi(m0)`; replication `r` uses stream `(seed, r)`.
pub fn evaluate_value_mc<P: Policy + ?Sized>(
    model: &ModelSpec,
    n: usize,
    policy: &P,
    m0: &OccupancyMeasure,
    horizon: f64,
    replications: usize,
    seed: u64,
) -> Result<McEstimate> {
    if replications == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let values = (0..replications as u64)
        .map(|r| replication_value(model, n, policy, m0, horizon, seed, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(McEstimate::from_values(values))
}

/// Affine interpolation of the slot measures at rescaled time `t`.
pub fn interpolate_path(traj: &Trajectory, t: f64) -> Result<Vec<f64>> {
    let end = traj.covered_horizon();
    if !(t >= 0.0 && t <= end + 1e-12) {
        return Err(Error::TimeOutOfRange { t, horizon: end });
    }
    let x = (t * traj.n as f64).max(0.0);
    let k = (x.floor() as usize).min(traj.slots());
    let frac = x - k as f64;
    let a = traj.measures[k].weights();
    if k == traj.slots() || frac <= 0.0 {
        return Ok(a.to_vec());
    }
    let b = traj.measures[k + 1].weights();
    Ok(a.iter().zip(b).map(|(x, y)| x + frac * (y - x)).collect())
}

/// A piecewise-linear deterministic path sampled on an increasing time grid.
pub trait SampledPath {
    fn times(&self) -> &[f64];
    fn point(&self, i: usize) -> &[f64];

    fn at(&self, t: f64) -> Vec<f64> {
        let times = self.times();
        let i = times.partition_point(|&s| s <= t);
        if i == 0 {
            return self.point(0).to_vec();
        }
        if i >= times.len() {
            return self.point(times.len() - 1).to_vec();
        }
        let (t0, t1) = (times[i - 1], times[i]);
        let w = (t - t0) / (t1 - t0);
        self.point(i - 1).iter().zip(self.point(i)).map(|(a, b)| a + w * (b - a)).collect()
    }
}

/// Sup over `[0, H I(N)]` of the Euclidean distance between the interpolated
/// trajectory and a sampled deterministic path; both are affine between the
/// union of their sample times, so the maximum over the union grid is exact.
pub fn sup_distance<F: SampledPath + ?Sized>(traj: &Trajectory, flow: &F, flow_horizon: f64) -> Result<f64> {
    if (traj.horizon - flow_horizon).abs() > 1e-9 {
        return Err(Error::MismatchedHorizon(traj.horizon, flow_horizon));
    }
    let end = traj.covered_horizon();
    let mut times: Vec<f64> = (0..=traj.slots()).map(|k| traj.time(k)).collect();
    times.extend(flow.times().iter().copied().filter(|&t| t <= end));
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut best = 0.0f64;
    for t in times {
        let d = euclidean(&interpolate_path(traj, t)?, &flow.at(t));
        best = best.max(d);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Object-level simulation (exchangeability diagnostics)

/// Per-object transition law. `probs` receives the distribution of the next
/// state of object `label` currently in `state`.
pub trait ObjectKernel {
    fn num_states(&self) -> usize;
    fn probabilities(&self, label: usize, state: usize, m: &[f64], a: &[f64], probs: &mut [f64]) -> Result<()>;
}

/// The model's own kernel: every object moves `i -> j` with probability `R_ij / N`.
pub struct BernoulliKernel<'a> {
    model: &'a ModelSpec,
    n: usize,
}

impl<'a> BernoulliKernel<'a> {
    pub fn new(model: &'a ModelSpec, n: usize) -> Result<Self> {
        check_simulable(model, n)?;
        Ok(Self { model, n })
    }
}

impl ObjectKernel for BernoulliKernel<'_> {
    fn num_states(&self) -> usize {
        self.model.num_states()
    }

    fn probabilities(&self, _label: usize, state: usize, m: &[f64], a: &[f64], probs: &mut [f64]) -> Result<()> {
        let mut rates = Vec::new();
        self.model.eval_rates(m, a, &mut rates)?;
        probs.iter_mut().for_each(|p| *p = 0.0);
        let mut out = 0.0;
        for (r, v) in self.model.rates().iter().zip(&rates) {
            if r.from == state {
                probs[r.to] = v / self.n as f64;
                out += probs[r.to];
            }
        }
        probs[state] = 1.0 - out;
        Ok(())
    }
}

/// Advance every object once; `states[label]` holds the state of object `label`.
pub fn object_step<K: ObjectKernel + ?Sized, R: Rng + ?Sized>(
    kernel: &K,
    states: &mut [usize],
    a: &ActionValue,
    rng: &mut R,
) -> Result<usize> {
    let s = kernel.num_states();
    let m = OccupancyMeasure::from_states(states, s)?;
    let mut probs = vec![0.0; s];
    let mut moved = 0;
    let snapshot = states.to_vec();
    for (label, &state) in snapshot.iter().enumerate() {
        kernel.probabilities(label, state, m.weights(), a.components(), &mut probs)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = state;
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        if next != state {
            moved += 1;
        }
        states[label] = next;
    }
    Ok(moved)
}

/// Histogram of `M(k_slots)` (as object counts) over `trials` object-level runs.
pub fn occupancy_histogram<K: ObjectKernel + ?Sized, P: Policy + ?Sized, R: Rng + ?Sized>(
    kernel: &K,
    initial_states: &[usize],
    policy: &P,
    k_slots: usize,
    trials: usize,
    rng: &mut R,
) -> Result<BTreeMap<Vec<usize>, u64>> {
    let s = kernel.num_states();
    let n = initial_states.len();
    let mut hist = BTreeMap::new();
    for _ in 0..trials {
        let mut states = initial_states.to_vec();
        for k in 0..k_slots {
            let m = OccupancyMeasure::from_states(&states, s)?;
            let a = policy.action(k, k as f64 / n as f64, &m)?;
            object_step(kernel, &mut states, &a, rng)?;
        }
        let counts = OccupancyMeasure::from_states(&states, s)?.counts()?;
        *hist.entry(counts).or_insert(0u64) += 1;
    }
    Ok(hist)
}

/// Two-sample chi-square homogeneity statistic over the union of bins; returns
/// `(statistic, degrees of freedom)`.
pub fn chi_square_two_sample(a: &BTreeMap<Vec<usize>, u64>, b: &BTreeMap<Vec<usize>, u64>) -> (f64, usize) {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let (na, nb) = (na as f64, nb as f64);
    let mut keys: Vec<&Vec<usize>> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let ka = (nb / na).sqrt();
    let kb = (na / nb).sqrt();
    let mut stat = 0.0;
    for key in &keys {
        let oa = *a.get(*key).unwrap_or(&0) as f64;
        let ob = *b.get(*key).unwrap_or(&0) as f64;
        let d = ka * oa - kb * ob;
        stat += d * d / (oa + ob);
    }
    (stat, keys.len().saturating_sub(1))
}
