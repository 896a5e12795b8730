//! Exact backward induction over the occupancy measures reachable with N objects.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::model::ModelSpec;
use crate::occupancy::{ActionValue, OccupancyMeasure};
use crate::sim::{horizon_slots, Policy};

pub const DEFAULT_ATOM_CAP: usize = 2_000_000;

/// Successor probabilities below this are dropped (and the rest renormalized).
pub const PRUNE: f64 = 1e-15;

/// The grained measures `P^N(S)`, in lexicographic order of their counts.
#[derive(Debug, Clone)]
pub struct OccupancyIndex {
    lattice: Lattice,
}

impl OccupancyIndex {
    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn population(&self) -> usize {
        self.lattice.resolution()
    }

    pub fn num_states(&self) -> usize {
        self.lattice.dim()
    }

    pub fn counts(&self, index: usize) -> Vec<usize> {
        self.lattice.unrank(index)
    }

    pub fn atom(&self, index: usize) -> OccupancyMeasure {
        OccupancyMeasure::from_counts(&self.counts(index)).expect("lattice points are valid counts")
    }

    pub fn index_of_counts(&self, counts: &[usize]) -> Option<usize> {
        self.lattice.rank(counts)
    }

    pub fn index_of(&self, m: &OccupancyMeasure) -> Result<usize> {
        let n = self.population();
        if m.len() != self.num_states() {
            return Err(Error::InvalidMeasure(format!(
                "measure has {} states, index has {}",
                m.len(),
                self.num_states()
            )));
        }
        let counts = match m.grain() {
            Some(g) if g == n => m.counts()?,
            _ => m.clone().with_grain(n)?.counts()?,
        };
        self.lattice.rank(&counts).ok_or(Error::NotGrained(n))
    }

    pub fn atoms(&self) -> Vec<OccupancyMeasure> {
        self.lattice
            .points()
            .iter()
            .map(|c| OccupancyMeasure::from_counts(c).expect("lattice points are valid counts"))
            .collect()
    }
}

pub fn enumerate_occupancy(n: usize, s: usize) -> Result<OccupancyIndex> {
    enumerate_occupancy_with_cap(n, s, DEFAULT_ATOM_CAP)
}

pub fn enumerate_occupancy_with_cap(n: usize, s: usize, cap: usize) -> Result<OccupancyIndex> {
    Ok(OccupancyIndex {
        lattice: Lattice::new(n, s, cap)?,
    })
}

/// `ln k!` for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Distribution of where `c` objects from one origin land, as
/// `(destination counts, probability)` over the listed destinations.
fn multinomial(c: usize, probs: &[(usize, f64)], ln_fact: &[f64], out: &mut Vec<(Vec<usize>, f64)>) {
    out.clear();
    let k = probs.len();
    let mut cur = vec![0usize; k];
    fn rec(
        j: usize,
        left: usize,
        logp: f64,
        probs: &[(usize, f64)],
        ln_fact: &[f64],
        cur: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        let (_, p) = probs[j];
        if j + 1 == probs.len() {
            if left > 0 && p == 0.0 {
                return;
            }
            cur[j] = left;
            let lp = logp - ln_fact[left] + if left > 0 { left as f64 * p.ln() } else { 0.0 };
            out.push((cur.clone(), lp));
            return;
        }
        let upper = if p == 0.0 { 0 } else { left };
        for x in 0..=upper {
            cur[j] = x;
            let lp = logp - ln_fact[x] + if x > 0 { x as f64 * p.ln() } else { 0.0 };
            rec(j + 1, left - x, lp, probs, ln_fact, cur, out);
        }
    }
    rec(0, c, ln_fact[c], probs, ln_fact, &mut cur, out);
    for (_, lp) in out.iter_mut() {
        *lp = lp.exp();
    }
}

/// Exact successor distribution of `counts` under action `a`, as
/// `(atom index, probability)` sorted by index.
pub fn occupancy_kernel(
    model: &ModelSpec,
    index: &OccupancyIndex,
    counts: &[usize],
    a: &ActionValue,
) -> Result<Vec<(usize, f64)>> {
    KernelBuilder::new(model, index)?.kernel(counts, a)
}

struct KernelBuilder<'a> {
    model: &'a ModelSpec,
    index: &'a OccupancyIndex,
    ln_fact: Vec<f64>,
    rates: Vec<f64>,
}

impl<'a> KernelBuilder<'a> {
    fn new(model: &'a ModelSpec, index: &'a OccupancyIndex) -> Result<Self> {
        let n = index.population();
        if model.rate_cap() > n as f64 {
            return Err(Error::NotSimulable {
                rate_cap: model.rate_cap(),
                n,
            });
        }
        if index.num_states() != model.num_states() {
            return Err(Error::InvalidArgument("index and model disagree on the state count".into()));
        }
        Ok(Self {
            model,
            index,
            ln_fact: ln_factorials(n),
            rates: Vec::new(),
        })
    }

    fn kernel(&mut self, counts: &[usize], a: &ActionValue) -> Result<Vec<(usize, f64)>> {
        let n = self.index.population();
        let s = self.index.num_states();
        let m: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        self.model.eval_rates(&m, a.components(), &mut self.rates)?;
        let mut partial: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        partial.insert(vec![0; s], 1.0);
        let mut split = Vec::new();
        for (origin, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut probs: Vec<(usize, f64)> = Vec::new();
            let mut out = 0.0;
            for (r, &v) in self.model.rates().iter().zip(&self.rates) {
                if r.from == origin && v > 0.0 {
                    let p = v / n as f64;
                    probs.push((r.to, p));
                    out += p;
                }
            }
            probs.push((origin, (1.0 - out).max(0.0)));
            multinomial(c, &probs, &self.ln_fact, &mut split);
            let mut next = BTreeMap::new();
            for (base, pb) in &partial {
                for (dest, pd) in &split {
                    let p = pb * pd;
                    if p < PRUNE {
                        continue;
                    }
                    let mut key = base.clone();
                    for (&(state, _), &x) in probs.iter().zip(dest) {
                        key[state] += x;
                    }
                    *next.entry(key).or_insert(0.0) += p;
                }
            }
            partial = next;
        }
        let total: f64 = partial.values().sum();
        let mut out: Vec<(usize, f64)> = partial
            .into_iter()
            .map(|(key, p)| (self.index.index_of_counts(&key).expect("successor is an atom"), p / total))
            .collect();
        out.sort_by_key(|&(i, _)| i);
        Ok(out)
    }
}

/// `U^N(m, k)` for every atom and slot, with the maximizing action index.
#[derive(Debug, Clone)]
pub struct DPSolution {
    pub index: OccupancyIndex,
    pub horizon: f64,
    /// `values[k][atom]`, `k = 0..=H`.
    pub values: Vec<Vec<f64>>,
    /// `argmax[k][atom]` indexes the model's action grid.
    pub argmax: Vec<Vec<u32>>,
    pub actions: Vec<ActionValue>,
}

impl DPSolution {
    pub fn slots(&self) -> usize {
        self.values.len() - 1
    }

    pub fn population(&self) -> usize {
        self.index.population()
    }

    pub fn action(&self, slot: usize, atom: usize) -> &ActionValue {
        &self.actions[self.argmax[slot][atom] as usize]
    }
}

/// Precomputed slot-independent data: reward and successor law for every (atom, action).
struct Tables {
    rewards: Vec<Vec<f64>>,
    kernels: Vec<Vec<Vec<(usize, f64)>>>,
    terminal: Vec<f64>,
}

fn tables(model: &ModelSpec, index: &OccupancyIndex, with_kernels: bool) -> Result<Tables> {
    let actions = model.actions().actions();
    let mut kb = KernelBuilder::new(model, index)?;
    let mut rewards = Vec::with_capacity(index.len());
    let mut kernels = Vec::with_capacity(index.len());
    let mut terminal = Vec::with_capacity(index.len());
    for i in 0..index.len() {
        let counts = index.counts(i);
        let m = OccupancyMeasure::from_counts(&counts)?;
        terminal.push(model.terminal(m.weights())?);
        let mut row = Vec::with_capacity(actions.len());
        let mut krow = Vec::new();
        for a in actions {
            row.push(model.reward(m.weights(), a.components())?);
            if with_kernels {
                krow.push(kb.kernel(&counts, a)?);
            }
        }
        rewards.push(row);
        kernels.push(krow);
    }
    Ok(Tables {
        rewards,
        kernels,
        terminal,
    })
}

fn bellman(t: &Tables, dt: f64, atom: usize, next: Option<&[f64]>) -> Result<(f64, u32)> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0u32;
    for (ai, &r) in t.rewards[atom].iter().enumerate() {
        let mut v = dt * r;
        match next {
            Some(u) => {
                for &(j, p) in &t.kernels[atom][ai] {
                    v += p * u[j];
                }
            }
            None => v += t.terminal[atom],
        }
        if v > best {
            best = v;
            arg = ai as u32;
        }
    }
    if !best.is_finite() {
        return Err(Error::NonFinite(format!("dynamic programming value at atom {atom}")));
    }
    Ok((best, arg))
}

/// Backward induction from `U(m, H) = max_a I r(m, a) + g(m)` down to slot 0.
pub fn backward_induction(model: &ModelSpec, n: usize, horizon: f64) -> Result<DPSolution> {
    backward_induction_with_cap(model, n, horizon, DEFAULT_ATOM_CAP)
}

pub fn backward_induction_with_cap(model: &ModelSpec, n: usize, horizon: f64, cap: usize) -> Result<DPSolution> {
    let index = enumerate_occupancy_with_cap(n, model.num_states(), cap)?;
    let h = horizon_slots(horizon, n);
    let dt = 1.0 / n as f64;
    let t = tables(model, &index, h > 0)?;
    let mut values = vec![Vec::new(); h + 1];
    let mut argmax = vec![Vec::new(); h + 1];
    for k in (0..=h).rev() {
        let mut vals = Vec::with_capacity(index.len());
        let mut args = Vec::with_capacity(index.len());
        for atom in 0..index.len() {
            let next = if k == h { None } else { Some(values[k + 1].as_slice()) };
            let (v, a) = bellman(&t, dt, atom, next)?;
            vals.push(v);
            args.push(a);
        }
        values[k] = vals;
        argmax[k] = args;
    }
    Ok(DPSolution {
        index,
        horizon,
        values,
        argmax,
        actions: model.actions().actions().to_vec(),
    })
}

/// `V^N_*(m0)` keeping only two slabs of values.
pub fn optimal_value(model: &ModelSpec, n: usize, horizon: f64, m0: &OccupancyMeasure, cap: usize) -> Result<f64> {
    let index = enumerate_occupancy_with_cap(n, model.num_states(), cap)?;
    let start = index.index_of(m0)?;
    let h = horizon_slots(horizon, n);
    let dt = 1.0 / n as f64;
    let t = tables(model, &index, h > 0)?;
    let mut next: Vec<f64> = (0..index.len())
        .map(|atom| bellman(&t, dt, atom, None).map(|x| x.0))
        .collect::<Result<_>>()?;
    let mut cur = vec![0.0; index.len()];
    for _ in 0..h {
        for atom in 0..index.len() {
            cur[atom] = bellman(&t, dt, atom, Some(&next))?.0;
        }
        core::mem::swap(&mut cur, &mut next);
    }
    Ok(next[start])
}

/// `V^N_*(m0) = U^N(m0, 0)`.
pub fn dp_value(sol: &DPSolution, m0: &OccupancyMeasure) -> Result<f64> {
    Ok(sol.values[0][sol.index.index_of(m0)?])
}

/// The optimal Markov policy read from a solution.
pub struct DpPolicy<'a>(pub &'a DPSolution);

impl Policy for DpPolicy<'_> {
    fn action(&self, slot: usize, _t: f64, m: &OccupancyMeasure) -> Result<ActionValue> {
        let sol = self.0;
        if slot > sol.slots() {
            return Err(Error::TimeOutOfRange {
                t: slot as f64 / sol.population() as f64,
                horizon: sol.horizon,
            });
        }
        Ok(sol.action(slot, sol.index.index_of(m)?).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionSpace;

    fn toy() -> ModelSpec {
        ModelSpec::builder(&["A", "B"])
            .actions(ActionSpace::finite(vec![0.0, 1.0]).unwrap())
            .rate("A", "B", "a")
            .reward("m[B]")
            .build()
            .unwrap()
    }

    #[test]
    fn atoms() {
        let idx = enumerate_occupancy(2, 2).unwrap();
        let w: Vec<Vec<f64>> = idx.atoms().iter().map(|m| m.weights().to_vec()).collect();
        assert_eq!(w, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_eq!(enumerate_occupancy(1, 5).unwrap().len(), 5);
        assert_eq!(enumerate_occupancy(10, 4).unwrap().len(), 286);
        assert!(matches!(
            enumerate_occupancy_with_cap(50, 6, 1000),
            Err(Error::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn binomial_kernel_by_hand() {
        let model = ModelSpec::builder(&["A", "B"]).rate("A", "B", "1").build().unwrap();
        let idx = enumerate_occupancy(2, 2).unwrap();
        let k = occupancy_kernel(&model, &idx, &[2, 0], &ActionValue::scalar(0.0)).unwrap();
        let by_counts: Vec<(Vec<usize>, f64)> = k.iter().map(|&(i, p)| (idx.counts(i), p)).collect();
        assert_eq!(
            by_counts,
            vec![(vec![0, 2], 0.25), (vec![1, 1], 0.5), (vec![2, 0], 0.25)]
        );
    }

    #[test]
    fn zero_rates_give_point_mass() {
        let model = ModelSpec::builder(&["A", "B", "C"]).rate("A", "B", "0").build().unwrap();
        let idx = enumerate_occupancy(4, 3).unwrap();
        let k = occupancy_kernel(&model, &idx, &[1, 2, 1], &ActionValue::scalar(0.0)).unwrap();
        assert_eq!(k, vec![(idx.index_of_counts(&[1, 2, 1]).unwrap(), 1.0)]);
    }

    #[test]
    fn toy_value_and_argmax() {
        let sol = backward_induction(&toy(), 1, 1.0).unwrap();
        let start = OccupancyMeasure::from_counts(&[1, 0]).unwrap();
        assert_eq!(dp_value(&sol, &start).unwrap(), 1.0);
        assert_eq!(sol.action(0, sol.index.index_of(&start).unwrap()), &ActionValue::scalar(1.0));
        assert_eq!(optimal_value(&toy(), 1, 1.0, &start, 100).unwrap(), 1.0);
    }

    #[test]
    fn zero_reward_solves_to_zero() {
        let model = ModelSpec::builder(&["A", "B"]).rate("A", "B", "0.5").build().unwrap();
        let sol = backward_induction(&model, 6, 2.0).unwrap();
        assert!(sol.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn ungrained_start_is_rejected() {
        let sol = backward_induction(&toy(), 4, 1.0).unwrap();
        let m = OccupancyMeasure::new(vec![0.3, 0.7]).unwrap();
        assert!(matches!(dp_value(&sol, &m), Err(Error::NotGrained(4))));
    }
}
