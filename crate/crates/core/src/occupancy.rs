//! Occupancy measures (points of the probability simplex) and action values.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;
const GRAIN_TOL: f64 = 1e-9;

/// Proportions of objects in each state, optionally known to be multiples of `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    weights: Vec<f64>,
    grain: Option<usize>,
}

impl OccupancyMeasure {
    /// A point of the simplex; weights must be nonnegative and sum to one.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure(format!("negative or non-finite weight in {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {sum}")));
        }
        Ok(Self { weights, grain: None })
    }

    /// A grained measure `counts / n`.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let n: usize = counts.iter().sum();
        if n == 0 {
            return Err(Error::InvalidMeasure("zero objects".into()));
        }
        let weights = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Self { weights, grain: Some(n) })
    }

    /// Empirical measure of a vector of object states.
    pub fn from_states(states: &[usize], num_states: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument("need at least one object".into()));
        }
        let mut counts = vec![0usize; num_states];
        for &s in states {
            if s >= num_states {
                return Err(Error::InvalidIndex {
                    index: s,
                    states: num_states,
                });
            }
            counts[s] += 1;
        }
        Self::from_counts(&counts)
    }

    /// Mark as grained to `n` after checking that every weight is a multiple of `1/n`.
    pub fn with_grain(mut self, n: usize) -> Result<Self> {
        if n == 0 || !is_grained(&self.weights, n) {
            return Err(Error::NotGrained(n));
        }
        self.weights = self.counts_for(n).iter().map(|&c| c as f64 / n as f64).collect();
        self.grain = Some(n);
        Ok(self)
    }

    /// Nearest grained measure by largest-remainder rounding (ties to lower index).
    pub fn round_to_grain(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("grain must be positive".into()));
        }
        let scaled: Vec<f64> = self.weights.iter().map(|w| w * n as f64).collect();
        let mut counts: Vec<usize> = scaled.iter().map(|x| (x + GRAIN_TOL).floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&i, &j| {
            let fi = scaled[i] - counts[i] as f64;
            let fj = scaled[j] - counts[j] as f64;
            fj.partial_cmp(&fi).unwrap_or(core::cmp::Ordering::Equal).then(i.cmp(&j))
        });
        for &i in order.iter().take(n.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        Self::from_counts(&counts)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grain(&self) -> Option<usize> {
        self.grain
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integer object counts; requires a grain.
    pub fn counts(&self) -> Result<Vec<usize>> {
        let n = self.grain.ok_or(Error::NotGrained(0))?;
        Ok(self.counts_for(n))
    }

    fn counts_for(&self, n: usize) -> Vec<usize> {
        self.weights.iter().map(|w| (w * n as f64).round() as usize).collect()
    }

    pub fn distance(&self, other: &OccupancyMeasure) -> f64 {
        euclidean(&self.weights, &other.weights)
    }
}

impl Index<usize> for OccupancyMeasure {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

pub(crate) fn is_grained(weights: &[f64], n: usize) -> bool {
    weights.iter().all(|w| {
        let x = w * n as f64;
        (x - x.round()).abs() <= GRAIN_TOL
    }) && {
        let total: f64 = weights.iter().map(|w| (w * n as f64).round()).sum();
        total as usize == n
    }
}

/// Occupancy measure of a vector of object states (weight `i` = count of `i` / N).
pub fn occupancy_from_states(states: &[usize], num_states: usize) -> Result<OccupancyMeasure> {
    OccupancyMeasure::from_states(states, num_states)
}

/// Action components; scalar actions have length one.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionValue(pub Vec<f64>);

impl ActionValue {
    pub fn scalar(v: f64) -> Self {
        ActionValue(vec![v])
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Euclidean metric on components.
    pub fn distance(&self, other: &ActionValue) -> f64 {
        euclidean(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for ActionValue {
    fn from(v: Vec<f64>) -> Self {
        ActionValue(v)
    }
}

pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}
