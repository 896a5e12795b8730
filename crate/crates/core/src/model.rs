//! Declarative population models.
//!
//! Each of N objects sits in one of `S` states. In one time slot an object in
//! state `i` moves to `j != i` with probability `R_ij(m, a) / N`, independently
//! of the others, where `m` is the current occupancy measure and `a` the
//! controller's action. One slot lasts `1/N` units of rescaled time and earns
//! `r(m, a) / N`; a terminal reward `g(m)` is collected at the horizon.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use smallvec::SmallVec;

use crate::action::ActionSpace;
use crate::error::{Error, Result};
use crate::expr::{Expr, Program, Scope};
use crate::occupancy::{ActionValue, OccupancyMeasure};

/// Relative slack allowed when comparing row sums against the declared cap.
const CAP_TOL: f64 = 1e-12;

/// Plain description of a model, as read from or written to a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDef {
    pub states: Vec<String>,
    pub actions: ActionSpace,
    pub params: BTreeMap<String, f64>,
    /// `(from, to, expr)`; pairs not listed have rate zero.
    pub rates: Vec<(String, String, Expr)>,
    pub reward: Expr,
    pub terminal_reward: Option<Expr>,
    pub rate_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rate {
    pub from: usize,
    pub to: usize,
    pub expr: Expr,
    program: Program,
}

/// A validated, compiled model. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    def: ModelDef,
    rates: Vec<Rate>,
    reward: Program,
    terminal: Option<Program>,
}

impl ModelSpec {
    pub fn new(def: ModelDef) -> Result<Self> {
        if def.states.is_empty() {
            return Err(Error::InvalidModel("model needs at least one state".into()));
        }
        for (i, s) in def.states.iter().enumerate() {
            if def.states[..i].contains(s) {
                return Err(Error::DuplicateState(s.clone()));
            }
        }
        if !(def.rate_cap >= 0.0) || !def.rate_cap.is_finite() {
            return Err(Error::NegativeRateCap(def.rate_cap));
        }
        let scope = Scope {
            states: &def.states,
            params: &def.params,
            action_arity: def.actions.arity(),
        };
        let lookup = |name: &str| {
            def.states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::UnknownIdentifier(name.to_string()))
        };
        let mut rates = Vec::with_capacity(def.rates.len());
        for (from, to, expr) in &def.rates {
            let (from, to) = (lookup(from)?, lookup(to)?);
            if from == to {
                return Err(Error::InvalidModel(format!("self-rate on state `{}`", def.states[from])));
            }
            if rates.iter().any(|r: &Rate| r.from == from && r.to == to) {
                return Err(Error::InvalidModel(format!(
                    "duplicate rate {} -> {}",
                    def.states[from], def.states[to]
                )));
            }
            rates.push(Rate {
                from,
                to,
                expr: expr.clone(),
                program: expr.compile(&scope)?,
            });
        }
        let reward = def.reward.compile(&scope)?;
        // g(m) cannot see the action
        let terminal_scope = Scope { action_arity: 0, ..scope };
        let terminal = match &def.terminal_reward {
            Some(e) => Some(e.compile(&terminal_scope)?),
            None => None,
        };
        Ok(Self {
            def,
            rates,
            reward,
            terminal,
        })
    }

    pub fn builder(states: &[&str]) -> ModelBuilder {
        ModelBuilder::new(states)
    }

    pub fn def(&self) -> &ModelDef {
        &self.def
    }

    pub fn num_states(&self) -> usize {
        self.def.states.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.def.states
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.def.states.iter().position(|s| s == name)
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.def.actions
    }

    pub fn rate_cap(&self) -> f64 {
        self.def.rate_cap
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.def.params
    }

    pub fn rates(&self) -> &[Rate] {
        &self.rates
    }

    pub fn has_terminal_reward(&self) -> bool {
        self.terminal.is_some()
    }

    /// Evaluate every declared rate into `out` (same order as [`rates`](Self::rates)),
    /// checking nonnegativity and the rate cap.
    pub fn eval_rates(&self, m: &[f64], a: &[f64], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let mut row: SmallVec<[f64; 32]> = SmallVec::from_elem(0.0, self.num_states());
        for r in &self.rates {
            let v = r.program.eval(m, a)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("rate {} -> {}", r.from, r.to)));
            }
            if v < 0.0 {
                return Err(Error::NegativeRate {
                    from: r.from,
                    to: r.to,
                    value: v,
                });
            }
            row[r.from] += v;
            out.push(v);
        }
        let cap = self.def.rate_cap;
        for (state, &row_sum) in row.iter().enumerate() {
            if row_sum > cap * (1.0 + CAP_TOL) + CAP_TOL {
                return Err(Error::RateCapExceeded { state, row_sum, cap });
            }
        }
        Ok(())
    }

    /// Rates without the nonnegativity and cap checks, for integrators whose
    /// intermediate stages may sit a rounding error outside the simplex.
    pub fn eval_rates_raw(&self, m: &[f64], a: &[f64], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for r in &self.rates {
            let v = r.program.eval(m, a)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("rate {} -> {}", r.from, r.to)));
            }
            out.push(v);
        }
        Ok(())
    }

    /// Generator matrix: off-diagonal rates, diagonal set so rows sum to zero.
    pub fn rate_matrix(&self, m: &OccupancyMeasure, a: &ActionValue) -> Result<Vec<Vec<f64>>> {
        let s = self.num_states();
        let mut vals = Vec::new();
        self.eval_rates(m.weights(), a.components(), &mut vals)?;
        let mut r = vec![vec![0.0; s]; s];
        for (rate, v) in self.rates.iter().zip(&vals) {
            r[rate.from][rate.to] = *v;
        }
        for (i, row) in r.iter_mut().enumerate() {
            let off: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum();
            row[i] = -off;
        }
        Ok(r)
    }

    pub fn reward(&self, m: &[f64], a: &[f64]) -> Result<f64> {
        self.reward.eval(m, a)
    }

    /// Terminal reward `g(m)`; zero when the model declares none.
    pub fn terminal(&self, m: &[f64]) -> Result<f64> {
        match &self.terminal {
            Some(p) => p.eval(m, &[]),
            None => Ok(0.0),
        }
    }

    /// Same model with states visited in `order` (new index `k` is old state `order[k]`).
    pub fn permuted(&self, order: &[usize]) -> Result<ModelSpec> {
        let s = self.num_states();
        let mut seen = vec![false; s];
        if order.len() != s || order.iter().any(|&i| i >= s || core::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidArgument("state order must be a permutation".into()));
        }
        let mut def = self.def.clone();
        def.states = order.iter().map(|&i| self.def.states[i].clone()).collect();
        ModelSpec::new(def)
    }
}

/// Convenience constructor for models written in code.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    states: Vec<String>,
    actions: Option<ActionSpace>,
    params: BTreeMap<String, f64>,
    rates: Vec<(String, String, String)>,
    reward: String,
    terminal: Option<String>,
    rate_cap: Option<f64>,
}

impl ModelBuilder {
    pub fn new(states: &[&str]) -> Self {
        Self {
            states: states.iter().map(|s| s.to_string()).collect(),
            actions: None,
            params: BTreeMap::new(),
            rates: Vec::new(),
            reward: "0".into(),
            terminal: None,
            rate_cap: None,
        }
    }

    pub fn actions(mut self, space: ActionSpace) -> Self {
        self.actions = Some(space);
        self
    }

    pub fn param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.into(), value);
        self
    }

    pub fn rate(mut self, from: &str, to: &str, expr: &str) -> Self {
        self.rates.push((from.into(), to.into(), expr.into()));
        self
    }

    pub fn reward(mut self, expr: &str) -> Self {
        self.reward = expr.into();
        self
    }

    pub fn terminal(mut self, expr: &str) -> Self {
        self.terminal = Some(expr.into());
        self
    }

    pub fn rate_cap(mut self, cap: f64) -> Self {
        self.rate_cap = Some(cap);
        self
    }

    pub fn build(self) -> Result<ModelSpec> {
        let actions = match self.actions {
            Some(a) => a,
            None => ActionSpace::finite(vec![0.0])?,
        };
        let mut rates = Vec::with_capacity(self.rates.len());
        for (from, to, src) in &self.rates {
            rates.push((from.clone(), to.clone(), Expr::parse(src)?));
        }
        ModelSpec::new(ModelDef {
            states: self.states,
            actions,
            params: self.params,
            rates,
            reward: Expr::parse(&self.reward)?,
            terminal_reward: self.terminal.as_deref().map(Expr::parse).transpose()?,
            rate_cap: self.rate_cap.unwrap_or(1.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pricing() -> ModelSpec {
        ModelSpec::builder(&["U", "S"])
            .actions(ActionSpace::finite(vec![0.0, 1.0]).unwrap())
            .rate("U", "S", "1 - a")
            .rate("S", "U", "a")
            .reward("m[S] * a")
            .rate_cap(1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn two_state_document_builds() {
        let m = pricing();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.rates().len(), 2);
    }

    #[test]
    fn pricing_rate_matrix_at_zero_action() {
        let m = pricing();
        let x = OccupancyMeasure::new(vec![0.5, 0.5]).unwrap();
        let r = m.rate_matrix(&x, &ActionValue::scalar(0.0)).unwrap();
        assert_eq!(r, vec![vec![-1.0, 1.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn zero_rates_give_zero_matrix() {
        let m = ModelSpec::builder(&["A", "B", "C"]).rate("A", "B", "0").build().unwrap();
        let x = OccupancyMeasure::new(vec![0.2, 0.3, 0.5]).unwrap();
        let r = m.rate_matrix(&x, &ActionValue::scalar(0.0)).unwrap();
        assert!(r.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            ModelSpec::builder(&["A", "A"]).build(),
            Err(Error::DuplicateState(_))
        ));
        assert!(matches!(
            ModelSpec::builder(&["A", "B"]).rate_cap(-1.0).build(),
            Err(Error::NegativeRateCap(_))
        ));
        assert!(matches!(
            ModelSpec::builder(&["A", "B"]).rate("A", "B", "m[X]").build(),
            Err(Error::UnknownIdentifier(_))
        ));
        assert!(matches!(
            ModelSpec::builder(&["A", "B"]).rate("A", "Z", "1").build(),
            Err(Error::UnknownIdentifier(_))
        ));
        assert!(matches!(
            ModelSpec::builder(&["A", "B"]).rate("A", "B", "1 +").build(),
            Err(Error::Syntax { .. })
        ));
        assert!(ModelSpec::builder(&["A", "B"]).rate("A", "A", "1").build().is_err());
    }

    #[test]
    fn rate_checks() {
        let m = ModelSpec::builder(&["A", "B"]).rate("A", "B", "0 - 1").build().unwrap();
        let x = OccupancyMeasure::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            m.rate_matrix(&x, &ActionValue::scalar(0.0)),
            Err(Error::NegativeRate { .. })
        ));
        let m = ModelSpec::builder(&["A", "B"]).rate("A", "B", "2").rate_cap(1.0).build().unwrap();
        assert!(matches!(
            m.rate_matrix(&x, &ActionValue::scalar(0.0)),
            Err(Error::RateCapExceeded { .. })
        ));
    }

    #[test]
    fn permuting_states_keeps_rates_attached() {
        let m = pricing();
        let p = m.permuted(&[1, 0]).unwrap();
        assert_eq!(p.state_names(), &["S".to_string(), "U".to_string()]);
        let x = OccupancyMeasure::new(vec![0.5, 0.5]).unwrap();
        let r = p.rate_matrix(&x, &ActionValue::scalar(0.0)).unwrap();
        assert_eq!(r, vec![vec![0.0, 0.0], vec![1.0, -1.0]]);
    }
}
