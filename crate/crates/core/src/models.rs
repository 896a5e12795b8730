//! Built-in models: utility pricing, a viral worm choosing when to kill
//! infected nodes, and a broker spreading jobs over clusters of volunteer
//! machines.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::action::{ActionDomain, ActionFunction, ActionSpace};
use crate::error::{Error, Result};
use crate::meanfield::{flow_value, integrate_flow, FlowPath};
use crate::model::{ModelBuilder, ModelSpec};

/// Two states `U`, `S`; price `a` in {0, 1}; `x' = 1 - x - a`; reward `x a`.
pub fn pricing_model() -> ModelSpec {
    ModelSpec::builder(&["U", "S"])
        .actions(ActionSpace::finite(vec![0.0, 1.0]).expect("static action set"))
        .rate("U", "S", "1 - a")
        .rate("S", "U", "a")
        .reward("m[S] * a")
        .rate_cap(1.0)
        .build()
        .expect("pricing model is well formed")
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirusParams {
    /// Infection rate.
    pub beta: f64,
    /// Immunization rate of susceptibles.
    pub q: f64,
    /// Healing rate of infectives.
    pub b: f64,
    /// Largest kill rate.
    pub v_max: f64,
    pub horizon: f64,
    /// Weight of `I^2` in the running damage; `None` means `1 / horizon`.
    pub damage_weight: Option<f64>,
    /// Extra running damage per unit of dead mass.
    pub dead_weight: f64,
    /// Grid points on `[0, v_max]`.
    pub action_steps: usize,
    /// Initial `(S, I, R, D)`.
    pub initial: [f64; 4],
}

impl Default for VirusParams {
    fn default() -> Self {
        Self {
            beta: 0.6,
            q: 0.1,
            b: 0.1,
            v_max: 1.0,
            horizon: 10.0,
            damage_weight: None,
            dead_weight: 0.0,
            action_steps: 2,
            initial: [0.65, 0.25, 0.10, 0.0],
        }
    }
}

impl VirusParams {
    pub fn weight(&self) -> f64 {
        self.damage_weight.unwrap_or(1.0 / self.horizon)
    }
}

/// States `S, I, R, D`; the worm kills infectives at rate `a in [0, v_max]`
/// and collects `D(T) + w int I^2`.
pub fn virus_model(p: &VirusParams) -> Result<ModelSpec> {
    let values = [p.beta, p.q, p.b, p.v_max, p.horizon, p.weight(), p.dead_weight];
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) || p.horizon == 0.0 || p.action_steps == 0 {
        return Err(Error::InvalidModel("virus parameters must be finite and nonnegative".into()));
    }
    let reward = if p.dead_weight != 0.0 {
        "w * m[I] * m[I] + kd * m[D]"
    } else {
        "w * m[I] * m[I]"
    };
    let mut builder = ModelSpec::builder(&["S", "I", "R", "D"])
        .actions(ActionSpace::interval(0.0, p.v_max, p.action_steps)?)
        .param("beta", p.beta)
        .param("q", p.q)
        .param("b", p.b)
        .param("w", p.weight())
        .rate("S", "I", "beta * m[I]")
        .rate("S", "R", "q")
        .rate("I", "R", "b")
        .rate("I", "D", "a")
        .reward(reward)
        .terminal("m[D]")
        .rate_cap((p.beta + p.q).max(p.b + p.v_max));
    if p.dead_weight != 0.0 {
        builder = builder.param("kd", p.dead_weight);
    }
    builder.build()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrokerParams {
    /// Buffer size per cluster; the cluster count is its length.
    pub buffers: Vec<usize>,
    /// Fraction of objects that are users.
    pub users: f64,
    /// Fraction of objects that are resources of each cluster.
    pub shares: Vec<f64>,
    pub p_send: f64,
    pub p_inactive: f64,
    pub p_on: f64,
    pub service: Vec<f64>,
    pub p_break: f64,
    pub p_repair: f64,
    pub loss_weight: f64,
    /// Resolution of the routing simplex.
    pub action_steps: usize,
    /// Initial fraction of users that are on.
    pub initial_on: f64,
}

impl Default for BrokerParams {
    fn default() -> Self {
        Self {
            buffers: vec![5, 5],
            users: 0.5,
            shares: vec![0.25, 0.25],
            p_send: 0.5,
            p_inactive: 0.2,
            p_on: 0.3,
            service: vec![1.0, 0.5],
            p_break: 0.05,
            p_repair: 0.2,
            loss_weight: 1.0,
            action_steps: 4,
            initial_on: 0.5,
        }
    }
}

pub fn broker_queue_state(c: usize, j: usize) -> String {
    format!("q{}_{}", c + 1, j)
}

pub fn broker_broken_state(c: usize) -> String {
    format!("b{}", c + 1)
}

impl BrokerParams {
    pub fn clusters(&self) -> usize {
        self.buffers.len()
    }

    pub fn state_names(&self) -> Vec<String> {
        let mut names = vec![String::from("on"), String::from("off")];
        for (c, &jc) in self.buffers.iter().enumerate() {
            for j in 0..=jc {
                names.push(broker_queue_state(c, j));
            }
            names.push(broker_broken_state(c));
        }
        names
    }

    /// Users split by `initial_on`; every resource valid with an empty buffer.
    pub fn initial(&self) -> Vec<f64> {
        let mut m = vec![self.users * self.initial_on, self.users * (1.0 - self.initial_on)];
        for (c, &jc) in self.buffers.iter().enumerate() {
            m.push(self.shares[c]);
            m.extend(core::iter::repeat(0.0).take(jc + 1));
        }
        m
    }

    fn check(&self) -> Result<()> {
        let c = self.clusters();
        if c == 0 || self.shares.len() != c || self.service.len() != c {
            return Err(Error::InvalidModel("broker needs one share and one service rate per cluster".into()));
        }
        if self.buffers.iter().any(|&j| j == 0) || self.action_steps == 0 {
            return Err(Error::InvalidModel("broker buffers and action steps must be positive".into()));
        }
        let scalars = [
            self.users,
            self.p_send,
            self.p_inactive,
            self.p_on,
            self.p_break,
            self.p_repair,
            self.loss_weight,
            self.initial_on,
        ];
        if scalars
            .iter()
            .chain(&self.shares)
            .chain(&self.service)
            .any(|v| !v.is_finite() || *v < 0.0)
            || self.initial_on > 1.0
        {
            return Err(Error::InvalidModel("broker rates and fractions must be finite and nonnegative".into()));
        }
        if self.shares.iter().any(|&q| q == 0.0) {
            return Err(Error::InvalidModel("every cluster needs a positive share".into()));
        }
        let total = self.users + self.shares.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("user and cluster fractions sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Users `on/off`, and per cluster `c` the resources holding `j` jobs
/// (`q{c}_{j}`) plus the broken ones (`b{c}`). The action routes jobs over
/// the clusters; the reward is minus the backlog-and-loss cost.
pub fn broker_model(p: &BrokerParams) -> Result<ModelSpec> {
    p.check()?;
    let names = p.state_names();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut b = ModelBuilder::new(&refs)
        .actions(ActionSpace::new(ActionDomain::Simplex {
            dim: p.clusters(),
            steps: p.action_steps,
        })?)
        .param("ps", p.p_send)
        .param("pi", p.p_inactive)
        .param("po", p.p_on)
        .param("pb", p.p_break)
        .param("pv", p.p_repair)
        .param("gamma", p.loss_weight)
        .rate("on", "off", "pi")
        .rate("off", "on", "po");
    let mut backlog = Vec::new();
    let mut loss = Vec::new();
    let mut cap = p.p_inactive.max(p.p_on).max(p.p_repair);
    for (c, &jc) in p.buffers.iter().enumerate() {
        let share = format!("share{}", c + 1);
        let mu = format!("mu{}", c + 1);
        b = b.param(&share, p.shares[c]).param(&mu, p.service[c]);
        let arrival = format!("a[{c}] * ps * m[on] / {share}");
        let broken = broker_broken_state(c);
        for j in 0..=jc {
            let here = broker_queue_state(c, j);
            if j < jc {
                b = b.rate(&here, &broker_queue_state(c, j + 1), &arrival);
            }
            if j > 0 {
                b = b.rate(&here, &broker_queue_state(c, j - 1), &mu);
                backlog.push(format!("{j} * m[{here}]"));
            }
            b = b.rate(&here, &broken, "pb");
        }
        b = b.rate(&broken, &broker_queue_state(c, 0), "pv");
        loss.push(format!(
            "{arrival} * (m[{}] + m[{broken}])",
            broker_queue_state(c, jc)
        ));
        cap = cap.max(p.p_send / p.shares[c] + p.service[c] + p.p_break);
    }
    let backlog = backlog.join(" + ");
    let reward = format!(
        "0 - ({backlog} + gamma * ({} + pb * ({backlog})))",
        loss.join(" + ")
    );
    b.reward(&reward).rate_cap(cap).build()
}

/// The broker's limiting flow under `alpha` and its cost (minus the value).
pub fn broker_flow(p: &BrokerParams, alpha: &ActionFunction, horizon: f64, h: f64) -> Result<(FlowPath, f64)> {
    let model = broker_model(p)?;
    let flow = integrate_flow(&model, &p.initial(), alpha, horizon, h)?;
    let cost = -flow_value(&model, &flow)?;
    Ok((flow, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::drift_limit;
    use crate::occupancy::{ActionValue, OccupancyMeasure};
    use crate::validate::validate_model;

    #[test]
    fn pricing_drift_and_reward() {
        let model = pricing_model();
        let m = OccupancyMeasure::new(vec![0.75, 0.25]).unwrap();
        assert_eq!(drift_limit(&model, &m, &ActionValue::scalar(1.0)).unwrap()[1], -0.25);
        assert_eq!(model.reward(&[0.0, 1.0], &[1.0]).unwrap(), 1.0);
        assert!(validate_model(&model, 100, 0).is_ok());
    }

    #[test]
    fn virus_drift() {
        let model = virus_model(&VirusParams::default()).unwrap();
        let m = OccupancyMeasure::new(vec![0.9, 0.1, 0.0, 0.0]).unwrap();
        let f = drift_limit(&model, &m, &ActionValue::scalar(0.0)).unwrap();
        assert!((f[0] + 0.144).abs() < 1e-15);
        assert_eq!(f[3], 0.0);
        let r = model.rate_matrix(&OccupancyMeasure::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap(), &ActionValue::scalar(1.0)).unwrap();
        assert_eq!((r[0][1], r[0][2]), (0.0, 0.1));
        assert!(validate_model(&model, 200, 1).is_ok());
    }

    #[test]
    fn broker_shape() {
        let p = BrokerParams::default();
        let model = broker_model(&p).unwrap();
        assert_eq!(model.num_states(), 16);
        assert!(validate_model(&model, 50, 2).is_ok());
        let bad = BrokerParams {
            users: 0.6,
            ..BrokerParams::default()
        };
        assert!(broker_model(&bad).is_err());
    }

    #[test]
    fn idle_broker_costs_nothing() {
        let p = BrokerParams {
            p_send: 0.0,
            p_break: 0.0,
            ..BrokerParams::default()
        };
        let alpha = ActionFunction::constant(ActionValue(vec![0.5, 0.5]), 5.0).unwrap();
        let (flow, cost) = broker_flow(&p, &alpha, 5.0, 0.01).unwrap();
        assert_eq!(cost, 0.0);
        assert!(flow.points.iter().all(|x| x[2] == 0.25));
    }
}
