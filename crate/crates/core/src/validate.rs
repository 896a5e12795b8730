//! Empirical checks of a model's standing assumptions: nonnegative rates
//! within the declared cap, bounded reward, Lipschitz drift and reward.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Error;
use crate::meanfield::Drift;
use crate::model::ModelSpec;
use crate::occupancy::euclidean;
use crate::rng::{seeded, uniform_simplex};

/// Step of the finite-difference probes.
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeRate {
        from: usize,
        to: usize,
        value: f64,
        m: Vec<f64>,
        a: Vec<f64>,
    },
    RateCapExceeded {
        state: usize,
        row_sum: f64,
        cap: f64,
        m: Vec<f64>,
        a: Vec<f64>,
    },
    NonFinite {
        what: String,
        m: Vec<f64>,
        a: Vec<f64>,
    },
    Evaluation(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Distinct `(m, a)` pairs evaluated.
    pub probes: usize,
    pub rate_cap: f64,
    pub max_row_sum: f64,
    pub min_rate: f64,
    /// Largest observed `|r(m, a)|`.
    pub reward_sup: f64,
    /// Largest observed `|g(m)|`.
    pub terminal_sup: f64,
    /// Largest observed component of `|f(m, a)|`.
    pub drift_sup: f64,
    /// Difference quotients of `f` in `m` at fixed `a`.
    pub drift_lipschitz_m: f64,
    /// Difference quotients of `f` in `a` at fixed `m`.
    pub drift_lipschitz_a: f64,
    pub reward_lipschitz_m: f64,
    pub reward_lipschitz_a: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn probe_points(s: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(s + 1 + samples);
    for i in 0..s {
        let mut v = vec![0.0; s];
        v[i] = 1.0;
        pts.push(v);
    }
    if s > 1 {
        pts.push(vec![1.0 / s as f64; s]);
    }
    let mut rng = seeded(seed);
    for _ in 0..samples {
        pts.push(uniform_simplex(&mut rng, s));
    }
    pts
}

/// A point `eps` away from `m` along `e_i - e_j`, staying on the simplex.
fn nudge<R: Rng + ?Sized>(m: &[f64], rng: &mut R) -> Option<Vec<f64>> {
    let s = m.len();
    if s < 2 {
        return None;
    }
    let i = rng.random_range(0..s);
    let donors: Vec<usize> = (0..s).filter(|&j| j != i && m[j] >= FD_STEP).collect();
    if donors.is_empty() {
        return None;
    }
    let j = donors[rng.random_range(0..donors.len())];
    let mut out = m.to_vec();
    out[i] += FD_STEP;
    out[j] -= FD_STEP;
    Some(out)
}

struct Probe {
    f: Vec<f64>,
    r: f64,
}

/// Sample the simplex (vertices, centroid and `sample_count` uniform points)
/// against every action of the model's grid.
pub fn validate_model(model: &ModelSpec, sample_count: usize, rng_seed: u64) -> ValidationReport {
    let s = model.num_states();
    let actions = model.actions().actions();
    let mut report = ValidationReport {
        probes: 0,
        rate_cap: model.rate_cap(),
        max_row_sum: 0.0,
        min_rate: if model.rates().is_empty() { 0.0 } else { f64::INFINITY },
        reward_sup: 0.0,
        terminal_sup: 0.0,
        drift_sup: 0.0,
        drift_lipschitz_m: 0.0,
        drift_lipschitz_a: 0.0,
        reward_lipschitz_m: 0.0,
        reward_lipschitz_a: 0.0,
        violations: Vec::new(),
    };
    let mut drift = Drift::unchecked(model);
    let mut rates = Vec::new();
    let mut row = vec![0.0; s];
    let mut fd_rng = seeded(rng_seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut eval = |m: &[f64], a: &[f64], report: &mut ValidationReport, record: bool| -> Option<Probe> {
        if let Err(e) = model.eval_rates_raw(m, a, &mut rates) {
            report.violations.push(Violation::Evaluation(e));
            return None;
        }
        if record {
            report.probes += 1;
            row.iter_mut().for_each(|x| *x = 0.0);
            for (r, &v) in model.rates().iter().zip(&rates) {
                report.min_rate = report.min_rate.min(v);
                row[r.from] += v;
                if v < 0.0 {
                    report.violations.push(Violation::NegativeRate {
                        from: r.from,
                        to: r.to,
                        value: v,
                        m: m.to_vec(),
                        a: a.to_vec(),
                    });
                }
            }
            for (state, &rs) in row.iter().enumerate() {
                report.max_row_sum = report.max_row_sum.max(rs);
                if rs > model.rate_cap() * (1.0 + 1e-12) + 1e-12 {
                    report.violations.push(Violation::RateCapExceeded {
                        state,
                        row_sum: rs,
                        cap: model.rate_cap(),
                        m: m.to_vec(),
                        a: a.to_vec(),
                    });
                }
            }
        }
        let mut f = vec![0.0; s];
        if let Err(e) = drift.eval(m, a, &mut f) {
            report.violations.push(Violation::Evaluation(e));
            return None;
        }
        let r = match model.reward(m, a) {
            Ok(r) => r,
            Err(e) => {
                report.violations.push(Violation::Evaluation(e));
                return None;
            }
        };
        if !r.is_finite() {
            report.violations.push(Violation::NonFinite {
                what: "reward".into(),
                m: m.to_vec(),
                a: a.to_vec(),
            });
            return None;
        }
        if record {
            report.reward_sup = report.reward_sup.max(r.abs());
            report.drift_sup = report.drift_sup.max(f.iter().fold(0.0, |acc, x| acc.max(x.abs())));
        }
        Some(Probe { f, r })
    };

    let points = probe_points(s, sample_count, rng_seed);
    let mut previous: Option<(Vec<f64>, Vec<Probe>)> = None;
    for m in &points {
        match model.terminal(m) {
            Ok(g) if g.is_finite() => report.terminal_sup = report.terminal_sup.max(g.abs()),
            Ok(_) => report.violations.push(Violation::NonFinite {
                what: "terminal reward".into(),
                m: m.clone(),
                a: Vec::new(),
            }),
            Err(e) => report.violations.push(Violation::Evaluation(e)),
        }
        let probes: Vec<Probe> = actions
            .iter()
            .filter_map(|a| eval(m, a.components(), &mut report, true))
            .collect();
        if probes.len() != actions.len() {
            previous = None;
            continue;
        }
        // sensitivity to the action at fixed m
        for i in 0..actions.len() {
            for j in i + 1..actions.len() {
                let d = actions[i].distance(&actions[j]);
                if d > 0.0 {
                    report.drift_lipschitz_a = report.drift_lipschitz_a.max(euclidean(&probes[i].f, &probes[j].f) / d);
                    report.reward_lipschitz_a = report.reward_lipschitz_a.max((probes[i].r - probes[j].r).abs() / d);
                }
            }
        }
        // sensitivity to m: a nearby point and the previous sample
        let mut others = Vec::new();
        if let Some(m2) = nudge(m, &mut fd_rng) {
            let p2: Vec<Probe> = actions
                .iter()
                .filter_map(|a| eval(&m2, a.components(), &mut report, false))
                .collect();
            if p2.len() == actions.len() {
                others.push((m2, p2));
            }
        }
        if let Some(prev) = previous.take() {
            others.push(prev);
        }
        for (m2, p2) in &others {
            let d = euclidean(m, m2);
            if d == 0.0 {
                continue;
            }
            for (p, q) in probes.iter().zip(p2) {
                report.drift_lipschitz_m = report.drift_lipschitz_m.max(euclidean(&p.f, &q.f) / d);
                report.reward_lipschitz_m = report.reward_lipschitz_m.max((p.r - q.r).abs() / d);
            }
        }
        previous = Some((m.clone(), probes));
    }
    if report.min_rate == f64::INFINITY {
        report.min_rate = 0.0;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionSpace;

    #[test]
    fn pricing_is_valid() {
        let model = ModelSpec::builder(&["U", "S"])
            .actions(ActionSpace::finite(vec![0.0, 1.0]).unwrap())
            .rate("U", "S", "1 - a")
            .rate("S", "U", "a")
            .reward("m[S] * a")
            .build()
            .unwrap();
        let rep = validate_model(&model, 200, 1);
        assert!(rep.is_ok(), "{:?}", rep.violations);
        assert_eq!(rep.max_row_sum, 1.0);
        assert_eq!(rep.reward_sup, 1.0);
        assert_eq!(rep.drift_sup, 1.0);
        assert!((rep.drift_lipschitz_m - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negative_rate_is_flagged() {
        let model = ModelSpec::builder(&["A", "B"]).rate("A", "B", "0 - 1").build().unwrap();
        let rep = validate_model(&model, 5, 0);
        assert!(rep.violations.iter().any(|v| matches!(v, Violation::NegativeRate { .. })));
    }

    #[test]
    fn zero_model_has_zero_estimates() {
        let model = ModelSpec::builder(&["A", "B", "C"]).rate("A", "B", "0").build().unwrap();
        let rep = validate_model(&model, 20, 3);
        assert!(rep.is_ok());
        assert_eq!(
            [rep.max_row_sum, rep.reward_sup, rep.drift_sup, rep.drift_lipschitz_m, rep.drift_lipschitz_a, rep.reward_lipschitz_m],
            [0.0; 6]
        );
    }
}
