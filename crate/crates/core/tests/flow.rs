//! The deterministic limit: drift, flow and values.

mod common;

use meanfield_core::meanfield::flow_value;
use meanfield_core::models::{broker_model, pricing_model, virus_model, BrokerParams, VirusParams};
use meanfield_core::rng::{seeded, uniform_simplex};
use meanfield_core::validate::validate_model;
use meanfield_core::{
    drift_finite, drift_limit, integrate_flow, value_deterministic, ActionFunction, ActionValue, ModelSpec,
    OccupancyMeasure,
};
use proptest::prelude::*;
use rand::Rng;

fn builtins() -> Vec<ModelSpec> {
    vec![
        pricing_model(),
        virus_model(&VirusParams::default()).unwrap(),
        broker_model(&BrokerParams::default()).unwrap(),
    ]
}

#[test]
fn builtins_validate_and_have_generator_rows() {
    for model in builtins() {
        let report = validate_model(&model, 200, 1);
        assert!(report.is_ok(), "{:?}", report.violations);
        let mut rng = seeded(5);
        let s = model.num_states();
        for _ in 0..100 {
            let m = OccupancyMeasure::new(uniform_simplex(&mut rng, s)).unwrap();
            let actions = model.actions().actions();
            let a = &actions[rng.random_range(0..actions.len())];
            let r = model.rate_matrix(&m, a).unwrap();
            for (i, row) in r.iter().enumerate() {
                assert!(row.iter().sum::<f64>().abs() < 1e-12);
                assert!(row.iter().enumerate().all(|(j, &v)| i == j || v >= 0.0));
            }
            let f = drift_limit(&model, &m, a).unwrap();
            assert!(f.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}

#[test]
fn finite_drift_is_scaled_limit_drift() {
    let model = virus_model(&VirusParams::default()).unwrap();
    let mut rng = seeded(11);
    for _ in 0..100 {
        let m = OccupancyMeasure::new(uniform_simplex(&mut rng, 4)).unwrap();
        let a = model.actions().actions()[rng.random_range(0..2)].clone();
        let f = drift_limit(&model, &m, &a).unwrap();
        let fin = drift_finite(&model, 50, &m, &a).unwrap();
        for (x, y) in fin.iter().zip(&f) {
            assert!((x * 50.0 - y).abs() < 1e-15);
        }
    }
}

#[test]
fn vaccination_off_keeps_dead_fraction() {
    let model = virus_model(&VirusParams::default()).unwrap();
    let alpha = ActionFunction::constant(ActionValue::scalar(0.0), 10.0).unwrap();
    let flow = integrate_flow(&model, &[0.65, 0.25, 0.1, 0.0], &alpha, 10.0, 0.01).unwrap();
    let d = model.state_index("D").unwrap();
    assert!(flow.points.iter().all(|p| p[d].abs() < 1e-14));
}

#[test]
fn fourth_order_convergence() {
    let model = virus_model(&VirusParams::default()).unwrap();
    let alpha = ActionFunction::constant(ActionValue::scalar(1.0), 4.0).unwrap();
    let m0 = [0.65, 0.25, 0.1, 0.0];
    let end = |h: f64| integrate_flow(&model, &m0, &alpha, 4.0, h).unwrap().last().to_vec();
    let reference = end(0.025 / 4.0);
    let err = |h: f64| -> f64 {
        end(h).iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    assert!(err(0.1) / err(0.05) >= 12.0);
    assert!(err(0.05) / err(0.025) >= 12.0);
}

#[test]
fn closed_form_values() {
    let model = pricing_model();
    let sell = ActionFunction::constant(ActionValue::scalar(1.0), 1.0).unwrap();
    let v = value_deterministic(&model, &[0.0, 1.0], &sell, 1.0, 1e-3).unwrap();
    assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-6);
    let hold = ActionFunction::constant(ActionValue::scalar(0.0), 1.0).unwrap();
    assert_eq!(value_deterministic(&model, &[0.0, 1.0], &hold, 1.0, 1e-3).unwrap(), 0.0);
}

fn random_alpha(seed: u64, horizon: f64) -> ActionFunction {
    let mut rng = seeded(seed);
    let pieces = rng.random_range(1..=3);
    let mut cuts: Vec<f64> = (1..pieces).map(|_| (rng.random_range(1..20) as f64) * horizon / 20.0).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut bps = vec![0.0];
    bps.extend(cuts);
    bps.push(horizon);
    let values = (0..bps.len() - 1).map(|_| ActionValue::scalar(rng.random_range(0..2) as f64)).collect();
    ActionFunction::piecewise_constant(bps, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flows_stay_on_the_simplex(seed in 0u64..100_000, s in 2usize..5) {
        let model = common::random_model(seed, s);
        let m0 = uniform_simplex(&mut seeded(seed ^ 0xabc), s);
        let flow = integrate_flow(&model, &m0, &random_alpha(seed, 2.0), 2.0, 0.01).unwrap();
        for p in &flow.points {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x >= -1e-9));
        }
    }

    #[test]
    fn semi_flow_property(seed in 0u64..100_000, cut in 1usize..20) {
        let model = common::random_model(seed, 3);
        let m0 = uniform_simplex(&mut seeded(seed ^ 0x5eed), 3);
        let alpha = random_alpha(seed, 2.0);
        let t = cut as f64 * 0.1;
        let whole = integrate_flow(&model, &m0, &alpha, 2.0, 0.01).unwrap();
        let head = integrate_flow(&model, &m0, &alpha, t, 0.01).unwrap();
        let tail = integrate_flow(&model, head.last(), &alpha.shifted(t).unwrap(), 2.0 - t, 0.01).unwrap();
        for (x, y) in whole.last().iter().zip(tail.last()) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_reward_has_zero_value(seed in 0u64..100_000) {
        let model = common::random_model(seed, 3);
        let mut def = model.def().clone();
        def.reward = meanfield_core::Expr::Num(0.0);
        let quiet = ModelSpec::new(def).unwrap();
        let flow = integrate_flow(&quiet, &[0.2, 0.3, 0.5], &random_alpha(seed, 1.0), 1.0, 0.01).unwrap();
        prop_assert_eq!(flow_value(&quiet, &flow).unwrap(), 0.0);
    }
}
