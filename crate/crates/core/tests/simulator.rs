//! Properties of the N-object chain.

use meanfield_core::models::{pricing_model, virus_model, VirusParams};
use meanfield_core::rng::{replication_rng, uniform_simplex};
use meanfield_core::sim::{step, sup_distance};
use meanfield_core::{
    drift_finite, integrate_flow, simulate, ActionFunction, ActionValue, ConstantPolicy, ModelSpec, OccupancyMeasure,
};
use proptest::prelude::*;

fn virus() -> ModelSpec {
    virus_model(&VirusParams::default()).unwrap()
}

fn random_grained(states: usize, n: usize, seed: u64) -> OccupancyMeasure {
    let mut rng = replication_rng(seed, 99);
    OccupancyMeasure::new(uniform_simplex(&mut rng, states))
        .unwrap()
        .round_to_grain(n)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paths_stay_on_the_grain_and_move_little(seed in 0u64..10_000, n in 2usize..60, a in 0usize..2) {
        let model = virus();
        let m0 = random_grained(4, n, seed);
        let policy = ConstantPolicy(model.actions().actions()[a].clone());
        let traj = simulate(&model, n, &policy, &m0, 3.0, &mut replication_rng(seed, 0)).unwrap();
        prop_assert_eq!(traj.measures.len(), traj.slots() + 1);
        for (k, w) in traj.measures.windows(2).enumerate() {
            let counts = w[1].counts().unwrap();
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            let delta = traj.transition_counts[k] as f64;
            prop_assert!(w[0].distance(&w[1]) <= 2f64.sqrt() * delta / n as f64 + 1e-12);
        }
    }

    #[test]
    fn same_seed_same_path(seed in 0u64..10_000) {
        let model = pricing_model();
        let m0 = OccupancyMeasure::new(vec![0.4, 0.6]).unwrap().round_to_grain(25).unwrap();
        let policy = ConstantPolicy(ActionValue::scalar(1.0));
        let a = simulate(&model, 25, &policy, &m0, 1.0, &mut replication_rng(seed, 3)).unwrap();
        let b = simulate(&model, 25, &policy, &m0, 1.0, &mut replication_rng(seed, 3)).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Empirical one-step mean and transition-count moments at a fixed state.
#[test]
fn one_step_statistics_match_the_kernel() {
    let model = virus();
    let n = 50;
    let m = OccupancyMeasure::new(vec![0.5, 0.3, 0.1, 0.1]).unwrap().round_to_grain(n).unwrap();
    let a = ActionValue::scalar(1.0);
    let expected = drift_finite(&model, n, &m, &a).unwrap();
    let trials = 100_000;
    let mut rng = replication_rng(7, 0);
    let mut sum = [0.0; 4];
    let mut sq = [0.0; 4];
    let (mut d1, mut d2) = (0.0, 0.0);
    for _ in 0..trials {
        let (next, moved) = step(&model, n, &m, &a, &mut rng).unwrap();
        let moved = moved as f64;
        let counts = next.counts().unwrap();
        d1 += moved;
        d2 += moved * moved;
        for (j, c) in counts.iter().enumerate() {
            let inc = *c as f64 / n as f64 - m.weights()[j];
            sum[j] += inc;
            sq[j] += inc * inc;
        }
    }
    let t = trials as f64;
    for j in 0..4 {
        let mean = sum[j] / t;
        let se = ((sq[j] / t - mean * mean) / t).sqrt();
        assert!((mean - expected[j]).abs() <= 3.0 * se + 1e-12, "state {j}: {mean} vs {}", expected[j]);
    }

    // Delta is a sum of independent Bernoullis: mean sum(p), variance sum(p(1-p)).
    let rates = model.rate_matrix(&m, &a).unwrap();
    let counts = m.counts().unwrap();
    let (mut mu, mut var) = (0.0, 0.0);
    for i in 0..4 {
        let out: f64 = (0..4).filter(|&j| j != i).map(|j| rates[i][j]).sum::<f64>() / n as f64;
        mu += counts[i] as f64 * out;
        var += counts[i] as f64 * out * (1.0 - out);
    }
    let mean = d1 / t;
    let second = d2 / t;
    let se = ((second - mean * mean) / t).sqrt();
    assert!((mean - mu).abs() <= 3.0 * se, "E[Delta] {mean} vs {mu}");
    assert!((second - mean * mean - var).abs() <= 0.05 * var, "Var[Delta] {} vs {var}", second - mean * mean);
    // With c1 the rate cap: E[Delta] <= c1 and E[Delta^2] <= c1 + c1^2.
    let c1 = model.rate_cap();
    assert!(mean <= c1 + 1e-9);
    assert!(second <= c1 + c1 * c1 + 1e-9);
}

#[test]
fn sup_distance_of_constant_paths_is_their_gap() {
    let zero = ModelSpec::builder(&["A", "B"]).build().unwrap();
    let n = 10;
    let m0 = OccupancyMeasure::from_counts(&[3, 7]).unwrap();
    let policy = ConstantPolicy(ActionValue::scalar(0.0));
    let traj = simulate(&zero, n, &policy, &m0, 1.0, &mut replication_rng(0, 0)).unwrap();
    let alpha = ActionFunction::constant(ActionValue::scalar(0.0), 1.0).unwrap();
    let same = integrate_flow(&zero, m0.weights(), &alpha, 1.0, 0.01).unwrap();
    assert_eq!(sup_distance(&traj, &same, 1.0).unwrap(), 0.0);
    let other = integrate_flow(&zero, &[0.5, 0.5], &alpha, 1.0, 0.01).unwrap();
    let d = sup_distance(&traj, &other, 1.0).unwrap();
    assert!((d - 0.2 * 2f64.sqrt()).abs() < 1e-12);
    assert!(sup_distance(&traj, &other, 2.0).is_err());
}

#[test]
fn larger_populations_track_the_flow_more_closely() {
    let model = pricing_model();
    let alpha = ActionFunction::constant(ActionValue::scalar(0.0), 1.0).unwrap();
    let flow = integrate_flow(&model, &[1.0, 0.0], &alpha, 1.0, 1e-3).unwrap();
    let policy = ConstantPolicy(ActionValue::scalar(0.0));
    let median = |n: usize| {
        let m0 = OccupancyMeasure::from_counts(&[n, 0]).unwrap();
        let mut d: Vec<f64> = (0..30)
            .map(|seed| {
                let traj = simulate(&model, n, &policy, &m0, 1.0, &mut replication_rng(seed, 0)).unwrap();
                sup_distance(&traj, &flow, 1.0).unwrap()
            })
            .collect();
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    };
    let (small, large) = (median(100), median(10_000));
    assert!(large < small / 4.0, "{small} -> {large}");
}
