//! Error-bound certificates and the concentration they promise.

use meanfield_core::bounds::{
    bound_b, bound_b_prime, bound_i0_prime, bound_j, estimate_constants, LipschitzConstants, ScalingConstants,
};
use meanfield_core::hjb::{build_simplex_grid, feedback_policy, solve_hjb};
use meanfield_core::models::{pricing_model, virus_model, VirusParams};
use meanfield_core::rng::replication_rng;
use meanfield_core::sim::sup_distance;
use meanfield_core::{coupled_flow, simulate, ActionFunction, ActionValue, OccupancyMeasure};
use proptest::prelude::*;

const POWERS: [u64; 6] = [10, 100, 1_000, 10_000, 100_000, 1_000_000];

fn constants() -> LipschitzConstants {
    estimate_constants(&virus_model(&VirusParams::default()).unwrap(), 500, 2)
}

#[test]
fn empirical_constants() {
    let pricing = estimate_constants(&pricing_model(), 2000, 1);
    assert!((pricing.l2 - 1.0).abs() < 1e-9, "{}", pricing.l2);
    let virus = constants();
    assert!(virus.k >= 0.6);
    assert!([virus.l1, virus.l2, virus.k, virus.kr, virus.r_sup].iter().all(|&c| c >= 0.0));
}

#[test]
fn scalings_vanish_and_bounds_shrink_with_n() {
    let model = virus_model(&VirusParams::default()).unwrap();
    let sc = ScalingConstants::for_model(&model);
    let lc = constants();
    let bang = ActionFunction::switch_at(ActionValue::scalar(0.0), ActionValue::scalar(1.0), 5.0, 10.0).unwrap();
    let idle = ActionFunction::constant(ActionValue::scalar(0.0), 10.0).unwrap();
    let mut last: Option<(f64, f64, f64)> = None;
    for n in POWERS {
        let s = sc.at(n);
        assert!(s.i > 0.0 && s.i1 > 0.0 && s.i2 > 0.0 && s.i0 >= 0.0);
        let j = bound_j(&s, &lc, 10.0, 4);
        let i0p = bound_i0_prime(&s, &lc, &bang, 10.0);
        let b = bound_b(&s, &lc, 10.0, 4, 0.0);
        assert!(i0p > bound_i0_prime(&s, &lc, &idle, 10.0));
        assert_eq!(bound_i0_prime(&s, &lc, &idle, 10.0), 0.0);
        if let Some((pj, pi, pb)) = last {
            assert!(j < pj && i0p < pi && b < pb);
        }
        last = Some((j, i0p, b));
    }
    let (j, _, _) = last.unwrap();
    assert!(j < 1e-3 * bound_j(&sc.at(10), &lc, 10.0, 4));
}

proptest! {
    #[test]
    fn value_bounds_grow_with_initial_distance(n in 1u64..100_000, d in 0.0f64..1.0, extra in 0.0f64..1.0) {
        let model = virus_model(&VirusParams::default()).unwrap();
        let s = ScalingConstants::for_model(&model).at(n);
        let lc = constants();
        let alpha = ActionFunction::switch_at(ActionValue::scalar(0.0), ActionValue::scalar(1.0), 4.0, 10.0).unwrap();
        prop_assert!(bound_b(&s, &lc, 10.0, 4, d) <= bound_b(&s, &lc, 10.0, 4, d + extra));
        prop_assert!(bound_b_prime(&s, &lc, &alpha, 10.0, 4, d) <= bound_b_prime(&s, &lc, &alpha, 10.0, 4, d + extra));
        prop_assert!(bound_b(&s, &lc, 10.0, 4, d) <= bound_b_prime(&s, &lc, &alpha, 10.0, 4, d));
    }
}

/// Runs per population size, distances to the flow driven by the realised actions.
fn feedback_distances(n: usize, runs: u64) -> Vec<f64> {
    let model = pricing_model();
    let field = solve_hjb(&model, build_simplex_grid(2, 100).unwrap(), 1.0, 200).unwrap();
    let policy = feedback_policy(&field, &model);
    let m0 = OccupancyMeasure::from_counts(&[n, 0]).unwrap();
    (0..runs)
        .map(|seed| {
            let traj = simulate(&model, n, &policy, &m0, 1.0, &mut replication_rng(seed, 0)).unwrap();
            let flow = coupled_flow(&model, m0.weights(), &traj, 0.5 / n as f64).unwrap();
            sup_distance(&traj, &flow, 1.0).unwrap()
        })
        .collect()
}

#[test]
fn coupled_flow_stays_close_under_feedback() {
    let d = feedback_distances(1000, 100);
    let close = d.iter().filter(|&&x| x < 0.1).count();
    assert!(close >= 95, "{close}/100 within 0.1");
}

#[test]
fn concentration_respects_the_bound() {
    let model = pricing_model();
    let sc = ScalingConstants::for_model(&model);
    let lc = estimate_constants(&model, 2000, 1);
    for n in [1_000usize, 10_000] {
        let s = sc.at(n as u64);
        let j = bound_j(&s, &lc, 1.0, 2);
        let active: Vec<f64> = [0.05, 0.1, 0.2].into_iter().filter(|&e| j / (e * e) <= 1.0).collect();
        if active.is_empty() {
            continue;
        }
        let d = feedback_distances(n, 200);
        for eps in active {
            let threshold = (s.i0 + eps) * lc.l1.exp();
            let frac = d.iter().filter(|&&x| x > threshold).count() as f64 / d.len() as f64;
            assert!(frac <= j / (eps * eps), "N={n} eps={eps}: {frac} > {}", j / (eps * eps));
        }
    }
}
