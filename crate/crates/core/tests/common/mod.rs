#![allow(dead_code)]

use meanfield_core::rng::seeded;
use meanfield_core::{ActionSpace, ModelSpec};
use rand::Rng;

/// A random model with rates affine in `m` and `a` whose rows never exceed 1.
pub fn random_model(seed: u64, states: usize) -> ModelSpec {
    let mut rng = seeded(seed);
    let names: Vec<String> = (0..states).map(|i| format!("X{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let share = 1.0 / (3.0 * (states - 1) as f64);
    let mut b = ModelSpec::builder(&refs).actions(ActionSpace::finite(vec![0.0, 1.0]).unwrap());
    for i in 0..states {
        for j in 0..states {
            if i == j {
                continue;
            }
            let k = rng.random_range(0..states);
            let (c0, c1, c2): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let expr = format!(
                "{} + {} * a + {} * m[{}]",
                c0 * share,
                c1 * share,
                c2 * share,
                names[k]
            );
            b = b.rate(&names[i], &names[j], &expr);
        }
    }
    let (r0, r1): (f64, f64) = (rng.random(), rng.random());
    b.reward(&format!("{r0} * m[X0] + {r1} * a * m[{}] - 0.2 * a", names[states - 1]))
        .rate_cap(1.0)
        .build()
        .unwrap()
}
