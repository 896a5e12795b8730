//! Explicit error-bound certificates between the N-object system and its limit.
//!
//! The bounds are worst-case and frequently exceed the quantity they bound at
//! small N. They are returned raw.

#[allow(unused_imports)]
use num_traits::Float;

use crate::action::ActionFunction;
use crate::model::ModelSpec;
use crate::validate::validate_model;

/// Scaling functions of the per-object Bernoulli family:
/// `I = 1/N`, `I0 = c0/N`, `I1 = c1/N`, `I2 = (c1^2 + c2^2)/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ScalingConstants {
    /// Constants implied by a model's rate cap: at most `c1` expected jumps per
    /// slot with variance at most `c1`, and an exact drift (`c0 = 0`).
    pub fn for_model(model: &ModelSpec) -> Self {
        let c1 = model.rate_cap();
        Self {
            c0: 0.0,
            c1,
            c2: c1.sqrt(),
        }
    }

    pub fn intensity(&self, n: u64) -> f64 {
        1.0 / n as f64
    }

    pub fn i0(&self, n: u64) -> f64 {
        self.c0 / n as f64
    }

    pub fn i1(&self, n: u64) -> f64 {
        self.c1 / n as f64
    }

    pub fn i2(&self, n: u64) -> f64 {
        (self.c1 * self.c1 + self.c2 * self.c2) / n as f64
    }

    pub fn at(&self, n: u64) -> Scaling {
        Scaling {
            i: self.intensity(n),
            i0: self.i0(n),
            i1: self.i1(n),
            i2: self.i2(n),
        }
    }
}

/// The four scaling functions evaluated at one N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub i: f64,
    pub i0: f64,
    pub i1: f64,
    pub i2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    /// Lipschitz constant of `F^N / I(N)` in `m`.
    pub l1: f64,
    /// Bound on `|f|`.
    pub l2: f64,
    /// Joint Lipschitz constant of `f` in `(m, a)`.
    pub k: f64,
    /// Lipschitz constant of `r` in `m`.
    pub kr: f64,
    pub r_sup: f64,
    /// Sample count behind the estimates (0 when declared).
    pub samples: usize,
}

/// Observed difference quotients: lower bounds on the true constants.
pub fn estimate_constants(model: &ModelSpec, samples: usize, seed: u64) -> LipschitzConstants {
    let rep = validate_model(model, samples, seed);
    LipschitzConstants {
        l1: rep.drift_lipschitz_m,
        l2: rep.drift_sup,
        k: rep.drift_lipschitz_m.max(rep.drift_lipschitz_a),
        kr: rep.reward_lipschitz_m,
        r_sup: rep.reward_sup,
        samples: rep.probes,
    }
}

/// `(e^{L1 T} - 1) / L1`, continued by `T` at `L1 = 0`.
fn growth(l1: f64, t: f64) -> f64 {
    if l1 == 0.0 {
        t
    } else {
        (l1 * t).exp_m1() / l1
    }
}

/// `J(N, T)` at the given scaling values.
pub fn bound_j(sc: &Scaling, lc: &LipschitzConstants, t: f64, s: usize) -> f64 {
    let s2 = (s * s) as f64;
    8.0 * t
        * (lc.l1 * lc.l1 * (sc.i2 * sc.i * sc.i + sc.i1 * sc.i1 * (t + sc.i))
            + s2 * (2.0 * sc.i2 + sc.i * (sc.i0 + lc.l2) * (sc.i0 + lc.l2)))
}

/// `I0'(N, alpha)`.
pub fn bound_i0_prime(sc: &Scaling, lc: &LipschitzConstants, alpha: &ActionFunction, t: f64) -> f64 {
    let p = alpha.discontinuity_count() as f64;
    let jumps = if sc.i > 0.0 { (1.0 / sc.i).min(p) } else { p };
    sc.i0
        + sc.i * lc.k * ((lc.k - lc.l1) * t).exp() * (alpha.lipschitz_constant() / 2.0 + 2.0 * (1.0 + jumps) * alpha.sup_norm())
}

fn value_bound(sc: &Scaling, lc: &LipschitzConstants, t: f64, s: usize, delta: f64, i0: f64) -> f64 {
    let g = growth(lc.l1, t);
    let j = bound_j(sc, lc, t, s);
    let tail = if j == 0.0 || lc.kr == 0.0 || lc.r_sup == 0.0 {
        0.0
    } else {
        // K_r / L1 (e^{L1 T} - 1 + I / 2), infinite when L1 = 0 and I > 0
        let inner = if lc.l1 == 0.0 {
            if sc.i > 0.0 {
                f64::INFINITY
            } else {
                lc.kr * t
            }
        } else {
            lc.kr * (g + sc.i / (2.0 * lc.l1))
        };
        3.0 / 2f64.cbrt() * inner.powf(2.0 / 3.0) * lc.r_sup.cbrt() * j.cbrt()
    };
    sc.i * lc.r_sup + lc.kr * (delta + i0 * t) * g + tail
}

/// `B(N, delta)`.
pub fn bound_b(sc: &Scaling, lc: &LipschitzConstants, t: f64, s: usize, delta: f64) -> f64 {
    value_bound(sc, lc, t, s, delta, sc.i0)
}

/// `B'(N, delta)`: `B` with `I0'(N, alpha)` in place of `I0(N)`.
pub fn bound_b_prime(sc: &Scaling, lc: &LipschitzConstants, alpha: &ActionFunction, t: f64, s: usize, delta: f64) -> f64 {
    value_bound(sc, lc, t, s, delta, bound_i0_prime(sc, lc, alpha, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_by_hand() {
        let sc = Scaling {
            i: 0.01,
            i0: 0.0,
            i1: 0.01,
            i2: 0.0101,
        };
        let lc = LipschitzConstants {
            l1: 1.0,
            l2: 1.0,
            k: 0.0,
            kr: 0.0,
            r_sup: 0.0,
            samples: 0,
        };
        assert!((bound_j(&sc, &lc, 1.0, 2) - 0.96721).abs() < 1e-5);
    }

    #[test]
    fn vanishing_scalings_give_zero() {
        let sc = Scaling {
            i: 0.0,
            i0: 0.0,
            i1: 0.0,
            i2: 0.0,
        };
        let lc = LipschitzConstants {
            l1: 1.3,
            l2: 0.7,
            k: 2.0,
            kr: 1.0,
            r_sup: 1.0,
            samples: 0,
        };
        assert_eq!(bound_j(&sc, &lc, 2.0, 3), 0.0);
        assert_eq!(bound_b(&sc, &lc, 2.0, 3, 0.0), 0.0);
    }
}
