//! Compositions of `n` into `s` nonnegative parts, in lexicographic order.
//!
//! Both the exact N-object state space and the HJB simplex grid are this
//! lattice divided by its resolution.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `binomial(n, k)` in u128, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of compositions of `n` into `s` parts: `binomial(n + s - 1, s - 1)`.
pub fn composition_count(n: usize, s: usize) -> u128 {
    if s == 0 {
        return 0;
    }
    binomial((n + s - 1) as u64, (s - 1) as u64)
}

#[derive(Debug, Clone)]
pub struct Lattice {
    n: usize,
    s: usize,
    len: usize,
    // count[p][r] = compositions of r into p parts
    count: Vec<Vec<usize>>,
}

impl Lattice {
    pub fn new(n: usize, s: usize, cap: usize) -> Result<Self> {
        if s == 0 || n == 0 {
            return Err(Error::InvalidArgument("lattice needs n >= 1 and s >= 1".into()));
        }
        let total = composition_count(n, s);
        if total > cap as u128 {
            return Err(Error::CapacityExceeded {
                what: "lattice point count",
                count: total,
                cap: cap as u128,
            });
        }
        let mut count = vec![vec![0usize; n + 1]; s + 1];
        for r in 0..=n {
            count[1][r] = 1;
        }
        for p in 2..=s {
            let mut running = 0usize;
            for r in 0..=n {
                running += count[p - 1][r];
                count[p][r] = running;
            }
        }
        Ok(Self {
            n,
            s,
            len: total as usize,
            count,
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Lexicographic rank of a composition; `None` if it is not one.
    pub fn rank(&self, parts: &[usize]) -> Option<usize> {
        if parts.len() != self.s || parts.iter().sum::<usize>() != self.n {
            return None;
        }
        let mut rank = 0usize;
        let mut remaining = self.n;
        for (k, &x) in parts.iter().enumerate().take(self.s - 1) {
            let tail = self.s - 1 - k;
            // compositions whose k-th part is smaller than x
            for v in 0..x {
                rank += self.count[tail][remaining - v];
            }
            remaining -= x;
        }
        Some(rank)
    }

    pub fn unrank(&self, mut rank: usize) -> Vec<usize> {
        let mut parts = vec![0usize; self.s];
        let mut remaining = self.n;
        for k in 0..self.s - 1 {
            let tail = self.s - 1 - k;
            let mut v = 0;
            while rank >= self.count[tail][remaining - v] {
                rank -= self.count[tail][remaining - v];
                v += 1;
            }
            parts[k] = v;
            remaining -= v;
        }
        parts[self.s - 1] = remaining;
        parts
    }

    /// All compositions in rank order.
    pub fn points(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.len);
        let mut cur = vec![0usize; self.s];
        cur[self.s - 1] = self.n;
        loop {
            out.push(cur.clone());
            if !next_composition(&mut cur) {
                break;
            }
        }
        out
    }
}

/// Advance to the lexicographic successor; false when `cur` was the last.
fn next_composition(cur: &mut [usize]) -> bool {
    let s = cur.len();
    // rightmost position (before the last) that can grow: needs mass to its right
    let mut k = s - 1;
    loop {
        if k == 0 {
            return false;
        }
        k -= 1;
        let right: usize = cur[k + 1..].iter().sum();
        if right > 0 {
            cur[k] += 1;
            let rest = right - 1;
            for x in cur[k + 1..].iter_mut() {
                *x = 0;
            }
            cur[s - 1] = rest;
            return true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let l = Lattice::new(2, 2, 100).unwrap();
        assert_eq!(l.points(), vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        let l = Lattice::new(1, 4, 100).unwrap();
        assert_eq!(l.len(), 4);
        assert_eq!(Lattice::new(2, 3, 100).unwrap().len(), 6);
    }

    #[test]
    fn rank_is_bijection() {
        for (n, s) in [(10, 4), (5, 3), (7, 2), (3, 5)] {
            let l = Lattice::new(n, s, 1 << 20).unwrap();
            let pts = l.points();
            assert_eq!(pts.len() as u128, composition_count(n, s));
            for (i, p) in pts.iter().enumerate() {
                assert_eq!(l.rank(p), Some(i));
                assert_eq!(&l.unrank(i), p);
            }
            for w in pts.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
        assert_eq!(Lattice::new(10, 4, 1000).unwrap().len(), 286);
    }

    #[test]
    fn cap_is_enforced() {
        match Lattice::new(100, 5, 1000) {
            Err(Error::CapacityExceeded { count, .. }) => assert_eq!(count, binomial(104, 4)),
            other => panic!("{other:?}"),
        }
    }
}
