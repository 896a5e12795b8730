//! Action spaces and open-loop action functions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::occupancy::ActionValue;

const MEMBER_TOL: f64 = 1e-12;

/// Declared action domain.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDomain {
    Finite(Vec<ActionValue>),
    /// Axis-aligned box; `steps[k]` grid points on axis `k`.
    Box { bounds: Vec<(f64, f64)>, steps: Vec<usize> },
    /// Probability simplex over `dim` components, discretized with resolution `steps`.
    Simplex { dim: usize, steps: usize },
}

/// An action domain together with the finite set every optimizer searches.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    domain: ActionDomain,
    grid: Vec<ActionValue>,
}

impl ActionSpace {
    pub fn new(domain: ActionDomain) -> Result<Self> {
        let grid = match &domain {
            ActionDomain::Finite(values) => {
                if values.is_empty() {
                    return Err(Error::InvalidModel("empty finite action set".into()));
                }
                let arity = values[0].len();
                if arity == 0 || values.iter().any(|v| v.len() != arity) {
                    return Err(Error::InvalidModel("finite actions must share a nonzero arity".into()));
                }
                values.clone()
            }
            ActionDomain::Box { bounds, steps } => {
                if bounds.is_empty() || bounds.len() != steps.len() {
                    return Err(Error::InvalidModel("box bounds and steps must have equal nonzero length".into()));
                }
                if bounds.iter().any(|(lo, hi)| !(lo <= hi)) || steps.iter().any(|&s| s == 0) {
                    return Err(Error::InvalidModel("box needs lo <= hi and steps >= 1".into()));
                }
                let axes: Vec<Vec<f64>> = bounds
                    .iter()
                    .zip(steps)
                    .map(|(&(lo, hi), &n)| {
                        if n == 1 {
                            vec![lo]
                        } else {
                            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
                        }
                    })
                    .collect();
                cartesian(&axes)
            }
            ActionDomain::Simplex { dim, steps } => {
                if *dim == 0 || *steps == 0 {
                    return Err(Error::InvalidModel("simplex actions need dim >= 1 and steps >= 1".into()));
                }
                let lattice = Lattice::new(*steps, *dim, 1 << 22)?;
                lattice
                    .points()
                    .into_iter()
                    .map(|p| ActionValue(p.iter().map(|&c| c as f64 / *steps as f64).collect()))
                    .collect()
            }
        };
        Ok(Self { domain, grid })
    }

    pub fn finite(values: Vec<f64>) -> Result<Self> {
        Self::new(ActionDomain::Finite(values.into_iter().map(ActionValue::scalar).collect()))
    }

    pub fn interval(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        Self::new(ActionDomain::Box {
            bounds: vec![(lo, hi)],
            steps: vec![steps],
        })
    }

    pub fn domain(&self) -> &ActionDomain {
        &self.domain
    }

    /// Discretized action set, in index order used for tie-breaking.
    pub fn actions(&self) -> &[ActionValue] {
        &self.grid
    }

    pub fn arity(&self) -> usize {
        self.grid[0].len()
    }

    /// Membership in the declared (continuous) domain.
    pub fn contains(&self, a: &ActionValue) -> bool {
        if a.len() != self.arity() || a.0.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match &self.domain {
            ActionDomain::Finite(values) => values.iter().any(|v| v.distance(a) <= MEMBER_TOL),
            ActionDomain::Box { bounds, .. } => a
                .0
                .iter()
                .zip(bounds)
                .all(|(x, (lo, hi))| *x >= lo - MEMBER_TOL && *x <= hi + MEMBER_TOL),
            ActionDomain::Simplex { .. } => {
                a.0.iter().all(|x| *x >= -MEMBER_TOL) && (a.0.iter().sum::<f64>() - 1.0).abs() <= MEMBER_TOL
            }
        }
    }

    pub fn check(&self, a: &ActionValue) -> Result<()> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(Error::ActionOutOfSpace(format!("{:?}", a.0)))
        }
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<ActionValue> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &x in axis {
                let mut p = prefix.clone();
                p.push(x);
                next.push(p);
            }
        }
        out = next;
    }
    out.into_iter().map(ActionValue).collect()
}

/// One piece of an action function: linear from `start` to `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub start: ActionValue,
    pub end: ActionValue,
}

impl Piece {
    pub fn constant(a: ActionValue) -> Self {
        Piece { start: a.clone(), end: a }
    }

    pub fn is_constant(&self) -> bool {
        self.start == self.end
    }
}

/// Piecewise Lipschitz map `[0, T] -> A`, right-continuous at breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionFunction {
    breakpoints: Vec<f64>,
    pieces: Vec<Piece>,
}

impl ActionFunction {
    /// `breakpoints` runs from 0 to T inclusive; one piece per interval.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Piece>) -> Result<Self> {
        if breakpoints.len() < 2 || pieces.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints for {} pieces",
                breakpoints.len(),
                pieces.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidArgument("action function must start at t = 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("breakpoints must be strictly increasing".into()));
        }
        let arity = pieces[0].start.len();
        if pieces.iter().any(|p| p.start.len() != arity || p.end.len() != arity) {
            return Err(Error::InvalidArgument("inconsistent action arity across pieces".into()));
        }
        Ok(Self { breakpoints, pieces })
    }

    pub fn constant(a: ActionValue, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![Piece::constant(a)])
    }

    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<ActionValue>) -> Result<Self> {
        Self::new(breakpoints, values.into_iter().map(Piece::constant).collect())
    }

    /// Bang-bang function: `low` before `switch`, `high` after.
    pub fn switch_at(low: ActionValue, high: ActionValue, switch: f64, horizon: f64) -> Result<Self> {
        if switch <= 0.0 {
            Self::constant(high, horizon)
        } else if switch >= horizon {
            Self::constant(low, horizon)
        } else {
            Self::piecewise_constant(vec![0.0, switch, horizon], vec![low, high])
        }
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn arity(&self) -> usize {
        self.pieces[0].start.len()
    }

    /// Index of the piece containing `t` (the last piece is closed on the right).
    pub fn piece_index(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        let k = self.breakpoints.partition_point(|&b| b <= t);
        Ok(k.saturating_sub(1).min(self.pieces.len() - 1))
    }

    /// Value of piece `k` at `t`, continued linearly; used by integrators that
    /// must not look across a breakpoint.
    pub fn value_in_piece(&self, k: usize, t: f64) -> ActionValue {
        let piece = &self.pieces[k];
        if piece.is_constant() {
            return piece.start.clone();
        }
        let (t0, t1) = (self.breakpoints[k], self.breakpoints[k + 1]);
        let w = (t - t0) / (t1 - t0);
        ActionValue(
            piece
                .start
                .0
                .iter()
                .zip(&piece.end.0)
                .map(|(s, e)| s + w * (e - s))
                .collect(),
        )
    }

    pub fn eval(&self, t: f64) -> Result<ActionValue> {
        let k = self.piece_index(t)?;
        Ok(self.value_in_piece(k, t))
    }

    /// K_alpha: largest slope over the pieces.
    pub fn lipschitz_constant(&self) -> f64 {
        self.pieces
            .iter()
            .enumerate()
            .map(|(k, p)| p.start.distance(&p.end) / (self.breakpoints[k + 1] - self.breakpoints[k]))
            .fold(0.0, f64::max)
    }

    /// p: interior breakpoints where the left and right values differ.
    pub fn discontinuity_count(&self) -> usize {
        self.pieces.windows(2).filter(|w| w[0].end != w[1].start).count()
    }

    /// Supremum of the Euclidean norm of the action.
    pub fn sup_norm(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.start.norm().max(p.end.norm()))
            .fold(0.0, f64::max)
    }

    /// Times at which the value jumps.
    pub fn switch_times(&self) -> Vec<f64> {
        self.pieces
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].end != w[1].start)
            .map(|(k, _)| self.breakpoints[k + 1])
            .collect()
    }

    /// Merge adjacent constant pieces carrying the same value.
    pub fn merged(&self) -> ActionFunction {
        let mut bps = vec![self.breakpoints[0]];
        let mut pieces: Vec<Piece> = Vec::new();
        for (k, p) in self.pieces.iter().enumerate() {
            match pieces.last() {
                Some(last) if last.is_constant() && p.is_constant() && last.start == p.start => {
                    *bps.last_mut().unwrap() = self.breakpoints[k + 1];
                }
                _ => {
                    pieces.push(p.clone());
                    bps.push(self.breakpoints[k + 1]);
                }
            }
        }
        ActionFunction {
            breakpoints: bps,
            pieces,
        }
    }

    /// The action function `s -> alpha(t0 + s)` on `[0, T - t0]`.
    pub fn shifted(&self, t0: f64) -> Result<ActionFunction> {
        let horizon = self.horizon();
        if !(0.0..horizon).contains(&t0) {
            return Err(Error::TimeOutOfRange { t: t0, horizon });
        }
        let k0 = self.piece_index(t0)?;
        let mut bps = vec![0.0];
        let mut pieces = Vec::new();
        for k in k0..self.pieces.len() {
            let start = if k == k0 {
                self.value_in_piece(k, t0)
            } else {
                self.pieces[k].start.clone()
            };
            pieces.push(Piece {
                start,
                end: self.pieces[k].end.clone(),
            });
            bps.push(self.breakpoints[k + 1] - t0);
        }
        ActionFunction::new(bps, pieces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_and_simplex_grids() {
        let s = ActionSpace::interval(0.0, 1.0, 2).unwrap();
        assert_eq!(s.actions(), &[ActionValue::scalar(0.0), ActionValue::scalar(1.0)]);
        assert!(s.contains(&ActionValue::scalar(0.3)));
        assert!(!s.contains(&ActionValue::scalar(1.3)));
        let s = ActionSpace::new(ActionDomain::Simplex { dim: 2, steps: 4 }).unwrap();
        assert_eq!(s.actions().len(), 5);
        assert!(s.contains(&ActionValue(vec![0.3, 0.7])));
        assert!(!s.contains(&ActionValue(vec![0.3, 0.6])));
        let s = ActionSpace::new(ActionDomain::Box {
            bounds: vec![(0.0, 1.0), (2.0, 3.0)],
            steps: vec![2, 3],
        })
        .unwrap();
        assert_eq!(s.actions().len(), 6);
        assert_eq!(s.actions()[1], ActionValue(vec![0.0, 2.5]));
        let f = ActionSpace::finite(vec![0.0, 1.0]).unwrap();
        assert!(!f.contains(&ActionValue::scalar(0.5)));
    }

    #[test]
    fn piecewise_metadata() {
        let f = ActionFunction::switch_at(ActionValue::scalar(0.0), ActionValue::scalar(1.0), 0.5, 1.0).unwrap();
        assert_eq!(f.discontinuity_count(), 1);
        assert_eq!(f.lipschitz_constant(), 0.0);
        assert_eq!(f.sup_norm(), 1.0);
        assert_eq!(f.eval(0.25).unwrap(), ActionValue::scalar(0.0));
        assert_eq!(f.eval(0.5).unwrap(), ActionValue::scalar(1.0));
        assert_eq!(f.eval(1.0).unwrap(), ActionValue::scalar(1.0));
        assert!(f.eval(1.5).is_err());
        assert_eq!(f.switch_times(), vec![0.5]);

        let ramp = ActionFunction::new(
            vec![0.0, 2.0],
            vec![Piece {
                start: ActionValue::scalar(0.0),
                end: ActionValue::scalar(1.0),
            }],
        )
        .unwrap();
        assert_eq!(ramp.lipschitz_constant(), 0.5);
        assert_eq!(ramp.eval(1.0).unwrap(), ActionValue::scalar(0.5));
        assert_eq!(ramp.discontinuity_count(), 0);
    }

    #[test]
    fn continuous_joins_are_not_discontinuities() {
        let up = Piece {
            start: ActionValue::scalar(0.0),
            end: ActionValue::scalar(1.0),
        };
        let flat = Piece::constant(ActionValue::scalar(1.0));
        let f = ActionFunction::new(vec![0.0, 1.0, 2.0], vec![up, flat]).unwrap();
        assert_eq!(f.discontinuity_count(), 0);
    }

    #[test]
    fn merge_and_shift() {
        let v = |x| ActionValue::scalar(x);
        let f = ActionFunction::piecewise_constant(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![v(0.0), v(0.0), v(1.0), v(1.0)])
            .unwrap();
        let m = f.merged();
        assert_eq!(m.breakpoints(), &[0.0, 0.5, 1.0]);
        let s = f.shifted(0.3).unwrap();
        assert_eq!(s.horizon(), 0.7);
        assert_eq!(s.eval(0.1).unwrap(), v(0.0));
        assert_eq!(s.eval(0.25).unwrap(), v(1.0));
    }

    #[test]
    fn rejects_bad_breakpoints() {
        let v = ActionValue::scalar(0.0);
        assert!(ActionFunction::piecewise_constant(vec![0.0, 0.5, 0.5], vec![v.clone(), v.clone()]).is_err());
        assert!(ActionFunction::piecewise_constant(vec![0.1, 0.5], vec![v.clone()]).is_err());
        assert!(ActionFunction::piecewise_constant(vec![0.0, 0.5], vec![]).is_err());
    }
}
