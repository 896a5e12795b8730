//! Mean-field optimal control of large populations of interacting objects.
//!
//! Models are declared with a small rate-expression language. The crate
//! simulates the N-object chain exactly, integrates its deterministic limit,
//! solves both by dynamic programming, and evaluates the explicit error
//! bounds linking the two.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod action;
pub mod bounds;
pub mod dp;
pub mod error;
pub mod expr;
pub mod hjb;
pub mod lattice;
pub mod meanfield;
pub mod model;
pub mod models;
pub mod occupancy;
pub mod rng;
pub mod sim;
pub mod validate;

pub use action::{ActionDomain, ActionFunction, ActionSpace, Piece};
pub use error::{Error, Result};
pub use expr::{Expr, Program, Scope};
pub use meanfield::{coupled_flow, drift_finite, drift_limit, integrate_flow, value_deterministic, FlowPath};
pub use model::{ModelBuilder, ModelDef, ModelSpec};
pub use occupancy::{occupancy_from_states, ActionValue, OccupancyMeasure};
pub use sim::{evaluate_value_mc, path_value, simulate, ConstantPolicy, FnPolicy, OpenLoopPolicy, Policy, Trajectory};
