//! Model files, reproducible artifacts, parallel Monte-Carlo, diagnostics
//! and reports around [`meanfield_core`].

pub mod artifact;
pub mod cli;
pub mod config;
pub mod error;
pub mod exchange;
pub mod io;
pub mod parallel;
pub mod report;

pub use meanfield_core as core;

pub use error::{Error, Result};
pub use exchange::{exchangeability_check, exchangeability_check_with, ExchangeabilityReport};
pub use io::{parse_model_spec, serialize_model};
pub use parallel::evaluate_value_mc_par;
pub use report::{convergence_report, ReportConfig, ReportRow};
