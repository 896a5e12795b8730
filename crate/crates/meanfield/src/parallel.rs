//! Parallel Monte-Carlo. Replication `r` always draws from stream `(seed, r)`
//! and results are gathered in index order, so estimates do not depend on the
//! number of worker threads.

use meanfield_core::sim::{replication_value, McEstimate};
use meanfield_core::{ModelSpec, OccupancyMeasure, Policy};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Run `f` on a pool of `threads` workers (`None` or 0: available parallelism).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads.filter(|&n| n > 0) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn evaluate_value_mc_par<P: Policy + ?Sized>(
    model: &ModelSpec,
    n: usize,
    policy: &P,
    m0: &OccupancyMeasure,
    horizon: f64,
    replications: usize,
    seed: u64,
) -> Result<McEstimate> {
    if replications == 0 {
        return Err(Error::Config("need at least one replication".into()));
    }
    let values = (0..replications as u64)
        .into_par_iter()
        .map(|r| replication_value(model, n, policy, m0, horizon, seed, r))
        .collect::<meanfield_core::Result<Vec<_>>>()?;
    Ok(McEstimate::from_values(values))
}
