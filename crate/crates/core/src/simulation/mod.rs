//! Monte Carlo estimates of the interior value, the entry problem and the
//! filter.
//!
//! Samples are drawn from per-sample ChaCha streams keyed by the seed and the
//! sample index, mapped in parallel and accumulated in index order, so the
//! aggregate statistics do not depend on the number of threads.

mod composite;
mod drift;
mod rng;
mod stage2;
mod stats;

pub use composite::{
    martingale_check, run_composite, run_composite_with, run_stopping, CompositeOptions,
    EntryReward, MartingaleCheck, SimBatch,
};
pub use drift::{filter_errors, simulate_drift, PathConfig};
pub use rng::{path_rng, OuTransition};
pub use stage2::{
    run_stage2, run_stage2_with, PathRecord, Stage2Report, Stage2Start, MAX_FLAGGED_FRACTION,
};
pub use stats::{Accumulator, Estimate, Neumaier};
