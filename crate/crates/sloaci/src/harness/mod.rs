//! Replication orchestration: configuration, the per-replication engine,
//! the parallel suite runner with CSV outputs, and the CLI.
//!
//! The wiring per stage is `dgp -> design -> plm -> estimator -> seqtest`:
//! sample a unit, decide the allocation, assign, record, refit on the
//! batch schedule, accumulate the pseudo-outcome, and update every
//! configured sequential test. Replications are the unit of parallelism
//! and draw from counter-based RNG streams, so results are bit-identical
//! for any worker count.

pub mod cli;
pub mod config;
pub mod engine;
pub mod runner;

pub use cli::cli;
pub use config::{RunConfig, Settings, TestSuite};
pub use engine::{run_replication, IntervalRow, RepRun};
pub use runner::{run_reps, run_suite, summarize, Summary, SuiteArtifacts, TestingRow, VarianceRow};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Counter-based derivation of per-replication RNG streams from one
/// master seed. Stream `i` is the ChaCha stream with id `i` of the
/// master-seeded generator: independent across replications, independent
/// of worker scheduling, and reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPlan {
    pub master_seed: u64,
}

impl RngPlan {
    pub fn stream(&self, rep: u32) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(rep as u64);
        rng
    }
}
