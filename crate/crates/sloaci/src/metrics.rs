//! Cross-replication summaries.
//!
//! A Monte Carlo suite produces one [`RepOutcome`] per replication:
//! checkpointed values of the running estimate plus, for each sequential
//! test and null value, the first-exit digest of the stopping rule. The
//! fold operations here turn those into the reported quantities:
//!
//! * `normalized_variance` - `T x Var(tau_hat_T)` across replications,
//!   compared against the efficiency bound it converges to;
//! * `empirical_regret` - `T x (normalized variance - bound)`, the
//!   per-horizon cumulative excess loss of a design over the oracle;
//! * `miscoverage` - the fraction of replications whose interval sequence
//!   ever excluded the true effect by stage `T`;
//! * `power_and_stopping` - the fraction rejecting a false null by `T`,
//!   and the mean/SE of the stopping time with censored replications
//!   entering at the horizon value.

use crate::seqtest::TestKind;
use crate::{Error, Result};

/// Checkpointed state of one replication at stage `t`.
#[derive(Debug, Clone, Copy)]
pub struct Checkpoint {
    pub t: u32,
    pub tau_hat: f64,
    pub varsigma2_hat: f64,
}

/// First-exit digest of one (test, null) pair within a replication.
#[derive(Debug, Clone, Copy)]
pub struct ExitDigest {
    pub test: TestKind,
    pub tau_h0: f64,
    /// First monitored stage whose interval excluded `tau_h0`; the
    /// horizon when censored.
    pub stage: u32,
    pub censored: bool,
}

/// Everything a replication contributes to the summaries.
#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub rep: u32,
    /// Strictly increasing stage grid.
    pub checkpoints: Vec<Checkpoint>,
    pub exits: Vec<ExitDigest>,
    /// Values clamped by the EB rescaler (diagnostic).
    pub eb_clamps: u64,
}

impl RepOutcome {
    /// The checkpointed estimate at stage `t`, if that stage was recorded.
    pub fn tau_hat_at(&self, t: u32) -> Option<f64> {
        self.checkpoints.iter().find(|c| c.t == t).map(|c| c.tau_hat)
    }

    fn digests<'a>(
        &'a self,
        test: TestKind,
        tau_h0: f64,
    ) -> impl Iterator<Item = &'a ExitDigest> + 'a {
        self.exits.iter().filter(move |d| d.test == test && d.tau_h0 == tau_h0)
    }
}

/// `T x` unbiased sample variance of the replication estimates at `T`.
pub fn normalized_variance(tau_hats: &[f64], t: u32) -> Result<f64> {
    let n = tau_hats.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "normalized variance needs at least 2 replications, have {n}"
        )));
    }
    let mean = tau_hats.iter().sum::<f64>() / n as f64;
    let ss = tau_hats.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Ok(t as f64 * ss / (n as f64 - 1.0))
}

/// Empirical regret at horizon `T` from the normalized variance and the
/// efficiency bound: `T x (v_T - v_star)`.
pub fn empirical_regret(v_t: f64, v_star: f64, t: u32) -> f64 {
    t as f64 * (v_t - v_star)
}

/// Fraction of replications whose `(test, tau0)` interval sequence first
/// excluded `tau0` at or before stage `T`. With the true effect as the
/// null this is the cumulative miscoverage (error) rate.
///
/// `tau0` is matched bitwise against the digests' null values; both sides
/// come from the same configuration, so no tolerance is needed.
pub fn miscoverage(outcomes: &[RepOutcome], test: TestKind, tau0: f64, t: u32) -> f64 {
    let mut total = 0usize;
    let mut excluded = 0usize;
    for rep in outcomes {
        for d in rep.digests(test, tau0) {
            total += 1;
            if !d.censored && d.stage <= t {
                excluded += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        excluded as f64 / total as f64
    }
}

/// Power and stopping-time summary for a `(test, tau_h0)` pair.
#[derive(Debug, Clone, Copy)]
pub struct PowerStopping {
    /// Fraction of replications rejecting by stage `T`.
    pub power: f64,
    /// Mean stopping stage over all replications, censored values
    /// entering at the horizon.
    pub mean_stop: f64,
    /// Standard error of the mean stopping stage (sample SD / sqrt(reps)).
    pub se_stop: f64,
    /// Fraction of replications censored at the horizon.
    pub censored_frac: f64,
}

/// Folds the `(test, tau_h0)` digests of a suite; see [`PowerStopping`].
pub fn power_and_stopping(
    outcomes: &[RepOutcome],
    test: TestKind,
    tau_h0: f64,
    t: u32,
) -> PowerStopping {
    let mut stages = Vec::new();
    let mut rejected = 0usize;
    let mut censored = 0usize;
    for rep in outcomes {
        for d in rep.digests(test, tau_h0) {
            stages.push(d.stage as f64);
            if d.censored {
                censored += 1;
            } else if d.stage <= t {
                rejected += 1;
            }
        }
    }
    let n = stages.len();
    if n == 0 {
        return PowerStopping { power: 0.0, mean_stop: 0.0, se_stop: 0.0, censored_frac: 0.0 };
    }
    let mean = stages.iter().sum::<f64>() / n as f64;
    let se = if n < 2 {
        0.0
    } else {
        let ss = stages.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        (ss / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt()
    };
    PowerStopping {
        power: rejected as f64 / n as f64,
        mean_stop: mean,
        se_stop: se,
        censored_frac: censored as f64 / n as f64,
    }
}
