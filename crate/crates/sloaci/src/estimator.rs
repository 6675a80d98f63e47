//! Stage-wise AIPW pseudo-outcomes and the running ATE estimator.
//!
//! At stage `t` with covariates `x`, potential surrogates `s`, assigned
//! arm `z`, realized outcome `y`, assignment probability `pi`, and
//! predictors `mu0_hat`, `mu1_hat` fitted on earlier stages only, the
//! pseudo-outcome is
//!
//! ```text
//! phi = mu1_hat(x,s) - mu0_hat(x,s)
//!     + 1{z=1} (y - mu1_hat(x,s)) / pi
//!     - 1{z=0} (y - mu0_hat(x,s)) / (1 - pi)
//! ```
//!
//! Conditionally on the past, `phi` is centered at the conditional effect
//! whatever the predictors are (the augmentation cancels in expectation),
//! which is what makes the running mean of the `phi` stream an unbiased
//! ATE estimator under adaptive allocation. The variance plug-in uses the
//! divisor-`T` convention (`mean((phi - tau_hat)^2)`, not `T - 1`) to
//! match the normalized-variance targets it is compared against; don't
//! "fix" it to the unbiased sample variance.
//!
//! Sums are accumulated in compensated (Neumaier) form so that very long
//! streams don't drift at the tolerances the acceptance checks use.

use crate::dgp::{self, ScenarioSpec, Unit};
use crate::plm::{History, MuPredictor};
use crate::{Error, Result};

/// One stage of a trajectory, as written to trajectory output.
#[derive(Debug, Clone, Copy)]
pub struct PhiRecord {
    pub t: u32,
    pub pi: f64,
    pub z: u8,
    pub phi: f64,
    pub tau_hat: f64,
    pub varsigma2_hat: f64,
}

/// AIPW pseudo-outcome from already-evaluated predictor values.
pub fn phi_from_values(mu0: f64, mu1: f64, z: u8, y: f64, pi: f64) -> Result<f64> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::Invalid(format!(
            "assignment probability {pi} outside (0, 1)"
        )));
    }
    if z > 1 {
        return Err(Error::Invalid(format!("arm must be 0 or 1, got {z}")));
    }
    let base = mu1 - mu0;
    Ok(if z == 1 {
        base + (y - mu1) / pi
    } else {
        base - (y - mu0) / (1.0 - pi)
    })
}

/// AIPW pseudo-outcome, evaluating the predictors at `(x, s)`.
pub fn single_stage_phi(
    x: &[f64],
    s: [f64; 2],
    z: u8,
    y: f64,
    pi: f64,
    mu0_hat: &dyn MuPredictor,
    mu1_hat: &dyn MuPredictor,
) -> Result<f64> {
    phi_from_values(mu0_hat.mu(x, s), mu1_hat.mu(x, s), z, y, pi)
}

/// Arithmetic mean of a pseudo-outcome stream.
pub fn running_ate(phis: &[f64]) -> Result<f64> {
    if phis.is_empty() {
        return Err(Error::InsufficientData("running ATE of an empty stream".into()));
    }
    Ok(neumaier_sum(phis.iter().copied()) / phis.len() as f64)
}

/// Divisor-`T` variance plug-in around a given center.
pub fn running_variance(phis: &[f64], tau_hat: f64) -> Result<f64> {
    if phis.is_empty() {
        return Err(Error::InsufficientData("running variance of an empty stream".into()));
    }
    let ss = neumaier_sum(phis.iter().map(|p| {
        let d = p - tau_hat;
        d * d
    }));
    Ok(ss / phis.len() as f64)
}

/// The infeasible oracle pseudo-outcome: true conditional means and the
/// true Neyman allocation.
pub fn oracle_phi(unit: &Unit, z: u8, spec: &ScenarioSpec) -> f64 {
    assert!(z < 2, "arm must be 0 or 1");
    let s0 = spec.arms[0].sigma_res();
    let s1 = spec.arms[1].sigma_res();
    let pi_star = s1 / (s0 + s1);
    let mu0 = dgp::true_mu(spec, 0, &unit.x, unit.s[0]);
    let mu1 = dgp::true_mu(spec, 1, &unit.x, unit.s[1]);
    phi_from_values(mu0, mu1, z, unit.y[z as usize], pi_star)
        .expect("oracle allocation is interior by construction")
}

/// The batch-wise estimator form that normalizes the initialization and
/// concentration phases separately:
///
/// ```text
/// (1/T0)    * sum_{t <= T0} [ 1{z=1} y/(1/2) - 1{z=0} y/(1/2) ]
/// + (1/(T-T0)) * sum_{t > T0} phi_t
/// ```
///
/// The initialization term is recomputed from the history (inverse
/// probability weighting at the recorded 1/2); the concentration terms
/// are the stage pseudo-outcomes in `phis`, aligned with the history
/// (`phis[j]` belongs to stage `j + 1`; entries at or below `t0` are
/// ignored). Note this estimates the two phases' means separately and
/// adds them; the uniformly normalized running mean of the same stream is
/// [`running_ate`], which is what the suite runner reports.
pub fn batchwise_ate(history: &History, phis: &[f64], t0: usize) -> Result<f64> {
    let t = history.len();
    if t != phis.len() {
        return Err(Error::Invalid(format!(
            "history has {t} stages but {} pseudo-outcomes were supplied",
            phis.len()
        )));
    }
    if t <= t0 {
        return Err(Error::InsufficientData(format!(
            "batch-wise estimator needs T > T0, got T = {t}, T0 = {t0}"
        )));
    }
    let init = if t0 == 0 {
        0.0
    } else {
        neumaier_sum(history.records()[..t0].iter().map(|rec| {
            let signed = if rec.z == 1 { rec.y } else { -rec.y };
            signed / 0.5
        })) / t0 as f64
    };
    let conc = neumaier_sum(phis[t0..].iter().copied()) / (t - t0) as f64;
    Ok(init + conc)
}

/// Streaming mean and divisor-`T` variance of a pseudo-outcome stream
/// (Welford updates; one pass, O(1) state).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        RunningMoments::default()
    }

    pub fn push(&mut self, phi: f64) {
        self.n += 1;
        let d1 = phi - self.mean;
        self.mean += d1 / self.n as f64;
        self.m2 += d1 * (phi - self.mean);
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Running mean; requires at least one observation.
    pub fn tau_hat(&self) -> f64 {
        assert!(self.n > 0, "no pseudo-outcomes accumulated");
        self.mean
    }

    /// Divisor-`T` variance plug-in; requires at least one observation.
    pub fn varsigma2_hat(&self) -> f64 {
        assert!(self.n > 0, "no pseudo-outcomes accumulated");
        self.m2 / self.n as f64
    }
}

/// Compensated (Neumaier) summation.
fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
