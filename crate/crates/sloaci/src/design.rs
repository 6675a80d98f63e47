//! Allocation policies for the sequential experiment.
//!
//! Every design starts with an initialization phase of `t0_init` stages in
//! which arms alternate deterministically (arm 0 at odd stages, arm 1 at
//! even stages) and the recorded assignment probability is 1/2. After
//! initialization the variants diverge:
//!
//! * **SLOACI** - adaptive Neyman allocation on the partially linear
//!   residual scales: `pi_t = clip(sigma1_hat / (sigma0_hat + sigma1_hat))`
//!   with the shrinking clip threshold `zeta_t = 0.5 * t^(-eta)`.
//! * **RAR** - the same rule on outcome-only residual scales (surrogates
//!   ignored).
//! * **RARS** - the same rule with the outcome smoothed on the covariates
//!   augmented by the arm's surrogate.
//! * **RCT** - fixed `pi = 1/2` (estimation still uses the fitted models).
//! * **OPT** - the infeasible oracle: true conditional means and the true
//!   Neyman allocation from stage 1 onward.
//!
//! Under a batch schedule of size `b`, the allocation is recomputed only at
//! batch starts (stages `t0_init + (k-1) b + 1`) with the clip threshold
//! evaluated there, and reused within the batch; `b = 1` recovers the fully
//! adaptive design exactly.

use rand::Rng;

use crate::plm;
use crate::{Error, Result};

/// Design variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Sloaci,
    Rar,
    Rars,
    Rct,
    Opt,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Sloaci => "sloaci",
            Variant::Rar => "rar",
            Variant::Rars => "rars",
            Variant::Rct => "rct",
            Variant::Opt => "opt",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "sloaci" => Ok(Variant::Sloaci),
            "rar" => Ok(Variant::Rar),
            "rars" => Ok(Variant::Rars),
            "rct" => Ok(Variant::Rct),
            "opt" => Ok(Variant::Opt),
            other => Err(Error::Config(format!(
                "unknown design variant '{other}' (expected sloaci|rar|rars|rct|opt)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        Variant::parse(s)
    }
}

/// Model backend used by SLOACI and RCT fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Nonparametric,
    Linear,
    Profile,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Nonparametric => "nonparametric",
            Backend::Linear => "linear",
            Backend::Profile => "profile",
        }
    }

    pub fn parse(s: &str) -> Result<Backend> {
        match s.to_ascii_lowercase().as_str() {
            "nonparametric" => Ok(Backend::Nonparametric),
            "linear" => Ok(Backend::Linear),
            "profile" => Ok(Backend::Profile),
            other => Err(Error::Config(format!(
                "unknown model backend '{other}' (expected nonparametric|linear|profile)"
            ))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Backend> {
        Backend::parse(s)
    }
}

/// A complete allocation policy.
#[derive(Debug, Clone)]
pub struct DesignPolicy {
    pub variant: Variant,
    /// Clipping rate `eta > 0`.
    pub eta: f64,
    /// Initialization length (alternating assignment, `pi` recorded 1/2).
    pub t0_init: u32,
    /// Batch size; 1 means fully adaptive.
    pub batch: u32,
    /// Backend for the partially linear fits (SLOACI, RCT).
    pub backend: Backend,
    /// Restrict the surrogate regression to assigned-arm stages.
    pub surrogate_observed_only: bool,
}

impl Default for DesignPolicy {
    fn default() -> Self {
        DesignPolicy {
            variant: Variant::Sloaci,
            eta: 0.25,
            t0_init: 20,
            batch: 1,
            backend: Backend::Nonparametric,
            surrogate_observed_only: false,
        }
    }
}

impl DesignPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Invalid(format!("clipping rate eta = {} must be positive", self.eta)));
        }
        if self.t0_init < 2 {
            return Err(Error::Invalid(format!(
                "initialization length T0 = {} must be at least 2",
                self.t0_init
            )));
        }
        if self.batch < 1 {
            return Err(Error::Invalid("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Asymptotic-normality condition on the clipping rate
    /// (`eta < 2 beta / (2 beta + kappa)` with `kappa = 2 beta + d`);
    /// violations degrade the theory but not the mechanics, so they warn
    /// rather than fail.
    pub fn stability_warning(&self, beta: f64, d: usize) -> Option<String> {
        let kappa = 2.0 * beta + d as f64;
        let limit = 2.0 * beta / (2.0 * beta + kappa);
        if self.eta >= limit {
            Some(format!(
                "clipping rate eta = {} is at or above the stability limit {limit:.4} for beta = {beta}, d = {d}",
                self.eta
            ))
        } else {
            None
        }
    }

    /// Stage at which the batch containing stage `t` begins (`t > t0_init`).
    pub fn batch_start(&self, t: u32) -> u32 {
        debug_assert!(t > self.t0_init);
        let offset = (t - self.t0_init - 1) / self.batch;
        self.t0_init + offset * self.batch + 1
    }
}

/// Inputs the allocation rule consumes at a decision stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllocationState {
    /// Residual SD estimates `[sigma0_hat, sigma1_hat]` from the current
    /// fits; absent while no fits exist.
    pub sigma_hats: Option<[f64; 2]>,
    /// Oracle allocation, consulted by the OPT variant.
    pub pi_star: Option<f64>,
}

/// The allocation decision for a stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Allocation {
    /// Deterministic initialization assignment; `pi` is recorded as 1/2.
    Alternate { z: u8 },
    /// Bernoulli assignment with the given probability.
    Randomize { pi: f64 },
}

impl Allocation {
    /// The assignment probability recorded for estimation purposes.
    pub fn recorded_pi(&self) -> f64 {
        match self {
            Allocation::Alternate { .. } => 0.5,
            Allocation::Randomize { pi } => *pi,
        }
    }
}

/// Shrinking clip threshold `zeta_t = 0.5 * t^(-eta)`.
pub fn clipping_threshold(t: u32, eta: f64) -> f64 {
    assert!(t >= 1, "stage must be at least 1");
    0.5 * (t as f64).powf(-eta)
}

/// Projects `pi_tilde` onto `[zeta, 1 - zeta]`.
pub fn clip(pi_tilde: f64, zeta: f64) -> f64 {
    assert!(zeta > 0.0 && zeta <= 0.5, "clip threshold must lie in (0, 0.5]");
    pi_tilde.clamp(zeta, 1.0 - zeta)
}

/// Estimated Neyman allocation `sigma1 / (sigma0 + sigma1)`; both inputs
/// zero fall back to 1/2 (no information, balanced split).
pub fn propose_allocation(sigma0_hat: f64, sigma1_hat: f64) -> f64 {
    assert!(sigma0_hat >= 0.0 && sigma1_hat >= 0.0, "SD estimates must be nonnegative");
    let total = sigma0_hat + sigma1_hat;
    if total == 0.0 {
        0.5
    } else {
        sigma1_hat / total
    }
}

/// The allocation in force at stage `t`.
///
/// For `t <= t0_init` this is the deterministic alternation (arm 0 at odd
/// stages). Afterwards the variant rules of the module docs apply, with
/// the clip threshold evaluated at `t`; under a batch schedule the caller
/// invokes this only at batch starts and reuses the result.
pub fn next_allocation(
    policy: &DesignPolicy,
    state: &AllocationState,
    t: u32,
) -> Result<Allocation> {
    assert!(t >= 1, "stage must be at least 1");
    if t <= policy.t0_init {
        return Ok(Allocation::Alternate { z: if t % 2 == 0 { 1 } else { 0 } });
    }
    let pi = match policy.variant {
        Variant::Rct => 0.5,
        Variant::Opt => state.pi_star.ok_or_else(|| {
            Error::Invalid("the OPT variant needs the oracle allocation pi_star".into())
        })?,
        Variant::Sloaci | Variant::Rar | Variant::Rars => {
            let [s0, s1] = state.sigma_hats.ok_or_else(|| {
                Error::InsufficientData(format!(
                    "no fitted arm scales available at stage {t} (post-initialization)"
                ))
            })?;
            clip(propose_allocation(s0, s1), clipping_threshold(t, policy.eta))
        }
    };
    Ok(Allocation::Randomize { pi })
}

/// Draws the arm for a stage: deterministic during initialization, a
/// Bernoulli draw otherwise (one uniform consumed).
pub fn assign_treatment<R: Rng + ?Sized>(allocation: Allocation, rng: &mut R) -> u8 {
    match allocation {
        Allocation::Alternate { z } => z,
        Allocation::Randomize { pi } => {
            debug_assert!(pi > 0.0 && pi < 1.0, "assignment probability must be in (0, 1)");
            let u: f64 = rng.random();
            u8::from(u < pi)
        }
    }
}

/// Fits both arms under the policy's variant and backend.
pub fn fit_arms(
    policy: &DesignPolicy,
    history: &plm::History,
    kernel: &crate::kernel::KernelSpec,
    c_h: f64,
    beta: f64,
) -> Result<[plm::ArmFit; 2]> {
    let surrogate_sample = if policy.surrogate_observed_only {
        plm::SurrogateSample::ObservedOnly
    } else {
        plm::SurrogateSample::Pooled
    };
    let fit_one = |z: u8| -> Result<plm::ArmFit> {
        match policy.variant {
            Variant::Rar => plm::fit_outcome_only(history, z, kernel, c_h, beta),
            Variant::Rars => plm::fit_outcome_augmented(history, z, kernel, c_h, beta),
            Variant::Sloaci | Variant::Rct => match policy.backend {
                Backend::Nonparametric => plm::fit_nonparametric_opts(
                    history,
                    z,
                    kernel,
                    c_h,
                    beta,
                    surrogate_sample,
                ),
                Backend::Linear => plm::fit_linear(history, z),
                Backend::Profile => plm::fit_profile(history, z, kernel, c_h, beta),
            },
            Variant::Opt => Err(Error::Invalid(
                "the oracle variant does not fit models".into(),
            )),
        }
    };
    Ok([fit_one(0)?, fit_one(1)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn clipping_threshold_reference_values() {
        assert_eq!(clipping_threshold(1, 0.25), 0.5);
        assert_eq!(clipping_threshold(1, 3.0), 0.5);
        assert_relative_eq!(clipping_threshold(16, 0.25), 0.25, epsilon = 1e-12);
        assert_relative_eq!(clipping_threshold(2, 0.25), 0.42045, epsilon = 1e-5);
    }

    #[test]
    fn clip_reference_values() {
        assert_eq!(clip(0.6, 0.05), 0.6);
        assert_eq!(clip(0.99, 0.05), 0.95);
        assert_eq!(clip(0.01, 0.05), 0.05);
        let zeta2 = clipping_threshold(2, 0.25);
        assert_relative_eq!(clip(0.6, zeta2), 0.57955, epsilon = 1e-5);
        // Idempotence.
        for x in [-0.3, 0.0, 0.2, 0.5, 0.8, 1.4] {
            let once = clip(x, 0.1);
            assert_eq!(clip(once, 0.1), once);
        }
    }

    #[test]
    fn propose_allocation_reference_values() {
        assert_relative_eq!(propose_allocation(0.24, 0.36), 0.6, epsilon = 1e-12);
        assert_relative_eq!(propose_allocation(0.12, 0.48), 0.8, epsilon = 1e-12);
        assert_eq!(propose_allocation(0.7, 0.7), 0.5);
        assert_eq!(propose_allocation(0.0, 0.0), 0.5);
    }

    #[test]
    fn propose_allocation_monotonicity() {
        let base = propose_allocation(0.3, 0.4);
        assert!(propose_allocation(0.3, 0.5) > base);
        assert!(propose_allocation(0.4, 0.4) < base);
    }

    #[test]
    fn init_phase_alternates() {
        let policy = DesignPolicy::default();
        let state = AllocationState::default();
        assert_eq!(
            next_allocation(&policy, &state, 3).unwrap(),
            Allocation::Alternate { z: 0 }
        );
        assert_eq!(
            next_allocation(&policy, &state, 4).unwrap(),
            Allocation::Alternate { z: 1 }
        );
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(assign_treatment(Allocation::Alternate { z: 1 }, &mut rng), 1);
    }

    #[test]
    fn post_init_variants() {
        let state = AllocationState {
            sigma_hats: Some([0.24, 0.36]),
            pi_star: Some(0.6),
        };
        let rct = DesignPolicy { variant: Variant::Rct, ..DesignPolicy::default() };
        assert_eq!(
            next_allocation(&rct, &state, 500).unwrap(),
            Allocation::Randomize { pi: 0.5 }
        );
        let opt = DesignPolicy { variant: Variant::Opt, ..DesignPolicy::default() };
        assert_eq!(
            next_allocation(&opt, &state, 500).unwrap(),
            Allocation::Randomize { pi: 0.6 }
        );
        // Composition of propose + clip at t = 2 with a hypothetical
        // one-stage initialization.
        let sloaci = DesignPolicy { t0_init: 1, ..DesignPolicy::default() };
        match next_allocation(&sloaci, &state, 2).unwrap() {
            Allocation::Randomize { pi } => assert_relative_eq!(pi, 0.57955, epsilon = 1e-5),
            other => panic!("expected randomized allocation, got {other:?}"),
        }
    }

    #[test]
    fn missing_fits_after_init_is_an_error() {
        let policy = DesignPolicy::default();
        let state = AllocationState::default();
        let err = next_allocation(&policy, &state, 21).unwrap_err();
        assert!(matches!(err, crate::Error::InsufficientData(_)));
    }

    #[test]
    fn clipping_bound_holds_for_adaptive_variants() {
        let policy = DesignPolicy::default();
        for t in [21u32, 50, 500, 2500] {
            for sig in [[0.0001, 0.9], [0.9, 0.0001], [0.3, 0.3]] {
                let state = AllocationState { sigma_hats: Some(sig), pi_star: None };
                let zeta = clipping_threshold(t, policy.eta);
                match next_allocation(&policy, &state, t).unwrap() {
                    Allocation::Randomize { pi } => {
                        assert!(pi >= zeta - 1e-15 && pi <= 1.0 - zeta + 1e-15);
                    }
                    other => panic!("unexpected {other:?}"),
                }
            }
        }
    }

    #[test]
    fn assignment_frequency_matches_probability() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 100_000;
        let mut ones = 0u32;
        for _ in 0..n {
            ones += u32::from(assign_treatment(Allocation::Randomize { pi: 0.95 }, &mut rng));
        }
        let frac = ones as f64 / n as f64;
        assert!((frac - 0.95).abs() < 0.005, "frac = {frac}");
    }

    #[test]
    fn batch_start_grid() {
        let policy = DesignPolicy { t0_init: 20, batch: 50, ..DesignPolicy::default() };
        assert_eq!(policy.batch_start(21), 21);
        assert_eq!(policy.batch_start(70), 21);
        assert_eq!(policy.batch_start(71), 71);
        assert_eq!(policy.batch_start(120), 71);
        let adaptive = DesignPolicy { t0_init: 20, batch: 1, ..DesignPolicy::default() };
        assert_eq!(adaptive.batch_start(21), 21);
        assert_eq!(adaptive.batch_start(22), 22);
    }

    #[test]
    fn stability_warning_thresholds() {
        let policy = DesignPolicy::default();
        assert!(policy.stability_warning(1.0, 1).is_none());
        let fast = DesignPolicy { eta: 0.5, ..DesignPolicy::default() };
        assert!(fast.stability_warning(1.0, 1).is_some());
    }
}
