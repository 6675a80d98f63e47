//! The per-replication engine: one full trajectory from stage 1 to the
//! horizon, producing checkpointed summaries, first-exit digests for every
//! configured (test, null) pair, and optional per-stage records.
//!
//! Stage order within a replication is fixed: draw the unit, decide the
//! allocation (alternation during initialization, the variant rule at
//! batch starts afterwards), assign, record. Pseudo-outcomes for the
//! initialization stages are emitted retroactively once the first fits
//! exist, so every stage contributes to the running estimate under the
//! same fitted models that close the initialization phase. After that,
//! stage `t` always uses the fits from the previous batch boundary, and
//! models are refit once the batch ending at `t` is complete.

use rand_chacha::ChaCha12Rng;

use crate::design::{self, Allocation, AllocationState, Variant};
use crate::dgp::{sample_unit, true_mu};
use crate::estimator::{phi_from_values, PhiRecord, RunningMoments};
use crate::kernel;
use crate::metrics::{Checkpoint, ExitDigest, RepOutcome};
use crate::plm::{predict_mu, ArmFit, History, StageRecord};
use crate::seqtest::{
    asy_interval, asy_rho_opt, bf_interval, clt_interval, EbTracker, IntervalPoint, Rescale,
    RhoChoice, TestKind,
};
use crate::{Error, Result};

use super::config::{RunConfig, TestSuite};

/// One per-stage confidence interval row (recorded for replication 0
/// when interval recording is on).
#[derive(Debug, Clone, Copy)]
pub struct IntervalRow {
    pub test: TestKind,
    pub tau_h0: f64,
    pub t: u32,
    pub lower: f64,
    pub upper: f64,
    /// Whether the stopping rule for this null has triggered by stage `t`.
    pub stopped: bool,
    /// Set on the horizon row when the rule never triggered.
    pub censored: bool,
}

/// Everything one replication produces.
#[derive(Debug, Clone)]
pub struct RepRun {
    pub outcome: RepOutcome,
    pub trajectory: Option<Vec<PhiRecord>>,
    pub intervals: Option<Vec<IntervalRow>>,
}

/// Runs replication `rep` of `cfg` to the horizon.
///
/// The replication draws from RNG stream `rep` of the master seed and is
/// bit-reproducible. Errors are annotated with the replication and stage
/// at which they occurred.
pub fn run_replication(cfg: &RunConfig, rep: u32) -> Result<RepRun> {
    cfg.validate()?;
    Engine::new(cfg, rep).run()
}

/// What the test bank consumes per emitted stage.
struct StageObs {
    t: u32,
    y: f64,
    mu0: f64,
    mu1: f64,
    z: u8,
    pi: f64,
    tau_hat: f64,
    varsigma2_hat: f64,
}

/// Streaming state of every configured sequential test. Interval streams
/// are null-independent, so one stream per test kind is shared by all
/// monitored nulls; exits are tracked per (kind, null) slot.
struct TestBank {
    kinds: Vec<TestKind>,
    nulls: Vec<f64>,
    alpha: f64,
    t0: u32,
    horizon: u32,
    /// Mixture rate for the asymptotic confidence sequence, fixed per
    /// replication the first time the variance estimate at the peeking
    /// start is available.
    rho_resolved: Option<f64>,
    eb: Option<EbTracker>,
    exits: Vec<Option<u32>>,
    rows: Option<Vec<IntervalRow>>,
}

impl TestBank {
    fn new(
        suite: &TestSuite,
        horizon: u32,
        eb_bounds: Option<(f64, f64)>,
        record: bool,
    ) -> TestBank {
        let eb = suite.kinds.contains(&TestKind::Eb).then(|| {
            EbTracker::new(suite.test_config(TestKind::Eb, suite.tau_h0s[0], horizon), eb_bounds)
        });
        TestBank {
            kinds: suite.kinds.clone(),
            nulls: suite.tau_h0s.clone(),
            alpha: suite.alpha,
            t0: suite.t0,
            horizon,
            rho_resolved: match suite.rho {
                RhoChoice::Fixed(r) => Some(r),
                RhoChoice::Auto => None,
            },
            eb,
            exits: vec![None; suite.kinds.len() * suite.tau_h0s.len()],
            rows: record.then(Vec::new),
        }
    }

    fn interval_for(&mut self, kind: TestKind, obs: &StageObs) -> Result<IntervalPoint> {
        Ok(match kind {
            TestKind::Clt => {
                clt_interval(obs.tau_hat, obs.varsigma2_hat.sqrt(), obs.t, self.alpha)
            }
            TestKind::Bf => bf_interval(
                obs.tau_hat,
                obs.varsigma2_hat.sqrt(),
                obs.t,
                self.alpha,
                self.horizon,
            )?,
            TestKind::Asy => {
                if self.rho_resolved.is_none() && obs.t >= self.t0 && obs.varsigma2_hat > 0.0 {
                    self.rho_resolved = Some(asy_rho_opt(self.t0, obs.varsigma2_hat, self.alpha)?);
                }
                let rho = match self.rho_resolved {
                    Some(r) => r,
                    // Provisional rate before the peeking start; these
                    // intervals are recorded but never consulted for
                    // stopping.
                    None if obs.varsigma2_hat > 0.0 => {
                        asy_rho_opt(obs.t, obs.varsigma2_hat, self.alpha)?
                    }
                    None => 1.0,
                };
                asy_interval(obs.tau_hat, obs.varsigma2_hat, obs.t, rho, self.alpha)
            }
            TestKind::Eb => self
                .eb
                .as_mut()
                .expect("EB tracker is built whenever EB is configured")
                .update(obs.y, obs.mu0, obs.mu1, obs.z, obs.pi),
        })
    }

    fn update(&mut self, obs: &StageObs) -> Result<()> {
        for ki in 0..self.kinds.len() {
            let kind = self.kinds[ki];
            let iv = self.interval_for(kind, obs)?;
            for ni in 0..self.nulls.len() {
                let slot = ki * self.nulls.len() + ni;
                let h0 = self.nulls[ni];
                if self.exits[slot].is_none()
                    && obs.t >= self.t0
                    && (h0 < iv.lower || h0 > iv.upper)
                {
                    self.exits[slot] = Some(obs.t);
                }
                if let Some(rows) = &mut self.rows {
                    rows.push(IntervalRow {
                        test: kind,
                        tau_h0: h0,
                        t: obs.t,
                        lower: iv.lower,
                        upper: iv.upper,
                        stopped: self.exits[slot].is_some(),
                        censored: obs.t == self.horizon && self.exits[slot].is_none(),
                    });
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> (Vec<ExitDigest>, u64, Option<Vec<IntervalRow>>) {
        let mut digests = Vec::with_capacity(self.exits.len());
        for (ki, kind) in self.kinds.iter().enumerate() {
            for (ni, h0) in self.nulls.iter().enumerate() {
                digests.push(match self.exits[ki * self.nulls.len() + ni] {
                    Some(stage) => {
                        ExitDigest { test: *kind, tau_h0: *h0, stage, censored: false }
                    }
                    None => ExitDigest {
                        test: *kind,
                        tau_h0: *h0,
                        stage: self.horizon,
                        censored: true,
                    },
                });
            }
        }
        let clamps = self.eb.as_ref().map_or(0, |t| t.clamp_count);
        (digests, clamps, self.rows)
    }
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    rep: u32,
    rng: ChaCha12Rng,
    history: History,
    fits: Option<[ArmFit; 2]>,
    /// Allocation in force for the current batch.
    pi_current: f64,
    moments: RunningMoments,
    bank: Option<TestBank>,
    trajectory: Option<Vec<PhiRecord>>,
    checkpoints: Vec<Checkpoint>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a RunConfig, rep: u32) -> Engine<'a> {
        Engine {
            cfg,
            rep,
            rng: cfg.rng.stream(rep),
            history: History::new(cfg.scenario.dim()),
            fits: None,
            pi_current: 0.5,
            moments: RunningMoments::new(),
            bank: None,
            trajectory: cfg.record_trajectories.then(Vec::new),
            checkpoints: Vec::new(),
        }
    }

    fn run(mut self) -> Result<RepRun> {
        for t in 1..=self.cfg.horizon {
            self.step(t).map_err(|e| e.in_replication(self.rep, t))?;
        }
        let (exits, eb_clamps, intervals) = match self.bank {
            Some(bank) => bank.finish(),
            None => (Vec::new(), 0, None),
        };
        Ok(RepRun {
            outcome: RepOutcome {
                rep: self.rep,
                checkpoints: self.checkpoints,
                exits,
                eb_clamps,
            },
            trajectory: self.trajectory,
            intervals,
        })
    }

    fn step(&mut self, t: u32) -> Result<()> {
        let policy = &self.cfg.policy;
        let unit = sample_unit(&self.cfg.scenario, &mut self.rng);
        let alloc = if t <= policy.t0_init {
            design::next_allocation(policy, &AllocationState::default(), t)?
        } else {
            if policy.batch_start(t) == t {
                self.pi_current = self.decide_pi(t)?;
            }
            Allocation::Randomize { pi: self.pi_current }
        };
        let z = design::assign_treatment(alloc, &mut self.rng);
        let pi = alloc.recorded_pi();
        let y = unit.y[z as usize];
        self.history.push(StageRecord { x: unit.x.clone(), z, s: unit.s, y, pi })?;

        if t <= policy.t0_init {
            if t == policy.t0_init {
                self.close_initialization()?;
            }
        } else {
            self.emit_stage(t, &unit.x, unit.s, z, y, pi)?;
            let batch_complete = (t - policy.t0_init) % policy.batch == 0;
            if policy.variant != Variant::Opt && batch_complete && t < self.cfg.horizon {
                self.refit()?;
            }
        }
        Ok(())
    }

    /// Allocation for the batch starting at stage `t`.
    fn decide_pi(&mut self, t: u32) -> Result<f64> {
        let state = AllocationState {
            sigma_hats: self.fits.as_ref().map(|f| [f[0].sigma_hat(), f[1].sigma_hat()]),
            pi_star: Some(self.cfg.oracle.pi_star),
        };
        match design::next_allocation(&self.cfg.policy, &state, t)? {
            Allocation::Randomize { pi } => Ok(pi),
            Allocation::Alternate { .. } => unreachable!("alternation ends at t0_init"),
        }
    }

    /// Runs once at the end of the initialization phase: fit the first
    /// models, set up the test bank, and emit the initialization stages
    /// retroactively under those fits (assignment probability 1/2).
    fn close_initialization(&mut self) -> Result<()> {
        if self.cfg.policy.variant != Variant::Opt {
            self.refit()?;
        }
        if let Some(suite) = &self.cfg.suite {
            let bounds = self.resolve_eb_bounds(suite);
            self.bank = Some(TestBank::new(
                suite,
                self.cfg.horizon,
                bounds,
                self.cfg.record_intervals && self.rep == 0,
            ));
        }
        let init: Vec<(Vec<f64>, [f64; 2], u8, f64)> = self
            .history
            .records()
            .iter()
            .map(|r| (r.x.clone(), r.s, r.z, r.y))
            .collect();
        for (j, (x, s, z, y)) in init.into_iter().enumerate() {
            self.emit_stage(j as u32 + 1, &x, s, z, y, 0.5)?;
        }
        Ok(())
    }

    /// Bounds for the EB rescaler. `Auto` brackets the initialization
    /// outcomes with a three-standard-deviation pad on each side.
    fn resolve_eb_bounds(&self, suite: &TestSuite) -> Option<(f64, f64)> {
        match suite.eb_rescale {
            Rescale::None => None,
            Rescale::Fixed { lo, hi } => Some((lo, hi)),
            Rescale::Auto => {
                let ys: Vec<f64> = self.history.records().iter().map(|r| r.y).collect();
                let n = ys.len() as f64;
                let mean = ys.iter().sum::<f64>() / n;
                let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let pad = if ys.len() < 2 {
                    1.0
                } else {
                    let var =
                        ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0);
                    if var > 0.0 {
                        3.0 * var.sqrt()
                    } else {
                        1.0
                    }
                };
                Some((lo - pad, hi + pad))
            }
        }
    }

    fn emit_stage(&mut self, t: u32, x: &[f64], s: [f64; 2], z: u8, y: f64, pi: f64) -> Result<()> {
        let (mu0, mu1) = self.predict_pair(x, s)?;
        let phi = phi_from_values(mu0, mu1, z, y, pi)?;
        if !phi.is_finite() {
            return Err(Error::NonFinite(format!("pseudo-outcome at stage {t} is {phi}")));
        }
        self.moments.push(phi);
        let tau_hat = self.moments.tau_hat();
        let varsigma2_hat = self.moments.varsigma2_hat();
        if !tau_hat.is_finite() || !varsigma2_hat.is_finite() {
            return Err(Error::NonFinite(format!(
                "running summaries at stage {t} are not finite"
            )));
        }
        if let Some(rows) = &mut self.trajectory {
            rows.push(PhiRecord { t, pi, z, phi, tau_hat, varsigma2_hat });
        }
        if t % self.cfg.checkpoint_every == 0 || t == self.cfg.horizon {
            self.checkpoints.push(Checkpoint { t, tau_hat, varsigma2_hat });
        }
        if let Some(bank) = &mut self.bank {
            bank.update(&StageObs { t, y, mu0, mu1, z, pi, tau_hat, varsigma2_hat })?;
        }
        Ok(())
    }

    fn predict_pair(&self, x: &[f64], s: [f64; 2]) -> Result<(f64, f64)> {
        if self.cfg.policy.variant == Variant::Opt {
            return Ok((
                true_mu(&self.cfg.scenario, 0, x, s[0]),
                true_mu(&self.cfg.scenario, 1, x, s[1]),
            ));
        }
        let fits = self.fits.as_ref().ok_or_else(|| {
            Error::InsufficientData("no fitted models available at emission time".into())
        })?;
        Ok((predict_mu(&fits[0], x, s), predict_mu(&fits[1], x, s)))
    }

    fn refit(&mut self) -> Result<()> {
        let c_h = match self.cfg.c_h {
            Some(c) => c,
            None => {
                let xs: Vec<f64> = self
                    .history
                    .records()
                    .iter()
                    .flat_map(|r| r.x.iter().copied())
                    .collect();
                kernel::default_scale(&xs, self.history.dim())?
            }
        };
        self.fits = Some(design::fit_arms(
            &self.cfg.policy,
            &self.history,
            &self.cfg.kernel,
            c_h,
            self.cfg.beta,
        )?);
        Ok(())
    }
}
