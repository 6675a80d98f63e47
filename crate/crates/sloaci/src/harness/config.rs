//! Run configuration: typed settings, the flat `key = value` config file
//! format, flag precedence, and the resolved [`RunConfig`] handed to the
//! engine.
//!
//! Precedence is defaults < config file < command-line flags. Within one
//! config file a key given twice with two different values is a conflict
//! and the error names both line numbers; `model.backend` and
//! `design.backend` are aliases and disagreement between them is also a
//! conflict.

use std::path::PathBuf;

use crate::design::{Backend, DesignPolicy, Variant};
use crate::dgp::{built_in_scenario, oracle_quantities, OracleQuantities, ScenarioSpec};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::seqtest::{Rescale, RhoChoice, TestConfig, TestKind};
use crate::{Error, Result};

use super::RngPlan;

/// Sequential-testing block of a run: which tests, against which nulls,
/// with shared level and peeking parameters. Interval streams do not
/// depend on the null, so one tracker per test kind serves every
/// configured `tau_h0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSuite {
    pub kinds: Vec<TestKind>,
    pub tau_h0s: Vec<f64>,
    pub alpha: f64,
    /// First stage at which stopping is allowed (peeking start).
    pub t0: u32,
    pub rho: RhoChoice,
    pub eb_c: f64,
    pub eb_nu0_sq: f64,
    pub eb_xi_hat0: f64,
    pub eb_rescale: Rescale,
}

impl TestSuite {
    /// Expand one (kind, null) cell into a full per-test configuration.
    pub fn test_config(&self, kind: TestKind, tau_h0: f64, horizon: u32) -> TestConfig {
        TestConfig {
            test: kind,
            alpha: self.alpha,
            t0: self.t0,
            horizon,
            rho: self.rho,
            c: self.eb_c,
            nu0_sq: self.eb_nu0_sq,
            xi_hat0: self.eb_xi_hat0,
            tau_h0,
            rescale: self.eb_rescale,
        }
    }

    pub fn validate(&self, horizon: u32) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("test suite lists no tests".into()));
        }
        if self.tau_h0s.is_empty() {
            return Err(Error::Config("test suite lists no null values".into()));
        }
        for kind in &self.kinds {
            for &h0 in &self.tau_h0s {
                self.test_config(*kind, h0, horizon).validate()?;
            }
        }
        Ok(())
    }
}

/// Fully resolved inputs for one suite of replications.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    /// Oracle quantities for the scenario, computed once up front
    /// (the OPT design and the regret summaries both read them).
    pub oracle: OracleQuantities,
    pub policy: DesignPolicy,
    pub kernel: KernelSpec,
    /// Bandwidth scale; `None` recomputes the data-driven default at
    /// every refit from the covariate spread.
    pub c_h: Option<f64>,
    pub beta: f64,
    pub horizon: u32,
    pub reps: u32,
    pub rng: RngPlan,
    /// Worker threads for the replication loop; 0 picks the default.
    pub workers: usize,
    pub checkpoint_every: u32,
    pub suite: Option<TestSuite>,
    pub record_trajectories: bool,
    /// Record per-stage confidence intervals for replication 0.
    pub record_intervals: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.policy.validate()?;
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.horizon < self.policy.t0_init + 1 {
            return Err(Error::Config(format!(
                "horizon {} leaves no stage after the initialization phase (t0_init = {})",
                self.horizon, self.policy.t0_init
            )));
        }
        if self.policy.variant != Variant::Opt && self.policy.t0_init < 4 {
            return Err(Error::Config(format!(
                "t0_init = {} is too short to fit both arms; need at least 4",
                self.policy.t0_init
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        if let Some(c) = self.c_h {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Config(format!("kernel.c_h must be positive, got {c}")));
            }
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("model.beta must be positive, got {}", self.beta)));
        }
        if let Some(suite) = &self.suite {
            suite.validate(self.horizon)?;
        }
        Ok(())
    }

    /// Stages at which running summaries are captured: every
    /// `checkpoint_every` stages, plus the horizon itself.
    pub fn checkpoint_stages(&self) -> Vec<u32> {
        let mut stages: Vec<u32> = (1..=self.horizon / self.checkpoint_every)
            .map(|k| k * self.checkpoint_every)
            .collect();
        if stages.last() != Some(&self.horizon) {
            stages.push(self.horizon);
        }
        stages
    }
}

/// User-facing settings with defaults, populated from config files and
/// flags, then resolved into a [`RunConfig`] via [`Settings::to_run_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub scenario_id: u8,
    pub variant: Variant,
    pub eta: f64,
    pub t0_init: u32,
    pub batch: u32,
    pub backend: Backend,
    pub surrogate_observed_only: bool,
    pub kernel_family: KernelFamily,
    pub c_h: Option<f64>,
    pub kernel_floor: f64,
    pub beta: f64,
    pub horizon: u32,
    pub reps: u32,
    pub seed: u64,
    pub workers: usize,
    pub checkpoint_every: u32,
    pub trajectories: bool,
    pub intervals: bool,
    pub out_dir: Option<PathBuf>,
    pub oracle_mc_draws: u64,
    /// Whether a testing block is active (the `test` subcommand).
    pub tests_enabled: bool,
    pub test_kinds: Vec<TestKind>,
    /// Nulls to monitor; `None` defaults to the scenario's true effect.
    pub tau_h0s: Option<Vec<f64>>,
    pub alpha: f64,
    pub test_t0: u32,
    pub rho: RhoChoice,
    pub eb_c: f64,
    pub eb_nu0_sq: f64,
    pub eb_xi_hat0: f64,
    pub eb_rescale: Rescale,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            scenario_id: 1,
            variant: Variant::Sloaci,
            eta: 0.25,
            t0_init: 20,
            batch: 50,
            backend: Backend::Nonparametric,
            surrogate_observed_only: false,
            kernel_family: KernelFamily::Epanechnikov,
            c_h: None,
            kernel_floor: 1e-4,
            beta: 1.0,
            horizon: 2500,
            reps: 500,
            seed: 42,
            workers: 0,
            checkpoint_every: 50,
            trajectories: false,
            intervals: false,
            out_dir: None,
            oracle_mc_draws: 1_000_000,
            tests_enabled: false,
            test_kinds: TestKind::ALL.to_vec(),
            tau_h0s: None,
            alpha: 0.05,
            test_t0: 50,
            rho: RhoChoice::Auto,
            eb_c: 0.5,
            eb_nu0_sq: 1.0,
            eb_xi_hat0: 0.0,
            eb_rescale: Rescale::None,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: could not parse {value:?}")))
}

pub(crate) fn parse_test_kinds(value: &str) -> Result<Vec<TestKind>> {
    let mut kinds = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let kind: TestKind = part.parse()?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(Error::Config(format!("test.tests: no test names in {value:?}")));
    }
    Ok(kinds)
}

pub(crate) fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        out.push(parse_num::<f64>(key, part)?);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{key}: no values in {value:?}")));
    }
    Ok(out)
}

pub(crate) fn parse_rho(value: &str) -> Result<RhoChoice> {
    if value == "auto" {
        Ok(RhoChoice::Auto)
    } else {
        let r: f64 = parse_num("test.rho", value)?;
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Config(format!("test.rho must be positive, got {value}")));
        }
        Ok(RhoChoice::Fixed(r))
    }
}

pub(crate) fn parse_rescale(value: &str) -> Result<Rescale> {
    match value {
        "none" => Ok(Rescale::None),
        "auto" => Ok(Rescale::Auto),
        other => {
            let parts: Vec<&str> = other.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::Config(format!(
                    "test.eb.rescale: expected none, auto, or lo,hi; got {value:?}"
                )));
            }
            let lo: f64 = parse_num("test.eb.rescale", parts[0])?;
            let hi: f64 = parse_num("test.eb.rescale", parts[1])?;
            if !(hi > lo) {
                return Err(Error::Config(format!(
                    "test.eb.rescale: bounds must satisfy lo < hi, got {value:?}"
                )));
            }
            Ok(Rescale::Fixed { lo, hi })
        }
    }
}

impl Settings {
    /// Apply one `key = value` assignment. Unknown keys are configuration
    /// errors so typos fail loudly instead of being ignored.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scenario.id" => self.scenario_id = parse_num(key, value)?,
            "design.variant" => self.variant = value.parse()?,
            "design.eta" => self.eta = parse_num(key, value)?,
            "design.t0" => self.t0_init = parse_num(key, value)?,
            "design.batch" => self.batch = parse_num(key, value)?,
            "design.backend" | "model.backend" => self.backend = value.parse()?,
            "model.surrogate_observed_only" => {
                self.surrogate_observed_only = parse_bool(key, value)?
            }
            "model.beta" => self.beta = parse_num(key, value)?,
            "kernel.family" => self.kernel_family = value.parse()?,
            "kernel.c_h" => {
                self.c_h = if value == "auto" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "kernel.floor" => self.kernel_floor = parse_num(key, value)?,
            "run.horizon" => self.horizon = parse_num(key, value)?,
            "run.reps" => self.reps = parse_num(key, value)?,
            "run.seed" => self.seed = parse_num(key, value)?,
            "run.workers" => self.workers = parse_num(key, value)?,
            "run.checkpoint_every" => self.checkpoint_every = parse_num(key, value)?,
            "run.trajectories" => self.trajectories = parse_bool(key, value)?,
            "run.intervals" => self.intervals = parse_bool(key, value)?,
            "run.out" => self.out_dir = Some(PathBuf::from(value)),
            "oracle.mc_draws" => self.oracle_mc_draws = parse_num(key, value)?,
            "test.enabled" => self.tests_enabled = parse_bool(key, value)?,
            "test.tests" => self.test_kinds = parse_test_kinds(value)?,
            "test.tau_h0" => self.tau_h0s = Some(parse_f64_list(key, value)?),
            "test.alpha" => self.alpha = parse_num(key, value)?,
            "test.t0" => self.test_t0 = parse_num(key, value)?,
            "test.rho" => self.rho = parse_rho(value)?,
            "test.eb.c" => self.eb_c = parse_num(key, value)?,
            "test.eb.nu0_sq" => self.eb_nu0_sq = parse_num(key, value)?,
            "test.eb.xi_hat0" => self.eb_xi_hat0 = parse_num(key, value)?,
            "test.eb.rescale" => self.eb_rescale = parse_rescale(value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parse and apply a config file. Lines are `key = value`; `#` starts
    /// a comment; blank lines are skipped. A key assigned two different
    /// values is a conflict reported with both line numbers.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        let mut seen: Vec<(String, usize, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {line_no}: expected key = value, got {raw:?}"
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if let Some((_, first_line, first_value)) =
                seen.iter().find(|(k, _, _)| canonical_key(k) == canonical_key(key))
            {
                if first_value != value {
                    return Err(Error::Config(format!(
                        "conflicting values for {key}: line {first_line} sets {first_value:?}, \
                         line {line_no} sets {value:?}"
                    )));
                }
            }
            self.apply_kv(key, value)
                .map_err(|e| Error::Config(format!("line {line_no}: {e}")))?;
            seen.push((key.to_string(), line_no, value.to_string()));
        }
        Ok(())
    }

    /// Resolve the settings into a validated [`RunConfig`].
    pub fn to_run_config(&self) -> Result<RunConfig> {
        let scenario = built_in_scenario(self.scenario_id)?;
        let oracle = oracle_quantities(&scenario, self.oracle_mc_draws)?;
        let policy = DesignPolicy {
            variant: self.variant,
            eta: self.eta,
            t0_init: self.t0_init,
            batch: self.batch,
            backend: self.backend,
            surrogate_observed_only: self.surrogate_observed_only,
        };
        let kernel = KernelSpec {
            family: self.kernel_family,
            stabilization_floor: self.kernel_floor,
        };
        let suite = if self.tests_enabled {
            Some(TestSuite {
                kinds: self.test_kinds.clone(),
                tau_h0s: self
                    .tau_h0s
                    .clone()
                    .unwrap_or_else(|| vec![oracle.tau0]),
                alpha: self.alpha,
                t0: self.test_t0,
                rho: self.rho,
                eb_c: self.eb_c,
                eb_nu0_sq: self.eb_nu0_sq,
                eb_xi_hat0: self.eb_xi_hat0,
                eb_rescale: self.eb_rescale,
            })
        } else {
            None
        };
        let cfg = RunConfig {
            scenario,
            oracle,
            policy,
            kernel,
            c_h: self.c_h,
            beta: self.beta,
            horizon: self.horizon,
            reps: self.reps,
            rng: RngPlan { master_seed: self.seed },
            workers: self.workers,
            checkpoint_every: self.checkpoint_every,
            suite,
            record_trajectories: self.trajectories,
            record_intervals: self.intervals,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `key = value` listing of every setting. The output is
    /// itself a valid config file that reproduces these settings.
    pub fn canonical_echo(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("scenario.id", self.scenario_id.to_string());
        push("design.variant", self.variant.to_string());
        push("design.eta", self.eta.to_string());
        push("design.t0", self.t0_init.to_string());
        push("design.batch", self.batch.to_string());
        push("design.backend", self.backend.to_string());
        push(
            "model.surrogate_observed_only",
            self.surrogate_observed_only.to_string(),
        );
        push("model.beta", self.beta.to_string());
        push("kernel.family", self.kernel_family.to_string());
        push(
            "kernel.c_h",
            self.c_h.map_or_else(|| "auto".to_string(), |c| c.to_string()),
        );
        push("kernel.floor", self.kernel_floor.to_string());
        push("run.horizon", self.horizon.to_string());
        push("run.reps", self.reps.to_string());
        push("run.seed", self.seed.to_string());
        push("run.workers", self.workers.to_string());
        push("run.checkpoint_every", self.checkpoint_every.to_string());
        push("run.trajectories", self.trajectories.to_string());
        push("run.intervals", self.intervals.to_string());
        if let Some(dir) = &self.out_dir {
            push("run.out", dir.display().to_string());
        }
        push("oracle.mc_draws", self.oracle_mc_draws.to_string());
        push("test.enabled", self.tests_enabled.to_string());
        push(
            "test.tests",
            self.test_kinds
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        if let Some(h0s) = &self.tau_h0s {
            push(
                "test.tau_h0",
                h0s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            );
        }
        push("test.alpha", self.alpha.to_string());
        push("test.t0", self.test_t0.to_string());
        push(
            "test.rho",
            match self.rho {
                RhoChoice::Auto => "auto".to_string(),
                RhoChoice::Fixed(r) => r.to_string(),
            },
        );
        push("test.eb.c", self.eb_c.to_string());
        push("test.eb.nu0_sq", self.eb_nu0_sq.to_string());
        push("test.eb.xi_hat0", self.eb_xi_hat0.to_string());
        push(
            "test.eb.rescale",
            match self.eb_rescale {
                Rescale::None => "none".to_string(),
                Rescale::Auto => "auto".to_string(),
                Rescale::Fixed { lo, hi } => format!("{lo},{hi}"),
            },
        );
        out
    }
}

/// `model.backend` and `design.backend` address the same setting; treat
/// them as one key for conflict detection.
fn canonical_key(key: &str) -> &str {
    if key == "model.backend" {
        "design.backend"
    } else {
        key
    }
}
