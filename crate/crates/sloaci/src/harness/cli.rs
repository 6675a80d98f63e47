//! Command-line interface.
//!
//! Three subcommands: `oracle <scenario>` prints the closed-form design
//! targets, `simulate` runs a variance/regret suite, and `test` runs a
//! sequential-testing suite. Both suite commands accept `--config FILE`
//! (flat `key = value` lines) with individual flags taking precedence.
//!
//! Exit codes: 0 on success, 2 for usage and configuration errors, 1 for
//! runtime failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dgp::{built_in_scenario, oracle_quantities};
use crate::{Error, Result};

use super::config::{parse_f64_list, parse_rescale, parse_rho, parse_test_kinds, Settings};
use super::runner::run_suite;

#[derive(Parser, Debug)]
#[command(
    name = "sloaci",
    version,
    about = "Surrogate-leveraged adaptive experiments with anytime-valid inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the oracle quantities of a built-in scenario.
    Oracle {
        /// Built-in scenario id (1-4).
        scenario: u8,
        /// Draws for the Monte Carlo moment fallback.
        #[arg(long)]
        mc_draws: Option<u64>,
    },
    /// Run a variance/regret suite and write summary CSVs.
    Simulate(RunArgs),
    /// Run a sequential-testing suite (stopping times, power, coverage).
    Test(TestArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario id (1-4); required here or in the config file.
    #[arg(long)]
    scenario: Option<u8>,
    /// Design variant: sloaci, rar, rars, rct, or opt.
    #[arg(long)]
    design: Option<String>,
    /// Nuisance backend: nonparametric, linear, or profile.
    #[arg(long)]
    backend: Option<String>,
    /// Kernel family: epanechnikov, gaussian, or uniform.
    #[arg(long)]
    kernel: Option<String>,
    /// Replication count.
    #[arg(long)]
    reps: Option<u32>,
    /// Total number of stages per replication.
    #[arg(long)]
    horizon: Option<u32>,
    /// Stages between refits (1 = fully adaptive).
    #[arg(long)]
    batch: Option<u32>,
    /// Allocation clipping rate.
    #[arg(long)]
    eta: Option<f64>,
    /// Initialization length (alternating assignment).
    #[arg(long)]
    init: Option<u32>,
    /// Master seed for the replication streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = automatic).
    #[arg(long)]
    workers: Option<usize>,
    /// Stages between checkpointed summaries.
    #[arg(long)]
    checkpoint_every: Option<u32>,
    /// Output directory for CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record per-stage trajectories (trajectories.csv).
    #[arg(long)]
    trajectories: bool,
}

#[derive(Args, Debug, Default)]
struct TestArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated tests to monitor: clt,bf,asy,eb.
    #[arg(long)]
    tests: Option<String>,
    /// Comma-separated nulls to monitor (defaults to the true effect).
    #[arg(long, value_name = "V")]
    tau_h0: Option<String>,
    /// First stage at which stopping is allowed.
    #[arg(long)]
    t0: Option<u32>,
    /// Level of every monitored test.
    #[arg(long)]
    alpha: Option<f64>,
    /// Mixture rate for the asymptotic confidence sequence: auto or a number.
    #[arg(long)]
    rho: Option<String>,
    /// Bounds for the EB rescaler: none, auto, or lo,hi.
    #[arg(long)]
    eb_rescale: Option<String>,
    /// Record per-stage intervals for replication 0 (intervals.csv).
    #[arg(long)]
    intervals: bool,
}

/// Parses `argv` and runs the requested command, returning the process
/// exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = i32::from(e.use_stderr()) * 2;
            let _ = e.print();
            return code;
        }
    };
    match run_command(parsed.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Invalid(_) => 2,
                _ => 1,
            }
        }
    }
}

fn run_command(cmd: Command) -> Result<()> {
    match cmd {
        Command::Oracle { scenario, mc_draws } => print_oracle(scenario, mc_draws),
        Command::Simulate(args) => {
            let settings = build_settings(&args, None)?;
            execute(settings)
        }
        Command::Test(args) => {
            let settings = build_settings(&args.run, Some(&args))?;
            execute(settings)
        }
    }
}

fn print_oracle(scenario: u8, mc_draws: Option<u64>) -> Result<()> {
    let spec = built_in_scenario(scenario)?;
    let q = oracle_quantities(&spec, mc_draws.unwrap_or(1_000_000))?;
    println!("scenario {}", spec.label);
    println!("tau0 = {}", q.tau0);
    println!("pi_star = {}", q.pi_star);
    println!("sigma_res = [{}, {}]", q.sigma_res[0], q.sigma_res[1]);
    println!("varsigma_star_sq = {}", q.varsigma_star_sq);
    println!("cate_dispersion = {}", q.cate_dispersion);
    println!("no_surrogate_bound = {}", q.no_surrogate_bound);
    println!("surrogate_gain = {}", q.surrogate_gain());
    Ok(())
}

/// Defaults, then the config file, then flags; the scenario must come
/// from one of the latter two.
fn build_settings(run: &RunArgs, test: Option<&TestArgs>) -> Result<Settings> {
    let mut s = Settings::default();
    s.scenario_id = 0;
    if let Some(path) = &run.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("could not read config {}: {e}", path.display()))
        })?;
        s.apply_file(&text)?;
    }
    if let Some(v) = run.scenario {
        s.scenario_id = v;
    }
    if let Some(v) = &run.design {
        s.variant = v.parse()?;
    }
    if let Some(v) = &run.backend {
        s.backend = v.parse()?;
    }
    if let Some(v) = &run.kernel {
        s.kernel_family = v.parse()?;
    }
    if let Some(v) = run.reps {
        s.reps = v;
    }
    if let Some(v) = run.horizon {
        s.horizon = v;
    }
    if let Some(v) = run.batch {
        s.batch = v;
    }
    if let Some(v) = run.eta {
        s.eta = v;
    }
    if let Some(v) = run.init {
        s.t0_init = v;
    }
    if let Some(v) = run.seed {
        s.seed = v;
    }
    if let Some(v) = run.workers {
        s.workers = v;
    }
    if let Some(v) = run.checkpoint_every {
        s.checkpoint_every = v;
    }
    if let Some(v) = &run.out {
        s.out_dir = Some(v.clone());
    }
    if run.trajectories {
        s.trajectories = true;
    }
    if let Some(t) = test {
        s.tests_enabled = true;
        if let Some(v) = &t.tests {
            s.test_kinds = parse_test_kinds(v)?;
        }
        if let Some(v) = &t.tau_h0 {
            s.tau_h0s = Some(parse_f64_list("--tau-h0", v)?);
        }
        if let Some(v) = t.t0 {
            s.test_t0 = v;
        }
        if let Some(v) = t.alpha {
            s.alpha = v;
        }
        if let Some(v) = &t.rho {
            s.rho = parse_rho(v)?;
        }
        if let Some(v) = &t.eb_rescale {
            s.eb_rescale = parse_rescale(v)?;
        }
        if t.intervals {
            s.intervals = true;
        }
    }
    if s.scenario_id == 0 {
        return Err(Error::Config(
            "no scenario selected; pass --scenario N or set scenario.id in the config file"
                .into(),
        ));
    }
    Ok(s)
}

fn execute(settings: Settings) -> Result<()> {
    let art = run_suite(&settings)?;
    let summary = &art.summary;
    println!(
        "scenario {} design {}: {} replications to horizon {}",
        summary.scenario, summary.design, settings.reps, settings.horizon
    );
    if let Some(row) = summary.variance.last() {
        println!(
            "T = {}: normalized variance {:.4}, regret estimate {:.2}",
            row.t, row.normalized_variance, row.regret_estimate
        );
    }
    for row in &summary.testing {
        if row.t == settings.horizon {
            println!(
                "test {} tau_h0 {}: power {:.3}, mean stop {:.1} (se {:.2}), censored {:.3}",
                row.test, row.tau_h0, row.power, row.mean_stop, row.se_stop, row.censored_frac
            );
        }
    }
    if summary.eb_clamp_total > 0 {
        println!("eb rescale clamped {} values", summary.eb_clamp_total);
    }
    for path in &art.written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
