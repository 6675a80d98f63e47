//! Suite execution: fan replications across workers, fold the outcomes
//! into summary tables, and write the CSV artifacts plus a reloadable
//! metadata echo of the configuration.
//!
//! Replication outputs are merged in replication order regardless of
//! which worker produced them, so the summaries (and the files) are
//! byte-identical for any worker count.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::estimator::PhiRecord;
use crate::metrics::{self, RepOutcome};
use crate::seqtest::TestKind;
use crate::{Error, Result};

use super::config::{RunConfig, Settings};
use super::engine::{run_replication, IntervalRow, RepRun};

/// One row of `variance.csv`.
#[derive(Debug, Clone, Copy)]
pub struct VarianceRow {
    pub t: u32,
    pub reps: u32,
    pub normalized_variance: f64,
    pub regret_estimate: f64,
}

/// One row of `testing.csv`.
#[derive(Debug, Clone, Copy)]
pub struct TestingRow {
    pub test: TestKind,
    pub tau_h0: f64,
    pub t: u32,
    pub miscoverage: f64,
    pub power: f64,
    pub mean_stop: f64,
    pub se_stop: f64,
    pub censored_frac: f64,
}

/// Folded summaries of a suite.
#[derive(Debug, Clone)]
pub struct Summary {
    pub scenario: String,
    pub design: String,
    /// Empty when fewer than two replications ran (the across-replication
    /// variance is undefined for a single run).
    pub variance: Vec<VarianceRow>,
    pub testing: Vec<TestingRow>,
    pub eb_clamp_total: u64,
}

/// A completed suite: summaries, per-replication outcomes, and the files
/// written (empty when no output directory was configured).
#[derive(Debug)]
pub struct SuiteArtifacts {
    pub summary: Summary,
    pub outcomes: Vec<RepOutcome>,
    pub written: Vec<PathBuf>,
}

/// Runs every replication of `cfg`, in parallel, returning them in
/// replication order. A failing replication fails the whole call with
/// that replication's diagnostic.
pub fn run_reps(cfg: &RunConfig) -> Result<Vec<RepRun>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Invalid(format!("could not build the worker pool: {e}")))?;
    pool.install(|| {
        (0..cfg.reps)
            .into_par_iter()
            .map(|rep| run_replication(cfg, rep))
            .collect()
    })
}

/// Folds replication outcomes into the summary tables at every
/// checkpoint stage.
pub fn summarize(cfg: &RunConfig, outcomes: &[RepOutcome]) -> Result<Summary> {
    let stages = cfg.checkpoint_stages();
    let mut variance = Vec::new();
    if outcomes.len() >= 2 {
        for &t in &stages {
            let tau_hats: Vec<f64> = outcomes
                .iter()
                .map(|o| {
                    o.tau_hat_at(t).ok_or_else(|| {
                        Error::Invalid(format!(
                            "replication {} recorded no checkpoint at stage {t}",
                            o.rep
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let v = metrics::normalized_variance(&tau_hats, t)?;
            variance.push(VarianceRow {
                t,
                reps: outcomes.len() as u32,
                normalized_variance: v,
                regret_estimate: metrics::empirical_regret(v, cfg.oracle.varsigma_star_sq, t),
            });
        }
    }
    let mut testing = Vec::new();
    if let Some(suite) = &cfg.suite {
        for &kind in &suite.kinds {
            for &h0 in &suite.tau_h0s {
                for &t in &stages {
                    let ps = metrics::power_and_stopping(outcomes, kind, h0, t);
                    testing.push(TestingRow {
                        test: kind,
                        tau_h0: h0,
                        t,
                        miscoverage: metrics::miscoverage(outcomes, kind, h0, t),
                        power: ps.power,
                        mean_stop: ps.mean_stop,
                        se_stop: ps.se_stop,
                        censored_frac: ps.censored_frac,
                    });
                }
            }
        }
    }
    Ok(Summary {
        scenario: cfg.scenario.label.clone(),
        design: cfg.policy.variant.to_string(),
        variance,
        testing,
        eb_clamp_total: outcomes.iter().map(|o| o.eb_clamps).sum(),
    })
}

/// Runs the full suite described by `settings` and, when an output
/// directory is configured, writes `variance.csv`, `testing.csv`,
/// optional per-stage files, and a `metadata.txt` echo that reloads as a
/// config file. Files already written are removed if a later write fails.
pub fn run_suite(settings: &Settings) -> Result<SuiteArtifacts> {
    let cfg = settings.to_run_config()?;
    let runs = run_reps(&cfg)?;

    let mut outcomes = Vec::with_capacity(runs.len());
    let mut trajectories: Vec<(u32, Vec<PhiRecord>)> = Vec::new();
    let mut intervals: Vec<IntervalRow> = Vec::new();
    for run in runs {
        if let Some(rows) = run.trajectory {
            trajectories.push((run.outcome.rep, rows));
        }
        if let Some(rows) = run.intervals {
            intervals.extend(rows);
        }
        outcomes.push(run.outcome);
    }
    let summary = summarize(&cfg, &outcomes)?;

    let mut written = Vec::new();
    if let Some(dir) = &settings.out_dir {
        fs::create_dir_all(dir)?;
        let result = write_outputs(
            settings,
            &cfg,
            &summary,
            &trajectories,
            &intervals,
            dir,
            &mut written,
        );
        if let Err(e) = result {
            for path in &written {
                let _ = fs::remove_file(path);
            }
            return Err(e);
        }
    }
    Ok(SuiteArtifacts { summary, outcomes, written })
}

fn write_outputs(
    settings: &Settings,
    cfg: &RunConfig,
    summary: &Summary,
    trajectories: &[(u32, Vec<PhiRecord>)],
    intervals: &[IntervalRow],
    dir: &std::path::Path,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let mut write = |name: &str, content: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, content)?;
        written.push(path);
        Ok(())
    };

    write("variance.csv", variance_csv(summary))?;
    if cfg.suite.is_some() {
        write("testing.csv", testing_csv(summary))?;
    }
    if settings.trajectories {
        write("trajectories.csv", trajectories_csv(trajectories))?;
    }
    if settings.intervals && cfg.suite.is_some() {
        write("intervals.csv", intervals_csv(intervals))?;
    }
    write("metadata.txt", metadata_text(settings, cfg, summary))?;
    Ok(())
}

fn variance_csv(summary: &Summary) -> String {
    let mut out = String::from("scenario,design,T,reps,normalized_variance,regret_estimate\n");
    for row in &summary.variance {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            summary.scenario,
            summary.design,
            row.t,
            row.reps,
            row.normalized_variance,
            row.regret_estimate
        ));
    }
    out
}

fn testing_csv(summary: &Summary) -> String {
    let mut out = String::from(
        "scenario,design,test,tau_h0,T,miscoverage,power,mean_stop,se_stop,censored_frac\n",
    );
    for row in &summary.testing {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            summary.scenario,
            summary.design,
            row.test,
            row.tau_h0,
            row.t,
            row.miscoverage,
            row.power,
            row.mean_stop,
            row.se_stop,
            row.censored_frac
        ));
    }
    out
}

fn trajectories_csv(trajectories: &[(u32, Vec<PhiRecord>)]) -> String {
    let mut out = String::from("rep,t,z,pi,phi,tau_hat,varsigma2_hat\n");
    for (rep, rows) in trajectories {
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rep, r.t, r.z, r.pi, r.phi, r.tau_hat, r.varsigma2_hat
            ));
        }
    }
    out
}

fn intervals_csv(intervals: &[IntervalRow]) -> String {
    let mut out = String::from("rep,test,tau_h0,t,lower,upper,stopped,censored\n");
    for r in intervals {
        out.push_str(&format!(
            "0,{},{},{},{},{},{},{}\n",
            r.test, r.tau_h0, r.t, r.lower, r.upper, r.stopped as u8, r.censored as u8
        ));
    }
    out
}

fn metadata_text(settings: &Settings, cfg: &RunConfig, summary: &Summary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# {} v{}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    ));
    out.push_str("# suite metadata; reload with --config to reproduce this run\n");
    out.push_str(&format!("# scenario label: {}\n", summary.scenario));
    out.push_str(&format!(
        "# oracle: tau0 = {}, pi_star = {}, varsigma_star_sq = {}\n",
        cfg.oracle.tau0, cfg.oracle.pi_star, cfg.oracle.varsigma_star_sq
    ));
    out.push_str(&format!(
        "# oracle mc seed: {:#x} (bandwidth scale recomputed from history at each refit)\n",
        crate::dgp::MC_ORACLE_SEED
    ));
    out.push_str(&format!("# eb clamp total: {}\n", summary.eb_clamp_total));
    if let Some(warning) = cfg.policy.stability_warning(cfg.beta, cfg.scenario.dim()) {
        out.push_str(&format!("# warning: {warning}\n"));
    }
    out.push_str(&settings.canonical_echo());
    out
}
