//! Surrogate-leveraged online adaptive causal inference.
//!
//! This crate implements a sequential experimentation engine for two-arm
//! randomized experiments in which each unit reveals, besides the primary
//! outcome `Y`, a vector of short-term surrogate outcomes `S`. Conditioning
//! the outcome model on surrogates shrinks the residual arm variances, and
//! the adaptive design concentrates assignment probabilities toward the
//! Neyman allocation implied by those smaller variances. The average
//! treatment effect is estimated by a stabilized AIPW (doubly robust)
//! estimator over the stage-wise filtration, and four sequential tests
//! (fixed-sample CLT, Bonferroni-corrected, a mixture boundary, and an
//! empirical-Bernstein confidence sequence) monitor the running estimate.
//!
//! Modules:
//!
//! * [`dgp`] - data-generating processes: potential outcomes, surrogates,
//!   built-in simulation scenarios, and oracle (infeasible) quantities.
//! * [`kernel`] - kernel profiles, bandwidth rule, Nadaraya-Watson smoother.
//! * [`plm`] - partially linear outcome models `mu_z(x, s)` fitted per arm
//!   by nonparametric (Robinson-style), linear, or profile least squares.
//! * [`design`] - allocation policies: adaptive Neyman with clipping, plus
//!   response-adaptive, fixed, and oracle baselines.
//! * [`estimator`] - stage-wise AIPW pseudo-outcomes and running moments.
//! * [`seqtest`] - sequential intervals and stopping times.
//! * [`metrics`] - cross-replication summaries (normalized variance, regret,
//!   error rates, stopping-time summaries).
//! * [`harness`] - replication engine, parallel suite runner, CSV outputs,
//!   and the command-line interface.

pub mod design;
pub mod dgp;
pub mod estimator;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod plm;
pub mod seqtest;

mod error;

pub use error::{Error, Result};
