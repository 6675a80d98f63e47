//! Per-arm outcome models for the partially linear specification
//! `Y(z) = m_z(X) + gamma_z * S(z) + eps(z)`.
//!
//! Three backends estimate the conditional mean `mu_z(x, s)` and the
//! residual standard deviation `sigma_z`:
//!
//! * **nonparametric** (Robinson residuals): Nadaraya-Watson fits
//!   `m_S,z` (surrogate on covariates, pooled over all stages since both
//!   potential surrogates are recorded) and `m_Y,z` (outcome on covariates,
//!   arm-z stages); `gamma_z` is the least-squares slope of outcome
//!   residuals on surrogate residuals, and
//!   `mu_z(x, s) = m_Y,z(x) + gamma_z * (s(z) - m_S,z(x))`.
//! * **linear**: the same construction with no-intercept least squares
//!   `alpha_S,z` (pooled) and `alpha_Y,z` (arm) in place of the smoothers.
//! * **profile**: minimizes the profile criterion
//!   `L(gamma) = sum_j (Y_j - gamma S_j - m_hat_gamma(X_j))^2` over arm-z
//!   stages, where `m_hat_gamma` smooths `Y - gamma S`; because the
//!   smoother is linear in its responses, `L` reduces to an exact quadratic
//!   in `gamma` which a golden-section search minimizes on a fixed bracket.
//!
//! Two further fits back the design baselines: an outcome-only smoother
//! (`mu` depends on `x` alone) and a surrogate-augmented smoother (the
//! covariate vector is extended with the arm's surrogate).
//!
//! A surrogate with (numerically) zero residual variation carries no
//! signal; every backend then applies the degenerate rule `gamma_hat = 0`,
//! keeping predictions total.

use crate::kernel::{bandwidth, nw_predict, KernelSpec, RegressionSample};
use crate::{Error, Result};

/// Sum-of-squares floor below which surrogate residuals are treated as
/// degenerate and `gamma_hat` is set to zero.
const DEGENERATE_SS: f64 = 1e-12;

/// Bracket and tolerance of the profile-criterion search.
const PROFILE_BRACKET: (f64, f64) = (-10.0, 10.0);
const PROFILE_TOL: f64 = 1e-6;

/// One observed stage: covariates, assigned arm, both potential
/// surrogates, the realized outcome, and the assignment probability in
/// force at that stage.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub x: Vec<f64>,
    pub z: u8,
    /// Potential surrogates `[s(0), s(1)]`; both are recorded.
    pub s: [f64; 2],
    pub y: f64,
    pub pi: f64,
}

/// The ordered experimental record up to the current stage.
#[derive(Debug, Clone)]
pub struct History {
    dim: usize,
    records: Vec<StageRecord>,
    n_arm: [usize; 2],
}

impl History {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "covariate dimension must be at least 1");
        History {
            dim,
            records: Vec::new(),
            n_arm: [0, 0],
        }
    }

    /// Appends a stage record, validating its shape.
    pub fn push(&mut self, rec: StageRecord) -> Result<()> {
        if rec.x.len() != self.dim {
            return Err(Error::Invalid(format!(
                "stage covariate has dimension {}, history expects {}",
                rec.x.len(),
                self.dim
            )));
        }
        if rec.z > 1 {
            return Err(Error::Invalid(format!("arm must be 0 or 1, got {}", rec.z)));
        }
        if !(rec.pi > 0.0 && rec.pi < 1.0) {
            return Err(Error::Invalid(format!(
                "recorded assignment probability {} outside (0, 1)",
                rec.pi
            )));
        }
        if !(rec.y.is_finite() && rec.s[0].is_finite() && rec.s[1].is_finite()) {
            return Err(Error::NonFinite("stage record outcome or surrogate".into()));
        }
        self.n_arm[rec.z as usize] += 1;
        self.records.push(rec);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn arm_count(&self, z: u8) -> usize {
        self.n_arm[z as usize]
    }

    pub fn records(&self) -> &[StageRecord] {
        &self.records
    }

    /// A copy containing only the first `t` stages.
    pub fn truncated(&self, t: usize) -> History {
        let mut out = History::new(self.dim);
        for rec in &self.records[..t.min(self.records.len())] {
            out.push(rec.clone()).expect("records already validated");
        }
        out
    }

    /// Flat row-major covariate matrix of all stages.
    fn xs_all(&self) -> Vec<f64> {
        let mut xs = Vec::with_capacity(self.len() * self.dim);
        for rec in &self.records {
            xs.extend_from_slice(&rec.x);
        }
        xs
    }
}

/// Anything that can predict `mu_z(x, s)`; implemented by [`ArmFit`] and,
/// in the harness, by the infeasible true predictor.
pub trait MuPredictor {
    fn mu(&self, x: &[f64], s: [f64; 2]) -> f64;
}

/// Which estimator produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Nonparametric,
    Linear,
    Profile,
    /// Outcome smoothed on covariates only (ignores surrogates).
    OutcomeOnly,
    /// Outcome smoothed on covariates augmented with the arm surrogate.
    OutcomeAugmented,
}

/// Which stages feed the surrogate regression `m_S,z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateSample {
    /// All stages (both potential surrogates are recorded). Default.
    Pooled,
    /// Only stages assigned to arm `z`, for settings where just the
    /// assigned arm's surrogate would be observable.
    ObservedOnly,
}

#[derive(Debug, Clone)]
enum Model {
    Nonparametric {
        kernel: KernelSpec,
        dim: usize,
        h_y: f64,
        h_s: f64,
        xs_arm: Vec<f64>,
        y_arm: Vec<f64>,
        xs_surr: Vec<f64>,
        s_surr: Vec<f64>,
    },
    Linear {
        alpha_y: Vec<f64>,
        alpha_s: Vec<f64>,
    },
    Profile {
        kernel: KernelSpec,
        dim: usize,
        h: f64,
        xs_arm: Vec<f64>,
        r_arm: Vec<f64>,
    },
    OutcomeOnly {
        kernel: KernelSpec,
        dim: usize,
        h: f64,
        xs_arm: Vec<f64>,
        y_arm: Vec<f64>,
    },
    OutcomeAugmented {
        kernel: KernelSpec,
        /// Covariate dimension plus one surrogate coordinate.
        dim: usize,
        h: f64,
        xs_aug: Vec<f64>,
        y_arm: Vec<f64>,
    },
}

/// A fitted per-arm outcome model.
#[derive(Debug, Clone)]
pub struct ArmFit {
    pub arm: u8,
    pub kind: ModelKind,
    pub gamma_hat: f64,
    /// Mean squared residual of the arm's outcomes under the fit.
    pub sigma2_hat: f64,
    /// Number of stages in the history the fit was computed from.
    pub fit_stage: usize,
    model: Model,
}

impl ArmFit {
    /// Residual standard deviation estimate.
    pub fn sigma_hat(&self) -> f64 {
        self.sigma2_hat.sqrt()
    }
}

impl MuPredictor for ArmFit {
    fn mu(&self, x: &[f64], s: [f64; 2]) -> f64 {
        predict_mu(self, x, s)
    }
}

/// Evaluates the fitted conditional mean `mu_z(x, s)`; the relevant
/// surrogate coordinate is `s[fit.arm]`. Total over the domain: empty
/// kernel neighborhoods contribute zero through the smoother's zero rule.
pub fn predict_mu(fit: &ArmFit, x: &[f64], s: [f64; 2]) -> f64 {
    let sz = s[fit.arm as usize];
    match &fit.model {
        Model::Nonparametric {
            kernel,
            dim,
            h_y,
            h_s,
            xs_arm,
            y_arm,
            xs_surr,
            s_surr,
        } => {
            let my = nw_predict(
                &RegressionSample { dim: *dim, xs: xs_arm, responses: y_arm, mask: None },
                kernel,
                *h_y,
                x,
            );
            let ms = nw_predict(
                &RegressionSample { dim: *dim, xs: xs_surr, responses: s_surr, mask: None },
                kernel,
                *h_s,
                x,
            );
            my + fit.gamma_hat * (sz - ms)
        }
        Model::Linear { alpha_y, alpha_s } => {
            let dot = |a: &[f64]| a.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
            dot(alpha_y) + fit.gamma_hat * (sz - dot(alpha_s))
        }
        Model::Profile { kernel, dim, h, xs_arm, r_arm } => {
            let m = nw_predict(
                &RegressionSample { dim: *dim, xs: xs_arm, responses: r_arm, mask: None },
                kernel,
                *h,
                x,
            );
            m + fit.gamma_hat * sz
        }
        Model::OutcomeOnly { kernel, dim, h, xs_arm, y_arm } => nw_predict(
            &RegressionSample { dim: *dim, xs: xs_arm, responses: y_arm, mask: None },
            kernel,
            *h,
            x,
        ),
        Model::OutcomeAugmented { kernel, dim, h, xs_aug, y_arm } => {
            let mut q = Vec::with_capacity(*dim);
            q.extend_from_slice(x);
            q.push(sz);
            nw_predict(
                &RegressionSample { dim: *dim, xs: xs_aug, responses: y_arm, mask: None },
                kernel,
                *h,
                &q,
            )
        }
    }
}

/// Gathers the arm-z rows of a history.
fn arm_rows(history: &History, z: u8) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dim = history.dim();
    let n = history.arm_count(z);
    let mut xs = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n);
    let mut ss = Vec::with_capacity(n);
    for rec in history.records() {
        if rec.z == z {
            xs.extend_from_slice(&rec.x);
            ys.push(rec.y);
            ss.push(rec.s[z as usize]);
        }
    }
    (xs, ys, ss)
}

fn require_arm_data(history: &History, z: u8, min: usize, what: &str) -> Result<()> {
    if history.arm_count(z) < min {
        return Err(Error::InsufficientData(format!(
            "{what} for arm {z} needs at least {min} observations, have {}",
            history.arm_count(z)
        )));
    }
    Ok(())
}

/// Robinson-style nonparametric backend; see the module docs for the
/// construction. The surrogate regression pools all stages.
pub fn fit_nonparametric(
    history: &History,
    z: u8,
    kernel: &KernelSpec,
    c_h: f64,
    beta: f64,
) -> Result<ArmFit> {
    fit_nonparametric_opts(history, z, kernel, c_h, beta, SurrogateSample::Pooled)
}

/// Nonparametric backend with an explicit surrogate-sample choice.
pub fn fit_nonparametric_opts(
    history: &History,
    z: u8,
    kernel: &KernelSpec,
    c_h: f64,
    beta: f64,
    surrogate_sample: SurrogateSample,
) -> Result<ArmFit> {
    assert!(z < 2, "arm must be 0 or 1");
    require_arm_data(history, z, 2, "nonparametric fit")?;
    let dim = history.dim();
    let (xs_arm, y_arm, s_arm) = arm_rows(history, z);
    let n_arm = y_arm.len();
    let h_y = bandwidth(c_h, n_arm, beta, dim)?;

    let (xs_surr, s_surr, h_s) = match surrogate_sample {
        SurrogateSample::Pooled => {
            let xs = history.xs_all();
            let ss: Vec<f64> = history.records().iter().map(|r| r.s[z as usize]).collect();
            let h = bandwidth(c_h, history.len(), beta, dim)?;
            (xs, ss, h)
        }
        SurrogateSample::ObservedOnly => (xs_arm.clone(), s_arm.clone(), h_y),
    };

    let arm_sample = RegressionSample { dim, xs: &xs_arm, responses: &y_arm, mask: None };
    let surr_sample = RegressionSample { dim, xs: &xs_surr, responses: &s_surr, mask: None };
    let mut e_y = Vec::with_capacity(n_arm);
    let mut e_s = Vec::with_capacity(n_arm);
    for j in 0..n_arm {
        let xj = &xs_arm[j * dim..(j + 1) * dim];
        e_y.push(y_arm[j] - nw_predict(&arm_sample, kernel, h_y, xj));
        e_s.push(s_arm[j] - nw_predict(&surr_sample, kernel, h_s, xj));
    }
    let (gamma_hat, sigma2_hat) = residual_slope(&e_y, &e_s);

    Ok(ArmFit {
        arm: z,
        kind: ModelKind::Nonparametric,
        gamma_hat,
        sigma2_hat,
        fit_stage: history.len(),
        model: Model::Nonparametric {
            kernel: *kernel,
            dim,
            h_y,
            h_s,
            xs_arm,
            y_arm,
            xs_surr,
            s_surr,
        },
    })
}

/// Least-squares slope of `e_y` on `e_s` with the degenerate rule, plus
/// the mean squared residual `mean((e_y - gamma * e_s)^2)`.
fn residual_slope(e_y: &[f64], e_s: &[f64]) -> (f64, f64) {
    let ss: f64 = e_s.iter().map(|v| v * v).sum();
    let gamma = if ss < DEGENERATE_SS {
        0.0
    } else {
        e_y.iter().zip(e_s).map(|(a, b)| a * b).sum::<f64>() / ss
    };
    let sigma2 = e_y
        .iter()
        .zip(e_s)
        .map(|(a, b)| {
            let r = a - gamma * b;
            r * r
        })
        .sum::<f64>()
        / e_y.len() as f64;
    (gamma, sigma2)
}

/// Linear backend: no-intercept least squares for both working
/// regressions, then the same residual-slope construction.
pub fn fit_linear(history: &History, z: u8) -> Result<ArmFit> {
    assert!(z < 2, "arm must be 0 or 1");
    let dim = history.dim();
    require_arm_data(history, z, dim + 1, "linear fit")?;
    let (xs_arm, y_arm, s_arm) = arm_rows(history, z);
    let xs_all = history.xs_all();
    let s_all: Vec<f64> = history.records().iter().map(|r| r.s[z as usize]).collect();

    let alpha_s = least_squares(&xs_all, &s_all, dim)
        .map_err(|e| singular_note(e, "pooled surrogate regression"))?;
    let alpha_y = least_squares(&xs_arm, &y_arm, dim)
        .map_err(|e| singular_note(e, "arm outcome regression"))?;

    let n_arm = y_arm.len();
    let mut e_y = Vec::with_capacity(n_arm);
    let mut e_s = Vec::with_capacity(n_arm);
    for j in 0..n_arm {
        let xj = &xs_arm[j * dim..(j + 1) * dim];
        let fy: f64 = alpha_y.iter().zip(xj).map(|(c, v)| c * v).sum();
        let fs: f64 = alpha_s.iter().zip(xj).map(|(c, v)| c * v).sum();
        e_y.push(y_arm[j] - fy);
        e_s.push(s_arm[j] - fs);
    }
    let (gamma_hat, sigma2_hat) = residual_slope(&e_y, &e_s);

    Ok(ArmFit {
        arm: z,
        kind: ModelKind::Linear,
        gamma_hat,
        sigma2_hat,
        fit_stage: history.len(),
        model: Model::Linear { alpha_y, alpha_s },
    })
}

fn singular_note(err: Error, what: &str) -> Error {
    match err {
        Error::SingularDesign(msg) => Error::SingularDesign(format!("{what}: {msg}")),
        other => other,
    }
}

/// Solves the no-intercept normal equations `(X'X) a = X'r` by Gaussian
/// elimination with partial pivoting.
fn least_squares(xs: &[f64], rs: &[f64], dim: usize) -> Result<Vec<f64>> {
    let n = rs.len();
    assert_eq!(xs.len(), n * dim);
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    for j in 0..n {
        let row = &xs[j * dim..(j + 1) * dim];
        for a in 0..dim {
            rhs[a] += row[a] * rs[j];
            for b in 0..dim {
                gram[a * dim + b] += row[a] * row[b];
            }
        }
    }
    let scale = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * (1.0 + scale);
    for col in 0..dim {
        let mut pivot = col;
        for r in (col + 1)..dim {
            if gram[r * dim + col].abs() > gram[pivot * dim + col].abs() {
                pivot = r;
            }
        }
        if gram[pivot * dim + col].abs() <= tol {
            return Err(Error::SingularDesign(format!(
                "normal equations rank deficient at column {col}"
            )));
        }
        if pivot != col {
            for c in 0..dim {
                gram.swap(col * dim + c, pivot * dim + c);
            }
            rhs.swap(col, pivot);
        }
        let diag = gram[col * dim + col];
        for r in (col + 1)..dim {
            let f = gram[r * dim + col] / diag;
            if f == 0.0 {
                continue;
            }
            for c in col..dim {
                gram[r * dim + c] -= f * gram[col * dim + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut sol = vec![0.0; dim];
    for col in (0..dim).rev() {
        let mut v = rhs[col];
        for c in (col + 1)..dim {
            v -= gram[col * dim + c] * sol[c];
        }
        sol[col] = v / gram[col * dim + col];
    }
    Ok(sol)
}

/// Profile least squares backend. The criterion is evaluated through
/// gamma-independent residual pieces (`a_j = Y_j - smooth(Y)(X_j)`,
/// `b_j = S_j - smooth(S)(X_j)`, so `L(gamma) = sum (a_j - gamma b_j)^2`),
/// then minimized by golden-section search on a fixed bracket. A minimizer
/// pinned to the bracket edge is reported as an optimization failure with
/// the evaluated `(gamma, L)` grid attached.
pub fn fit_profile(
    history: &History,
    z: u8,
    kernel: &KernelSpec,
    c_h: f64,
    beta: f64,
) -> Result<ArmFit> {
    assert!(z < 2, "arm must be 0 or 1");
    require_arm_data(history, z, 2, "profile fit")?;
    let dim = history.dim();
    let (xs_arm, y_arm, s_arm) = arm_rows(history, z);
    let n_arm = y_arm.len();
    let h = bandwidth(c_h, n_arm, beta, dim)?;

    let y_sample = RegressionSample { dim, xs: &xs_arm, responses: &y_arm, mask: None };
    let s_sample = RegressionSample { dim, xs: &xs_arm, responses: &s_arm, mask: None };
    let mut a = Vec::with_capacity(n_arm);
    let mut b = Vec::with_capacity(n_arm);
    for j in 0..n_arm {
        let xj = &xs_arm[j * dim..(j + 1) * dim];
        a.push(y_arm[j] - nw_predict(&y_sample, kernel, h, xj));
        b.push(s_arm[j] - nw_predict(&s_sample, kernel, h, xj));
    }
    let loss = |g: f64| -> f64 {
        a.iter()
            .zip(&b)
            .map(|(aj, bj)| {
                let r = aj - g * bj;
                r * r
            })
            .sum()
    };

    let ss_b: f64 = b.iter().map(|v| v * v).sum();
    let gamma_hat = if ss_b < DEGENERATE_SS {
        0.0
    } else {
        let (g, grid) = golden_section(loss, PROFILE_BRACKET.0, PROFILE_BRACKET.1, PROFILE_TOL);
        let edge = 10.0 * PROFILE_TOL;
        if (g - PROFILE_BRACKET.0).abs() < edge || (PROFILE_BRACKET.1 - g).abs() < edge {
            return Err(Error::Optimization {
                message: format!(
                    "profile minimizer {g:.6} sits on the bracket edge [{}, {}]",
                    PROFILE_BRACKET.0, PROFILE_BRACKET.1
                ),
                grid,
            });
        }
        g
    };
    let sigma2_hat = loss(gamma_hat) / n_arm as f64;
    let r_arm: Vec<f64> = y_arm.iter().zip(&s_arm).map(|(y, s)| y - gamma_hat * s).collect();

    Ok(ArmFit {
        arm: z,
        kind: ModelKind::Profile,
        gamma_hat,
        sigma2_hat,
        fit_stage: history.len(),
        model: Model::Profile { kernel: *kernel, dim, h, xs_arm, r_arm },
    })
}

/// Golden-section minimization on `[lo, hi]`; returns the midpoint of the
/// final bracket and every evaluated `(argument, objective)` pair.
fn golden_section<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, Vec<(f64, f64)>) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut grid = Vec::new();
    let eval = |g: f64, grid: &mut Vec<(f64, f64)>| {
        let v = f(g);
        grid.push((g, v));
        v
    };
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let mut fc = eval(c, &mut grid);
    let mut fd = eval(d, &mut grid);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = eval(c, &mut grid);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = eval(d, &mut grid);
        }
    }
    ((lo + hi) / 2.0, grid)
}

/// Outcome-only smoother for the response-adaptive baseline: `mu` depends
/// on the covariates alone and `sigma2_hat` is the arm's outcome residual
/// variance (no surrogate conditioning).
pub fn fit_outcome_only(
    history: &History,
    z: u8,
    kernel: &KernelSpec,
    c_h: f64,
    beta: f64,
) -> Result<ArmFit> {
    assert!(z < 2, "arm must be 0 or 1");
    require_arm_data(history, z, 2, "outcome-only fit")?;
    let dim = history.dim();
    let (xs_arm, y_arm, _) = arm_rows(history, z);
    let n_arm = y_arm.len();
    let h = bandwidth(c_h, n_arm, beta, dim)?;
    let sample = RegressionSample { dim, xs: &xs_arm, responses: &y_arm, mask: None };
    let mut ss = 0.0;
    for j in 0..n_arm {
        let xj = &xs_arm[j * dim..(j + 1) * dim];
        let r = y_arm[j] - nw_predict(&sample, kernel, h, xj);
        ss += r * r;
    }
    Ok(ArmFit {
        arm: z,
        kind: ModelKind::OutcomeOnly,
        gamma_hat: 0.0,
        sigma2_hat: ss / n_arm as f64,
        fit_stage: history.len(),
        model: Model::OutcomeOnly { kernel: *kernel, dim, h, xs_arm, y_arm },
    })
}

/// Surrogate-augmented smoother for the surrogate-aware response-adaptive
/// baseline: the outcome is smoothed on `(x, s(z))`, so the effective
/// dimension (and the bandwidth exponent) grow by one.
pub fn fit_outcome_augmented(
    history: &History,
    z: u8,
    kernel: &KernelSpec,
    c_h: f64,
    beta: f64,
) -> Result<ArmFit> {
    assert!(z < 2, "arm must be 0 or 1");
    require_arm_data(history, z, 2, "surrogate-augmented fit")?;
    let dim = history.dim();
    let (xs_arm, y_arm, s_arm) = arm_rows(history, z);
    let n_arm = y_arm.len();
    let dim_aug = dim + 1;
    let h = bandwidth(c_h, n_arm, beta, dim_aug)?;
    let mut xs_aug = Vec::with_capacity(n_arm * dim_aug);
    for j in 0..n_arm {
        xs_aug.extend_from_slice(&xs_arm[j * dim..(j + 1) * dim]);
        xs_aug.push(s_arm[j]);
    }
    let sample = RegressionSample { dim: dim_aug, xs: &xs_aug, responses: &y_arm, mask: None };
    let mut ss = 0.0;
    for j in 0..n_arm {
        let qj = &xs_aug[j * dim_aug..(j + 1) * dim_aug];
        let r = y_arm[j] - nw_predict(&sample, kernel, h, qj);
        ss += r * r;
    }
    Ok(ArmFit {
        arm: z,
        kind: ModelKind::OutcomeAugmented,
        gamma_hat: 0.0,
        sigma2_hat: ss / n_arm as f64,
        fit_stage: history.len(),
        model: Model::OutcomeAugmented { kernel: *kernel, dim: dim_aug, h, xs_aug, y_arm },
    })
}
