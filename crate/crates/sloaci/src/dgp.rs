//! Data-generating processes for two-arm experiments with surrogates.
//!
//! Each unit carries a covariate vector `X` and, for every arm `z` in
//! `{0, 1}`, a potential surrogate and outcome pair
//!
//! ```text
//! S(z) = m_S,z(X) + eps_S,z        Y(z) = m_Y,z(X) + eps_Y,z
//! ```
//!
//! with `(eps_Y,z, eps_S,z)` bivariate Gaussian: standard deviations
//! `sigma_Y,z` and `sigma_S,z`, correlation `rho_z`, independent across
//! arms and of `X`. The surrogate projection coefficient and residual
//! standard deviation of each arm are
//!
//! ```text
//! gamma_z = rho_z * sigma_Y,z / sigma_S,z
//! sigma_z = sqrt(1 - rho_z^2) * sigma_Y,z
//! ```
//!
//! and the infeasible best predictor of `Y(z)` given `(X, S(z))` is
//! `mu_z(x, s) = m_Y,z(x) + gamma_z * (s - m_S,z(x))`.
//!
//! [`oracle_quantities`] returns the targets the adaptive design chases:
//! the Neyman allocation `pi* = sigma_1 / (sigma_0 + sigma_1)`, the
//! surrogate-assisted efficiency bound
//! `(sigma_0 + sigma_1)^2 + dispersion`, where the dispersion collects the
//! variance of the conditional effect `mu_1(X, S(1)) - mu_0(X, S(0))`, and
//! the corresponding no-surrogate bound for comparison.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Conditional mean functions available to scenario builders.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFn {
    /// Identically zero.
    Zero,
    /// A constant level.
    Constant(f64),
    /// `a*x^2 + b*x + c` evaluated on the first covariate coordinate.
    Quadratic { a: f64, b: f64, c: f64 },
    /// `sin(freq * x)` evaluated on the first covariate coordinate.
    Sine { freq: f64 },
    /// Inner product `coefs . x` over the full covariate vector.
    Linear { coefs: Vec<f64> },
}

impl MeanFn {
    /// Evaluates the mean function at a covariate vector.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            MeanFn::Zero => 0.0,
            MeanFn::Constant(c) => *c,
            MeanFn::Quadratic { a, b, c } => {
                let v = x[0];
                a * v * v + b * v + c
            }
            MeanFn::Sine { freq } => (freq * x[0]).sin(),
            MeanFn::Linear { coefs } => {
                assert_eq!(coefs.len(), x.len(), "linear mean dimension mismatch");
                coefs.iter().zip(x).map(|(c, v)| c * v).sum()
            }
        }
    }

    /// Polynomial coefficients `(c, b, a)` on the first coordinate, when
    /// the function is a univariate polynomial of degree at most two.
    fn poly_coeffs(&self) -> Option<(f64, f64, f64)> {
        match self {
            MeanFn::Zero => Some((0.0, 0.0, 0.0)),
            MeanFn::Constant(c) => Some((*c, 0.0, 0.0)),
            MeanFn::Quadratic { a, b, c } => Some((*c, *b, *a)),
            _ => None,
        }
    }
}

/// One arm's conditional means and Gaussian noise law.
#[derive(Debug, Clone)]
pub struct ArmSpec {
    pub mean_y: MeanFn,
    pub mean_s: MeanFn,
    /// Correlation between outcome and surrogate noise, in `(-1, 1)`.
    pub rho: f64,
    /// Outcome noise standard deviation, positive.
    pub sigma_y: f64,
    /// Surrogate noise standard deviation, positive.
    pub sigma_s: f64,
}

impl ArmSpec {
    /// Surrogate projection coefficient `rho * sigma_Y / sigma_S`.
    pub fn gamma(&self) -> f64 {
        self.rho * self.sigma_y / self.sigma_s
    }

    /// Residual standard deviation `sqrt(1 - rho^2) * sigma_Y`.
    pub fn sigma_res(&self) -> f64 {
        (1.0 - self.rho * self.rho).sqrt() * self.sigma_y
    }
}

/// Independent uniform covariates, `X_k ~ U(lo_k, hi_k)`.
#[derive(Debug, Clone)]
pub struct CovariateLaw {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CovariateLaw {
    /// `U(lo, hi)^d`, the same marginal on every coordinate.
    pub fn uniform(lo: f64, hi: f64, dim: usize) -> Self {
        CovariateLaw {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Raw moment `E[X_0^k]` of the first coordinate, `k <= 4`.
    fn moment0(&self, k: u32) -> f64 {
        let (lo, hi) = (self.lo[0], self.hi[0]);
        let p = k + 1;
        (hi.powi(p as i32) - lo.powi(p as i32)) / ((hi - lo) * p as f64)
    }
}

/// A complete two-arm data-generating process.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    /// Short name used in output files (`"1"`..`"4"` for the built-ins).
    pub label: String,
    pub covariates: CovariateLaw,
    /// Index 0 is control, index 1 is treatment.
    pub arms: [ArmSpec; 2],
}

impl ScenarioSpec {
    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    /// Checks the structural invariants of the specification.
    pub fn validate(&self) -> Result<()> {
        if self.covariates.dim() == 0 {
            return Err(Error::Invalid("covariate dimension must be at least 1".into()));
        }
        if self.covariates.lo.len() != self.covariates.hi.len() {
            return Err(Error::Invalid("covariate bound vectors differ in length".into()));
        }
        for (k, (lo, hi)) in self.covariates.lo.iter().zip(&self.covariates.hi).enumerate() {
            if !(lo < hi) {
                return Err(Error::Invalid(format!(
                    "covariate coordinate {k}: need lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        for (z, arm) in self.arms.iter().enumerate() {
            if !(arm.rho.abs() < 1.0) {
                return Err(Error::Invalid(format!(
                    "arm {z}: |rho| must be < 1, got {}",
                    arm.rho
                )));
            }
            if !(arm.sigma_y > 0.0) || !(arm.sigma_s > 0.0) {
                return Err(Error::Invalid(format!(
                    "arm {z}: noise standard deviations must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// The four simulation scenarios shipped with the crate.
///
/// All use `X ~ U(0, 2)`, outcome means `m_Y,1 = x^2 + 3x + 1` and
/// `m_Y,0 = x^2 + x + 2` (so the average effect is exactly 1), surrogate
/// means `sin(2x)` and `sin(x)`, and `sigma_S,z = sigma_Y,z`. They differ
/// in the noise correlations and scales:
///
/// | id | rho_0 | rho_1 | sigma_Y,0 | sigma_Y,1 |
/// |----|-------|-------|-----------|-----------|
/// | 1  |  0.8  |  0.8  |    0.4    |    0.6    |
/// | 2  |  0.5  | -0.5  |    0.4    |    0.6    |
/// | 3  |  0.8  |  0.8  |    0.2    |    0.8    |
/// | 4  |  0.0  |  0.0  |    0.4    |    0.6    |
pub fn built_in_scenario(id: u8) -> Result<ScenarioSpec> {
    let (rho0, rho1, sy0, sy1) = match id {
        1 => (0.8, 0.8, 0.4, 0.6),
        2 => (0.5, -0.5, 0.4, 0.6),
        3 => (0.8, 0.8, 0.2, 0.8),
        4 => (0.0, 0.0, 0.4, 0.6),
        other => {
            return Err(Error::Invalid(format!(
                "unknown scenario id {other}; built-ins are 1..=4"
            )))
        }
    };
    let spec = ScenarioSpec {
        label: id.to_string(),
        covariates: CovariateLaw::uniform(0.0, 2.0, 1),
        arms: [
            ArmSpec {
                mean_y: MeanFn::Quadratic { a: 1.0, b: 1.0, c: 2.0 },
                mean_s: MeanFn::Sine { freq: 1.0 },
                rho: rho0,
                sigma_y: sy0,
                sigma_s: sy0,
            },
            ArmSpec {
                mean_y: MeanFn::Quadratic { a: 1.0, b: 3.0, c: 1.0 },
                mean_s: MeanFn::Sine { freq: 2.0 },
                rho: rho1,
                sigma_y: sy1,
                sigma_s: sy1,
            },
        ],
    };
    spec.validate()?;
    Ok(spec)
}

/// One sampled unit with both potential surrogate/outcome pairs.
#[derive(Debug, Clone)]
pub struct Unit {
    pub x: Vec<f64>,
    /// Potential surrogates `[S(0), S(1)]`.
    pub s: [f64; 2],
    /// Potential outcomes `[Y(0), Y(1)]`.
    pub y: [f64; 2],
}

/// Draws one unit from the process.
///
/// The RNG consumption order is fixed (and relied on for reproducibility):
/// the `d` covariate uniforms, then for arm 0 and then arm 1 a pair of
/// standard normals `(a, b)` mapped to noise via `eps_Y = sigma_Y * a` and
/// `eps_S = sigma_S * (rho * a + sqrt(1 - rho^2) * b)`.
pub fn sample_unit<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Unit {
    let d = spec.dim();
    let mut x = Vec::with_capacity(d);
    for k in 0..d {
        let u: f64 = rng.random();
        x.push(spec.covariates.lo[k] + (spec.covariates.hi[k] - spec.covariates.lo[k]) * u);
    }
    let mut s = [0.0; 2];
    let mut y = [0.0; 2];
    for z in 0..2 {
        let arm = &spec.arms[z];
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let eps_y = arm.sigma_y * a;
        let eps_s = arm.sigma_s * (arm.rho * a + (1.0 - arm.rho * arm.rho).sqrt() * b);
        y[z] = arm.mean_y.eval(&x) + eps_y;
        s[z] = arm.mean_s.eval(&x) + eps_s;
    }
    Unit { x, s, y }
}

/// The infeasible best predictor `mu_z(x, s)` of `Y(z)` given `(X, S(z))`.
pub fn true_mu(spec: &ScenarioSpec, z: u8, x: &[f64], s: f64) -> f64 {
    assert!(z < 2, "arm index must be 0 or 1");
    let arm = &spec.arms[z as usize];
    arm.mean_y.eval(x) + arm.gamma() * (s - arm.mean_s.eval(x))
}

/// Infeasible design and efficiency targets of a scenario.
#[derive(Debug, Clone, Copy)]
pub struct OracleQuantities {
    /// Average treatment effect `E[Y(1) - Y(0)]`.
    pub tau0: f64,
    /// Neyman allocation `sigma_1 / (sigma_0 + sigma_1)` on residual scales.
    pub pi_star: f64,
    /// Residual standard deviations `[sigma_0, sigma_1]`.
    pub sigma_res: [f64; 2],
    /// Surrogate-assisted efficiency bound
    /// `(sigma_0 + sigma_1)^2 + cate_dispersion`.
    pub varsigma_star_sq: f64,
    /// `Var(mu_1(X,S(1)) - mu_0(X,S(0)))`, the dispersion of the
    /// conditional effect around `tau0`.
    pub cate_dispersion: f64,
    /// Efficiency bound of the same design problem without surrogates:
    /// `(sigma_Y,0 + sigma_Y,1)^2 + Var(m_Y,1(X) - m_Y,0(X))`.
    pub no_surrogate_bound: f64,
}

impl OracleQuantities {
    /// Variance saved per stage by exploiting surrogates.
    pub fn surrogate_gain(&self) -> f64 {
        self.no_surrogate_bound - self.varsigma_star_sq
    }
}

/// Computes [`OracleQuantities`] for a scenario.
///
/// `E[Delta m_Y(X)]` and `Var(Delta m_Y(X))` are evaluated in closed form
/// when both outcome means are univariate polynomials; otherwise they are
/// approximated by plain Monte Carlo over the covariate law with
/// `mc_draws` deterministic draws (`mc_draws >= 10_000` is required in
/// that case and an error is raised below it).
pub fn oracle_quantities(spec: &ScenarioSpec, mc_draws: u64) -> Result<OracleQuantities> {
    spec.validate()?;
    let (mean_delta, var_delta) = match delta_moments_closed_form(spec) {
        Some(mv) => mv,
        None => {
            if mc_draws < 10_000 {
                return Err(Error::Invalid(format!(
                    "no closed form for the effect dispersion; mc_draws = {mc_draws} < 10000"
                )));
            }
            delta_moments_mc(spec, mc_draws)
        }
    };
    let s0 = spec.arms[0].sigma_res();
    let s1 = spec.arms[1].sigma_res();
    // gamma_z * sigma_S,z = rho_z * sigma_Y,z regardless of the surrogate
    // noise scale, so the surrogate-noise part of the dispersion reduces to
    // rho^2 sigma_Y^2 summed over arms.
    let g0 = spec.arms[0].gamma() * spec.arms[0].sigma_s;
    let g1 = spec.arms[1].gamma() * spec.arms[1].sigma_s;
    let cate_dispersion = var_delta + g1 * g1 + g0 * g0;
    let sy_sum = spec.arms[0].sigma_y + spec.arms[1].sigma_y;
    Ok(OracleQuantities {
        tau0: mean_delta,
        pi_star: s1 / (s0 + s1),
        sigma_res: [s0, s1],
        varsigma_star_sq: (s0 + s1) * (s0 + s1) + cate_dispersion,
        cate_dispersion,
        no_surrogate_bound: sy_sum * sy_sum + var_delta,
    })
}

/// Mean and variance of `m_Y,1(X) - m_Y,0(X)` when both means are
/// univariate polynomials of degree at most two.
fn delta_moments_closed_form(spec: &ScenarioSpec) -> Option<(f64, f64)> {
    let (c1, b1, a1) = spec.arms[1].mean_y.poly_coeffs()?;
    let (c0, b0, a0) = spec.arms[0].mean_y.poly_coeffs()?;
    let (c, b, a) = (c1 - c0, b1 - b0, a1 - a0);
    let m1 = spec.covariates.moment0(1);
    let m2 = spec.covariates.moment0(2);
    let m3 = spec.covariates.moment0(3);
    let m4 = spec.covariates.moment0(4);
    let mean = c + b * m1 + a * m2;
    let second = c * c + 2.0 * b * c * m1 + (b * b + 2.0 * a * c) * m2 + 2.0 * a * b * m3 + a * a * m4;
    Some((mean, second - mean * mean))
}

/// Seed of the Monte Carlo moment oracle, fixed so oracle values are
/// reproducible and reportable.
pub const MC_ORACLE_SEED: u64 = 0x6f7261636c65;

/// Monte Carlo moments of `m_Y,1(X) - m_Y,0(X)` with a fixed internal seed.
fn delta_moments_mc(spec: &ScenarioSpec, draws: u64) -> (f64, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(MC_ORACLE_SEED);
    let d = spec.dim();
    let mut x = vec![0.0; d];
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..draws {
        for k in 0..d {
            let u: f64 = rng.random();
            x[k] = spec.covariates.lo[k] + (spec.covariates.hi[k] - spec.covariates.lo[k]) * u;
        }
        let delta = spec.arms[1].mean_y.eval(&x) - spec.arms[0].mean_y.eval(&x);
        let n = (i + 1) as f64;
        let d1 = delta - mean;
        mean += d1 / n;
        m2 += d1 * (delta - mean);
    }
    (mean, m2 / (draws as f64 - 1.0))
}
