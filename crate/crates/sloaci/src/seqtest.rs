//! Sequential inference over the pseudo-outcome stream.
//!
//! Four interval constructions monitor the running ATE estimate:
//!
//! * **CLT** - the fixed-sample interval `tau_hat +- sd * q(1-alpha/2)/sqrt(t)`.
//!   Valid at a pre-specified `t` only; under continuous monitoring it
//!   overshoots its level badly. It ships as the negative control.
//! * **BF** - the Bonferroni correction over the horizon `T`:
//!   `tau_hat +- sd * q(1 - alpha/(2T))/sqrt(t)`. Valid but conservative.
//! * **ASY** - an asymptotic confidence sequence from a Gaussian mixture
//!   boundary with mixing parameter `rho`:
//!   `tau_hat +- sqrt((t v rho^2 + 1)/(t^2 rho^2) * log((t v rho^2 + 1)/alpha^2))`
//!   where `v` is the variance plug-in. `rho` must be chosen before the
//!   data are seen; [`asy_rho_opt`] gives the width-minimizing value for a
//!   target stage.
//! * **EB** - a non-asymptotic empirical-Bernstein confidence sequence on
//!   reweighted rewards `xi_t = phi_t/(k_t + 1)`, `k_t = 1/min(pi, 1-pi) + 1`,
//!   with a truncated self-tuned step `lambda` and the Bernstein function
//!   `psi_E(lambda) = -log(1 - lambda) - lambda`. Its guarantee requires
//!   outcomes and predictors in `[0, 1]`; [`EbTracker`] optionally applies
//!   an affine rescaling (with clamping, which is counted and reported)
//!   for unbounded data.
//!
//! A stopping rule rejects the null `tau = tau_h0` at the first monitored
//! stage `t >= t0` whose interval excludes `tau_h0`, censoring at the
//! horizon.

use crate::{Error, Result};

/// The interval constructions, in the order used by output files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    Clt,
    Bf,
    Asy,
    Eb,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [TestKind::Clt, TestKind::Bf, TestKind::Asy, TestKind::Eb];

    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Clt => "clt",
            TestKind::Bf => "bf",
            TestKind::Asy => "asy",
            TestKind::Eb => "eb",
        }
    }

    pub fn parse(s: &str) -> Result<TestKind> {
        match s.to_ascii_lowercase().as_str() {
            "clt" => Ok(TestKind::Clt),
            "bf" => Ok(TestKind::Bf),
            "asy" => Ok(TestKind::Asy),
            "eb" => Ok(TestKind::Eb),
            other => Err(Error::Config(format!(
                "unknown test '{other}' (expected clt|bf|asy|eb)"
            ))),
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<TestKind> {
        TestKind::parse(s)
    }
}

/// Choice of the ASY mixing parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoChoice {
    /// Fix `rho` at the first peeking stage via [`asy_rho_opt`] using the
    /// variance plug-in available there.
    Auto,
    /// A pre-specified literal value.
    Fixed(f64),
}

/// Affine rescaling applied before the EB update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rescale {
    /// Feed raw pseudo-outcomes (no clamping). The formal EB guarantee
    /// then only applies to data already in `[0, 1]`.
    None,
    /// Resolve bounds from the initialization phase: empirical min/max of
    /// the outcomes widened by three initialization-phase SDs.
    Auto,
    /// Explicit bounds; outcomes and predictors are mapped by
    /// `(v - lo)/(hi - lo)` and clamped into `[0, 1]`.
    Fixed { lo: f64, hi: f64 },
}

/// Parameters of one sequential test.
#[derive(Debug, Clone, Copy)]
pub struct TestConfig {
    pub test: TestKind,
    /// Level in (0, 1).
    pub alpha: f64,
    /// First peeking stage.
    pub t0: u32,
    /// Total horizon (BF correction, censoring).
    pub horizon: u32,
    /// ASY mixing parameter.
    pub rho: RhoChoice,
    /// EB step truncation in (0, 1).
    pub c: f64,
    /// EB prior variance guess, positive.
    pub nu0_sq: f64,
    /// EB initial centering for the error term at `t = 1`.
    pub xi_hat0: f64,
    /// Null value under test.
    pub tau_h0: f64,
    /// EB rescaling mode.
    pub rescale: Rescale,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            test: TestKind::Eb,
            alpha: 0.05,
            t0: 50,
            horizon: 2500,
            rho: RhoChoice::Auto,
            c: 0.5,
            nu0_sq: 1.0,
            xi_hat0: 0.0,
            tau_h0: 0.0,
            rescale: Rescale::None,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Invalid(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if self.t0 < 1 || self.t0 > self.horizon {
            return Err(Error::Invalid(format!(
                "peeking stage t0 = {} must satisfy 1 <= t0 <= horizon = {}",
                self.t0, self.horizon
            )));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::Invalid(format!("EB truncation c = {} outside (0, 1)", self.c)));
        }
        if !(self.nu0_sq > 0.0) {
            return Err(Error::Invalid(format!(
                "EB prior variance nu0_sq = {} must be positive",
                self.nu0_sq
            )));
        }
        if let RhoChoice::Fixed(r) = self.rho {
            if !(r > 0.0) {
                return Err(Error::Invalid(format!("ASY rho = {r} must be positive")));
            }
        }
        if let Rescale::Fixed { lo, hi } = self.rescale {
            if !(lo < hi) {
                return Err(Error::Invalid(format!(
                    "EB rescale bounds need lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// A confidence region at one stage; bounds may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalPoint {
    pub t: u32,
    pub lower: f64,
    pub upper: f64,
}

/// Standard normal quantile (inverse CDF) by Wichura's rational
/// approximation (algorithm AS 241, PPND16 precision): absolute error
/// below 1e-9 over (0, 1) and far smaller near the center.
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must lie in (0, 1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
            + 6.7265770927008700853e4)
            * r
            + 4.5921953931549871457e4)
            * r
            + 1.3731693765509461125e4)
            * r
            + 1.9715909503065514427e3)
            * r
            + 1.3314166789178437745e2)
            * r
            + 3.3871328727963666080)
            * q;
        let den = ((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
            + 3.9307895800092710610e4)
            * r
            + 2.1213794301586595867e4)
            * r
            + 5.3941960214247511077e3)
            * r
            + 6.8718700749205790830e2)
            * r
            + 4.2313330701600911252e1)
            * r
            + 1.0;
        return num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
            + 2.41780725177450611770e-1)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.76949722146069140550)
            * r
            + 4.63033784615654529590)
            * r
            + 1.42343711074968357734;
        let den = ((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
            + 1.51986665636164571966e-2)
            * r
            + 1.48103976427480074590e-1)
            * r
            + 6.89767334985100004550e-1)
            * r
            + 1.67638483018380384940)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 1.24266094738807843860e-3)
            * r
            + 2.65321895265761230930e-2)
            * r
            + 2.96560571828504891230e-1)
            * r
            + 1.78482653991729133580)
            * r
            + 5.46378491116411436990)
            * r
            + 6.65790464350110377720;
        let den = ((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
            + 1.84631831751005468180e-5)
            * r
            + 7.86869131145613259100e-4)
            * r
            + 1.48753612908506148525e-2)
            * r
            + 1.36929880922735805310e-1)
            * r
            + 5.99832206555887937690e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Fixed-sample (CLT) interval; `varsigma_hat` is the SD plug-in.
pub fn clt_interval(tau_hat: f64, varsigma_hat: f64, t: u32, alpha: f64) -> IntervalPoint {
    assert!(t >= 1, "stage must be at least 1");
    let half = varsigma_hat * norm_quantile(1.0 - alpha / 2.0) / (t as f64).sqrt();
    IntervalPoint { t, lower: tau_hat - half, upper: tau_hat + half }
}

/// Bonferroni-corrected interval over a horizon of `horizon` looks.
pub fn bf_interval(
    tau_hat: f64,
    varsigma_hat: f64,
    t: u32,
    alpha: f64,
    horizon: u32,
) -> Result<IntervalPoint> {
    assert!(t >= 1, "stage must be at least 1");
    if t > horizon {
        return Err(Error::Invalid(format!(
            "stage {t} exceeds the Bonferroni horizon {horizon}"
        )));
    }
    let half =
        varsigma_hat * norm_quantile(1.0 - alpha / (2.0 * horizon as f64)) / (t as f64).sqrt();
    Ok(IntervalPoint { t, lower: tau_hat - half, upper: tau_hat + half })
}

/// Width-minimizing ASY mixing parameter for a target stage:
/// `sqrt((-2 log alpha + log(-2 log alpha + 1)) / (t * varsigma2_hat))`.
pub fn asy_rho_opt(t: u32, varsigma2_hat: f64, alpha: f64) -> Result<f64> {
    assert!(t >= 1, "stage must be at least 1");
    if !(varsigma2_hat > 0.0) {
        return Err(Error::Invalid(
            "ASY rho tuning needs a positive variance plug-in".into(),
        ));
    }
    let a = -2.0 * alpha.ln();
    Ok(((a + (a + 1.0).ln()) / (t as f64 * varsigma2_hat)).sqrt())
}

/// Asymptotic confidence sequence point; `varsigma2_hat` is the variance
/// plug-in.
pub fn asy_interval(
    tau_hat: f64,
    varsigma2_hat: f64,
    t: u32,
    rho: f64,
    alpha: f64,
) -> IntervalPoint {
    assert!(t >= 1, "stage must be at least 1");
    assert!(rho > 0.0, "mixing parameter must be positive");
    let tf = t as f64;
    let m = tf * varsigma2_hat * rho * rho + 1.0;
    let half = (m / (tf * tf * rho * rho) * (m / (alpha * alpha)).ln()).sqrt();
    IntervalPoint { t, lower: tau_hat - half, upper: tau_hat + half }
}

/// Bernstein function `psi_E(lambda) = -log(1 - lambda) - lambda`.
pub fn psi_e(lambda: f64) -> f64 {
    assert!(lambda < 1.0, "psi_E requires lambda < 1");
    -(1.0 - lambda).ln() - lambda
}

/// Accumulators of the empirical-Bernstein confidence sequence. All sums
/// run over processed stages; see [`eb_update`] for the recursion.
#[derive(Debug, Clone, Copy, Default)]
pub struct EbState {
    /// Number of processed stages.
    pub t: u64,
    /// Sum of reweighted rewards `xi_j`.
    pub sum_xi: f64,
    /// Sum of squared deviations `(xi_j - xi_bar_j)^2` (variance feed).
    pub sum_dev_sq: f64,
    /// Sum of `lambda_j * xi_j` (interval numerator).
    pub sum_lam_xi: f64,
    /// Sum of `lambda_j / (k_j + 1)` (interval denominator).
    pub sum_lam_w: f64,
    /// Sum of `(xi_j - xi_hat_{j-1})^2 * psi_E(lambda_j)` (error term).
    pub sum_err: f64,
}

impl EbState {
    /// Interval implied by the current accumulators; the whole line while
    /// the denominator is zero (no stages processed).
    pub fn interval(&self, alpha: f64) -> IntervalPoint {
        if self.sum_lam_w <= 0.0 {
            return IntervalPoint {
                t: self.t as u32,
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            };
        }
        let center = self.sum_lam_xi / self.sum_lam_w;
        let half = ((1.0 / alpha).ln() + self.sum_err) / self.sum_lam_w;
        IntervalPoint { t: self.t as u32, lower: center - half, upper: center + half }
    }
}

/// One step of the empirical-Bernstein recursion.
///
/// With `k_t = 1/min(pi, 1-pi) + 1` and `xi_t = phi/(k_t + 1)`:
///
/// ```text
/// nu2_{t-1}   = (nu0_sq + sum_dev_sq) / t
/// lambda_t    = min( sqrt(2 log(1/alpha) / (nu2_{t-1} t log(1+t))), c )
/// xi_hat_{t-1} = min( mean(xi_1..xi_{t-1}), 1/(k_t+1) )      (xi_hat0 at t = 1)
/// xi_bar_t    = min( mean(xi_1..xi_t),      1/(k_t+1) )
/// ```
///
/// The truncations of `xi_hat` and `xi_bar` both use the current `k_t`.
/// Returns the updated state and the interval of the confidence sequence
/// (center `sum(lambda xi)/sum(lambda/(k+1))`, half-width
/// `(log(1/alpha) + sum_err)/sum(lambda/(k+1))`).
pub fn eb_update(
    mut state: EbState,
    phi: f64,
    pi: f64,
    alpha: f64,
    cfg: &TestConfig,
) -> (EbState, IntervalPoint) {
    assert!(pi > 0.0 && pi < 1.0, "assignment probability must be in (0, 1)");
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
    let t_next = state.t + 1;
    let tf = t_next as f64;
    let k = 1.0 / pi.min(1.0 - pi) + 1.0;
    let xi = phi / (k + 1.0);

    let nu2_prev = (cfg.nu0_sq + state.sum_dev_sq) / tf;
    let lambda = (2.0 * (1.0 / alpha).ln() / (nu2_prev * tf * (1.0 + tf).ln()))
        .sqrt()
        .min(cfg.c);
    let xi_hat_prev = if state.t == 0 {
        cfg.xi_hat0
    } else {
        (state.sum_xi / state.t as f64).min(1.0 / (k + 1.0))
    };

    let err = xi - xi_hat_prev;
    state.sum_err += err * err * psi_e(lambda);
    state.sum_lam_xi += lambda * xi;
    state.sum_lam_w += lambda / (k + 1.0);
    state.sum_xi += xi;
    let xi_bar = (state.sum_xi / tf).min(1.0 / (k + 1.0));
    let dev = xi - xi_bar;
    state.sum_dev_sq += dev * dev;
    state.t = t_next;

    let interval = state.interval(alpha);
    (state, interval)
}

/// Stateful EB runner that applies the configured rescaling before each
/// update and maps the interval back to the original outcome scale.
///
/// Because outcomes and predictors all transform by the same affine map,
/// the shift cancels inside the pseudo-outcome and the interval unmaps by
/// pure scaling with `hi - lo`. Clamping (values escaping the bounds)
/// breaks that identity on the affected stages; every clamped value is
/// counted in `clamp_count` for reporting.
#[derive(Debug, Clone)]
pub struct EbTracker {
    cfg: TestConfig,
    state: EbState,
    /// Resolved bounds; `None` feeds raw pseudo-outcomes.
    bounds: Option<(f64, f64)>,
    pub clamp_count: u64,
}

impl EbTracker {
    /// `bounds` must already be resolved (`Rescale::Auto` is resolved by
    /// the caller, which owns the initialization data).
    pub fn new(cfg: TestConfig, bounds: Option<(f64, f64)>) -> Self {
        EbTracker { cfg, state: EbState::default(), bounds, clamp_count: 0 }
    }

    fn map(&mut self, v: f64) -> f64 {
        match self.bounds {
            None => v,
            Some((lo, hi)) => {
                let mapped = (v - lo) / (hi - lo);
                if !(0.0..=1.0).contains(&mapped) {
                    self.clamp_count += 1;
                    mapped.clamp(0.0, 1.0)
                } else {
                    mapped
                }
            }
        }
    }

    /// Consumes one stage and returns the interval on the original scale.
    pub fn update(&mut self, y: f64, mu0: f64, mu1: f64, z: u8, pi: f64) -> IntervalPoint {
        let ym = self.map(y);
        let m0 = self.map(mu0);
        let m1 = self.map(mu1);
        let phi = crate::estimator::phi_from_values(m0, m1, z, ym, pi)
            .expect("probability validated by caller");
        let (state, raw) = eb_update(self.state, phi, pi, self.cfg.alpha, &self.cfg);
        self.state = state;
        let scale = match self.bounds {
            None => 1.0,
            Some((lo, hi)) => hi - lo,
        };
        IntervalPoint { t: raw.t, lower: raw.lower * scale, upper: raw.upper * scale }
    }

    pub fn state(&self) -> &EbState {
        &self.state
    }
}

/// A stage-ordered interval sequence from one test.
#[derive(Debug, Clone)]
pub struct IntervalSeries {
    pub test: TestKind,
    pub points: Vec<IntervalPoint>,
}

/// First-exit result of the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingTime {
    pub stage: u32,
    pub censored: bool,
}

/// First monitored stage `t >= t0` whose interval excludes `tau_h0`;
/// censored at `horizon` when no interval ever excludes it.
pub fn stopping_time(
    series: &IntervalSeries,
    tau_h0: f64,
    t0: u32,
    horizon: u32,
) -> StoppingTime {
    for p in &series.points {
        if p.t < t0 || p.t > horizon {
            continue;
        }
        if tau_h0 < p.lower || tau_h0 > p.upper {
            return StoppingTime { stage: p.t, censored: false };
        }
    }
    StoppingTime { stage: horizon, censored: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn norm_quantile_frozen_values() {
        assert!((norm_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
        assert!((norm_quantile(1.0 - 1e-5) - 4.2648907939228246).abs() < 1e-9);
        assert!((norm_quantile(0.9) - 1.2815515655446004).abs() < 1e-9);
        assert!((norm_quantile(0.3) + 0.5244005127080408).abs() < 1e-9);
        assert!((norm_quantile(1e-12) + 7.034483825301132).abs() < 1e-8);
        assert_eq!(norm_quantile(0.5), 0.0);
        for p in [0.001, 0.05, 0.21, 0.5, 0.77, 0.9999] {
            assert_relative_eq!(norm_quantile(p), -norm_quantile(1.0 - p), epsilon = 1e-10);
        }
    }

    #[test]
    fn clt_interval_reference_values() {
        let z = clt_interval(1.0, 0.0, 10, 0.05);
        assert_eq!((z.lower, z.upper), (1.0, 1.0));
        let p = clt_interval(1.0, 1.0, 100, 0.05);
        assert!((p.upper - 1.0 - 0.19600).abs() < 1e-4);
        // Width halves when t quadruples.
        let q = clt_interval(1.0, 1.0, 400, 0.05);
        assert_relative_eq!(q.upper - q.lower, (p.upper - p.lower) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn bf_interval_reference_values() {
        // With a single monitored stage the correction vanishes.
        let clt1 = clt_interval(1.0, 1.0, 1, 0.05);
        let bf1 = bf_interval(1.0, 1.0, 1, 0.05, 1).unwrap();
        assert_relative_eq!(bf1.upper, clt1.upper, epsilon = 1e-12);
        let clt = clt_interval(1.0, 1.0, 100, 0.05);
        let bf = bf_interval(1.0, 1.0, 100, 0.05, 2500).unwrap();
        assert!((bf.upper - 1.0 - 0.42649).abs() < 1e-3);
        assert!(bf.upper > clt.upper);
        assert!(bf_interval(1.0, 1.0, 2501, 0.05, 2500).is_err());
    }

    #[test]
    fn asy_rho_opt_reference_values() {
        let r = asy_rho_opt(100, 1.0, 0.05).unwrap();
        assert!((r - 0.28171).abs() < 1e-4);
        // rho^2 * t * varsigma2 equals -2 ln(alpha) + ln(-2 ln(alpha) + 1).
        let a = -2.0 * (0.05f64).ln();
        assert_relative_eq!(r * r * 100.0, a + (a + 1.0).ln(), epsilon = 1e-12);
        // 1/sqrt(t) scaling.
        let r4 = asy_rho_opt(400, 1.0, 0.05).unwrap();
        assert_relative_eq!(r4, r / 2.0, epsilon = 1e-12);
        assert!(asy_rho_opt(100, 0.0, 0.05).is_err());
    }

    #[test]
    fn asy_interval_reference_values() {
        let p = asy_interval(1.0, 1.0, 100, 0.28171, 0.05);
        assert!((p.upper - 1.0 - 0.30353).abs() < 1e-3, "upper = {}", p.upper);
        let b = asy_interval(0.0, 0.0, 1, 1.0, 0.05);
        assert!((b.upper - (1.0f64 / 0.0025).ln().sqrt()).abs() < 1e-3);
        // Monotone in the variance plug-in.
        let lo = asy_interval(0.0, 0.5, 50, 0.2, 0.05);
        let hi = asy_interval(0.0, 1.5, 50, 0.2, 0.05);
        assert!(hi.upper > lo.upper);
    }

    #[test]
    fn asy_wider_than_clt_at_matched_inputs() {
        for t in [2u32, 10, 100, 1000, 2500] {
            let rho = asy_rho_opt(t, 1.0, 0.05).unwrap();
            let asy = asy_interval(0.0, 1.0, t, rho, 0.05);
            let clt = clt_interval(0.0, 1.0, t, 0.05);
            assert!(asy.upper > clt.upper, "t = {t}");
        }
    }

    #[test]
    fn psi_e_reference_values() {
        assert_eq!(psi_e(0.0), 0.0);
        assert!((psi_e(0.5) - 0.19315).abs() < 1e-5);
    }

    #[test]
    fn eb_first_update_matches_hand_computation() {
        let cfg = TestConfig { alpha: 0.05, ..TestConfig::default() };
        let state = EbState::default();
        let phi = 1.0;
        let (state, interval) = eb_update(state, phi, 0.5, 0.05, &cfg);
        // k = 3, xi = 1/4; nu2_0 = 1; lambda = min(2.9400, 0.5) = 0.5.
        let ln20 = (20.0f64).ln();
        let lambda: f64 = (2.0 * ln20 / (2.0f64).ln()).sqrt().min(0.5);
        assert_eq!(lambda, 0.5);
        let xi = 0.25;
        let center = (lambda * xi) / (lambda / 4.0);
        let half = (ln20 + xi * xi * psi_e(lambda)) / (lambda / 4.0);
        assert_relative_eq!(interval.lower, center - half, epsilon = 1e-12);
        assert_relative_eq!(interval.upper, center + half, epsilon = 1e-12);
        assert_eq!(state.t, 1);
        assert_relative_eq!(state.sum_xi, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn eb_k_values_and_empty_interval() {
        // pi = 0.5 -> k = 3; pi = 0.2 -> k = 6. Probe through xi = phi/(k+1).
        let cfg = TestConfig::default();
        let (s1, _) = eb_update(EbState::default(), 1.0, 0.5, 0.05, &cfg);
        assert_relative_eq!(s1.sum_xi, 1.0 / 4.0, epsilon = 1e-15);
        let (s2, _) = eb_update(EbState::default(), 1.0, 0.2, 0.05, &cfg);
        assert_relative_eq!(s2.sum_xi, 1.0 / 7.0, epsilon = 1e-15);
        // No stages processed: whole line.
        let empty = EbState::default().interval(0.05);
        assert_eq!(empty.lower, f64::NEG_INFINITY);
        assert_eq!(empty.upper, f64::INFINITY);
    }

    #[test]
    fn eb_lambda_stays_truncated_and_interval_shrinks() {
        let cfg = TestConfig::default();
        let mut state = EbState::default();
        let mut widths = Vec::new();
        for j in 0..200 {
            let phi = 0.4 + 0.2 * ((j % 5) as f64 / 5.0 - 0.4);
            let (s, iv) = eb_update(state, phi, 0.5, 0.05, &cfg);
            state = s;
            widths.push(iv.upper - iv.lower);
        }
        assert!(widths[199] < widths[10]);
        assert!(widths.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn eb_tracker_identity_matches_raw_updates() {
        let cfg = TestConfig::default();
        let mut tracker = EbTracker::new(cfg, None);
        let mut state = EbState::default();
        for j in 0..50 {
            let y = 0.3 + 0.4 * ((j % 7) as f64 / 7.0);
            let (mu0, mu1, z, pi) = (0.4, 0.6, (j % 2) as u8, 0.5);
            let got = tracker.update(y, mu0, mu1, z, pi);
            let phi = crate::estimator::phi_from_values(mu0, mu1, z, y, pi).unwrap();
            let (s, expect) = eb_update(state, phi, pi, cfg.alpha, &cfg);
            state = s;
            assert_eq!(got, expect);
        }
        assert_eq!(tracker.clamp_count, 0);
    }

    #[test]
    fn eb_tracker_counts_clamps_and_scales_back() {
        let cfg = TestConfig::default();
        let mut tracker = EbTracker::new(cfg, Some((0.0, 2.0)));
        // y = 3.0 escapes the bounds and is clamped once.
        let iv = tracker.update(3.0, 0.5, 1.5, 1, 0.5);
        assert_eq!(tracker.clamp_count, 1);
        // The unmapped interval is scaled by hi - lo = 2 relative to the
        // internal [0, 1] computation.
        let phi = crate::estimator::phi_from_values(0.25, 0.75, 1, 1.0, 0.5).unwrap();
        let (_, internal) = eb_update(EbState::default(), phi, 0.5, cfg.alpha, &cfg);
        assert_relative_eq!(iv.lower, internal.lower * 2.0, epsilon = 1e-12);
        assert_relative_eq!(iv.upper, internal.upper * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn stopping_time_rules() {
        let mk = |t: u32, lo: f64, hi: f64| IntervalPoint { t, lower: lo, upper: hi };
        // Immediate rejection at t0.
        let series = IntervalSeries {
            test: TestKind::Bf,
            points: (1..=100).map(|t| mk(t, 0.9, 1.1)).collect(),
        };
        assert_eq!(
            stopping_time(&series, 0.2, 50, 100),
            StoppingTime { stage: 50, censored: false }
        );
        // Null inside every interval: censored at the horizon.
        assert_eq!(
            stopping_time(&series, 1.0, 50, 100),
            StoppingTime { stage: 100, censored: true }
        );
        // First-exit construction: wide until t = 299, tighter after.
        let series = IntervalSeries {
            test: TestKind::Asy,
            points: (1..=400)
                .map(|t| if t < 300 { mk(t, 0.0, 2.0) } else { mk(t, 0.5, 1.5) })
                .collect(),
        };
        assert_eq!(
            stopping_time(&series, 0.2, 50, 400),
            StoppingTime { stage: 300, censored: false }
        );
    }

    #[test]
    fn config_validation() {
        let ok = TestConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TestConfig { alpha: 0.0, ..ok }.validate().is_err());
        assert!(TestConfig { t0: 0, ..ok }.validate().is_err());
        assert!(TestConfig { t0: 3000, ..ok }.validate().is_err());
        assert!(TestConfig { c: 1.0, ..ok }.validate().is_err());
        assert!(TestConfig { nu0_sq: 0.0, ..ok }.validate().is_err());
        assert!(TestConfig { rho: RhoChoice::Fixed(0.0), ..ok }.validate().is_err());
        assert!(TestConfig { rescale: Rescale::Fixed { lo: 1.0, hi: 1.0 }, ..ok }
            .validate()
            .is_err());
    }
}
