//! Kernel profiles, the bandwidth rule, and the Nadaraya-Watson smoother.
//!
//! Regressions in this crate are local-constant (Nadaraya-Watson) fits with
//! a product kernel over coordinates,
//!
//! ```text
//! m_hat(x) = sum_j r_j * prod_k K((x_k - x_jk) / h)  /  sum_j prod_k K((x_k - x_jk) / h)
//! ```
//!
//! Bandwidths follow the rate-optimal rule `h = c_h * n^(-1/(2*beta + d))`
//! for a smoothness index `beta` and covariate dimension `d`; the scale
//! constant defaults to twice the average per-coordinate sample standard
//! deviation of the covariates.
//!
//! Two guard rails keep predictions finite in sparse regions:
//!
//! * an exactly zero denominator yields the prediction 0;
//! * for compactly supported kernels, when the weighted denominator is no
//!   larger than `floor x (number of points in the sup-norm window)`, the
//!   smoother falls back to the unweighted average of responses in the
//!   window (a near-degenerate weight profile carries no usable shape
//!   information, but the window average is still consistent).
//!
//! The fallback never applies to the Gaussian kernel, whose weights are
//! strictly positive everywhere.

use crate::{Error, Result};

/// Kernel families available for local-constant regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `K(u) = 0.75 * (1 - u^2)` on `|u| < 1`, else 0.
    Epanechnikov,
    /// `K(u) = exp(-u^2 / 2) / sqrt(2 pi)`; unbounded support.
    Gaussian,
    /// `K(u) = 1` on `|u| <= 1`, else 0.
    Uniform,
}

impl KernelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Result<KernelFamily> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "gaussian" => Ok(KernelFamily::Gaussian),
            "uniform" => Ok(KernelFamily::Uniform),
            other => Err(Error::Config(format!(
                "unknown kernel family '{other}' (expected epanechnikov|gaussian|uniform)"
            ))),
        }
    }

    /// One-dimensional kernel profile value at `u`.
    pub fn value(self, u: f64) -> f64 {
        match self {
            KernelFamily::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelFamily::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            KernelFamily::Uniform => {
                if u.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Whether the profile vanishes outside `|u| <= 1`.
    pub fn compact_support(self) -> bool {
        !matches!(self, KernelFamily::Gaussian)
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<KernelFamily> {
        KernelFamily::parse(s)
    }
}

/// A kernel family together with its stabilization floor.
#[derive(Debug, Clone, Copy)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Per-window-point denominator floor below which the smoother swaps to
    /// a uniform window average. Ignored for the Gaussian family.
    pub stabilization_floor: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            family: KernelFamily::Epanechnikov,
            stabilization_floor: 1e-4,
        }
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        KernelSpec {
            family,
            ..KernelSpec::default()
        }
    }
}

/// Rate-optimal bandwidth `c_h * n^(-1/(2*beta + d))`.
///
/// `c_h` and `beta` must be positive and `d >= 1`; `n = 0` is rejected
/// because no bandwidth is meaningful for an empty sample.
pub fn bandwidth(c_h: f64, n: usize, beta: f64, d: usize) -> Result<f64> {
    if !(c_h > 0.0) {
        return Err(Error::Invalid(format!("bandwidth scale c_h = {c_h} must be positive")));
    }
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("smoothness beta = {beta} must be positive")));
    }
    if d == 0 {
        return Err(Error::Invalid("covariate dimension d must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::InsufficientData("bandwidth requires a nonempty sample".into()));
    }
    let exponent = -1.0 / (2.0 * beta + d as f64);
    Ok(c_h * (n as f64).powf(exponent))
}

/// Default bandwidth scale constant: twice the average per-coordinate
/// sample standard deviation (denominator `n - 1`) of the rows of `xs`.
///
/// `xs` is row-major with `dim` entries per row. Returns an error when
/// fewer than two rows are available or the spread is degenerate.
pub fn default_scale(xs: &[f64], dim: usize) -> Result<f64> {
    assert!(dim >= 1, "dim must be at least 1");
    assert_eq!(xs.len() % dim, 0, "xs length must be a multiple of dim");
    let n = xs.len() / dim;
    if n < 2 {
        return Err(Error::InsufficientData(
            "bandwidth scale needs at least 2 covariate rows".into(),
        ));
    }
    let mut total_sd = 0.0;
    for k in 0..dim {
        let mut mean = 0.0;
        for j in 0..n {
            mean += xs[j * dim + k];
        }
        mean /= n as f64;
        let mut ss = 0.0;
        for j in 0..n {
            let dev = xs[j * dim + k] - mean;
            ss += dev * dev;
        }
        total_sd += (ss / (n as f64 - 1.0)).sqrt();
    }
    let scale = 2.0 * total_sd / dim as f64;
    if !(scale > 0.0) {
        return Err(Error::Invalid(
            "bandwidth scale is zero: covariates have no spread".into(),
        ));
    }
    Ok(scale)
}

/// A design for local-constant regression: `n` covariate rows (row-major,
/// `dim` entries each), one response per row, and an optional inclusion
/// mask selecting a subsample.
#[derive(Debug, Clone, Copy)]
pub struct RegressionSample<'a> {
    pub dim: usize,
    pub xs: &'a [f64],
    pub responses: &'a [f64],
    pub mask: Option<&'a [bool]>,
}

impl<'a> RegressionSample<'a> {
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

/// Nadaraya-Watson prediction at the query point `x`.
///
/// A zero denominator (no mass at the query) yields 0. For compactly
/// supported kernels a denominator at or below
/// `stabilization_floor x |window|` triggers the uniform window-average
/// fallback described in the module docs.
pub fn nw_predict(sample: &RegressionSample, kernel: &KernelSpec, h: f64, x: &[f64]) -> f64 {
    let dim = sample.dim;
    assert!(dim >= 1, "dimension must be at least 1");
    assert!(h > 0.0, "bandwidth must be positive");
    assert_eq!(x.len(), dim, "query dimension mismatch");
    assert_eq!(
        sample.xs.len(),
        sample.responses.len() * dim,
        "covariate/response length mismatch"
    );
    if let Some(mask) = sample.mask {
        assert_eq!(mask.len(), sample.responses.len(), "mask length mismatch");
    }

    let mut num = 0.0;
    let mut den = 0.0;
    let mut window_count = 0usize;
    let mut window_sum = 0.0;
    for j in 0..sample.responses.len() {
        if let Some(mask) = sample.mask {
            if !mask[j] {
                continue;
            }
        }
        let row = &sample.xs[j * dim..(j + 1) * dim];
        let mut w = 1.0;
        let mut in_window = true;
        for k in 0..dim {
            let u = (x[k] - row[k]) / h;
            if u.abs() > 1.0 {
                in_window = false;
                if kernel.family.compact_support() {
                    w = 0.0;
                    break;
                }
            }
            w *= kernel.family.value(u);
        }
        if in_window {
            window_count += 1;
            window_sum += sample.responses[j];
        }
        num += w * sample.responses[j];
        den += w;
    }

    if den == 0.0 {
        return 0.0;
    }
    if kernel.family.compact_support()
        && den <= kernel.stabilization_floor * window_count as f64
        && window_count > 0
    {
        return window_sum / window_count as f64;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bandwidth_matches_rate_formula() {
        let h = bandwidth(2.0, 100, 1.0, 1).unwrap();
        assert_relative_eq!(h, 2.0 * (100f64).powf(-1.0 / 3.0), epsilon = 1e-15);
        assert_relative_eq!(h, 0.43088693800637674, epsilon = 1e-12);
        // Exponent slows down with dimension.
        let h2 = bandwidth(2.0, 100, 1.0, 2).unwrap();
        assert!(h2 > h);
    }

    #[test]
    fn bandwidth_rejects_bad_arguments() {
        assert!(bandwidth(0.0, 10, 1.0, 1).is_err());
        assert!(bandwidth(1.0, 0, 1.0, 1).is_err());
        assert!(bandwidth(1.0, 10, 0.0, 1).is_err());
        assert!(bandwidth(1.0, 10, 1.0, 0).is_err());
    }

    #[test]
    fn kernel_profiles_at_reference_points() {
        assert_relative_eq!(KernelFamily::Epanechnikov.value(0.0), 0.75);
        assert_eq!(KernelFamily::Epanechnikov.value(1.0), 0.0);
        assert_eq!(KernelFamily::Uniform.value(1.0), 1.0);
        assert_eq!(KernelFamily::Uniform.value(1.0001), 0.0);
        assert_relative_eq!(
            KernelFamily::Gaussian.value(0.0),
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn constant_responses_are_reproduced() {
        let xs = [0.1, 0.4, 0.9, 1.3, 1.9];
        let rs = [3.5; 5];
        let sample = RegressionSample {
            dim: 1,
            xs: &xs,
            responses: &rs,
            mask: None,
        };
        for family in [KernelFamily::Epanechnikov, KernelFamily::Gaussian, KernelFamily::Uniform] {
            let p = nw_predict(&sample, &KernelSpec::new(family), 0.5, &[1.0]);
            assert_relative_eq!(p, 3.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_window_predicts_zero() {
        let xs = [0.0, 0.1];
        let rs = [5.0, 7.0];
        let sample = RegressionSample {
            dim: 1,
            xs: &xs,
            responses: &rs,
            mask: None,
        };
        let p = nw_predict(&sample, &KernelSpec::default(), 0.2, &[10.0]);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn mask_restricts_the_sample() {
        let xs = [1.0, 1.0, 1.0];
        let rs = [1.0, 2.0, 9.0];
        let mask = [true, true, false];
        let sample = RegressionSample {
            dim: 1,
            xs: &xs,
            responses: &rs,
            mask: Some(&mask),
        };
        let p = nw_predict(&sample, &KernelSpec::default(), 1.0, &[1.0]);
        assert_relative_eq!(p, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn stabilization_swaps_to_window_average() {
        // Points sit just inside the window edge where the Epanechnikov
        // weight is tiny but nonzero; the fallback must average them.
        let xs = [0.9999999, -0.9999999];
        let rs = [2.0, 4.0];
        let sample = RegressionSample {
            dim: 1,
            xs: &xs,
            responses: &rs,
            mask: None,
        };
        let kernel = KernelSpec::default();
        let p = nw_predict(&sample, &kernel, 1.0, &[0.0]);
        assert_relative_eq!(p, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_skips_stabilization() {
        // Far-away points give minuscule Gaussian weights; the ratio is
        // still used as-is (no window fallback for unbounded support).
        let xs = [8.0, -9.0];
        let rs = [2.0, 4.0];
        let sample = RegressionSample {
            dim: 1,
            xs: &xs,
            responses: &rs,
            mask: None,
        };
        let kernel = KernelSpec::new(KernelFamily::Gaussian);
        let p = nw_predict(&sample, &kernel, 1.0, &[0.0]);
        assert!(p.is_finite());
        // Ratio of the two Gaussian weights, recomputed directly.
        let w8 = (-32.0f64).exp();
        let w9 = (-40.5f64).exp();
        let expect = (2.0 * w8 + 4.0 * w9) / (w8 + w9);
        assert!((p - expect).abs() < 1e-12, "p = {p}, expect = {expect}");
        // Weight on 8.0 dwarfs weight on -9.0, so the prediction leans to 2.
        assert!((p - 2.0).abs() < 1e-3, "p = {p}");
    }

    #[test]
    fn product_kernel_matches_manual_computation() {
        let xs = [0.0, 0.0, 0.5, 0.5, 2.0, 2.0];
        let rs = [1.0, 2.0, 3.0];
        let sample = RegressionSample {
            dim: 2,
            xs: &xs,
            responses: &rs,
            mask: None,
        };
        let kernel = KernelSpec::default();
        let h = 1.0;
        let q = [0.25, 0.25];
        let k = |u: f64| KernelFamily::Epanechnikov.value(u);
        let w0 = k(0.25) * k(0.25);
        let w1 = k(-0.25) * k(-0.25);
        let expect = (w0 * 1.0 + w1 * 2.0) / (w0 + w1);
        assert_relative_eq!(nw_predict(&sample, &kernel, h, &q), expect, epsilon = 1e-14);
    }

    #[test]
    fn default_scale_is_twice_mean_sd() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let got = default_scale(&xs, 1).unwrap();
        let mean = 1.5;
        let ss: f64 = xs.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / 3.0).sqrt();
        assert_relative_eq!(got, 2.0 * sd, epsilon = 1e-14);
        assert!(default_scale(&[1.0], 1).is_err());
        assert!(default_scale(&[1.0, 1.0, 1.0], 1).is_err());
    }
}
