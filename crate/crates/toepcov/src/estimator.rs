//! The full covariance estimation pipeline: orthogonal cosine transform,
//! binning, variance stabilization, periodic spline smoothing, and cosine
//! quadrature back to a Toeplitz matrix.
//!
//! The chain estimates the spectral density f of a stationary sequence from
//! n independent rows of length p, then recovers covariances
//! sigma_k = int_0^1 f(pi u) cos(k pi u) du. Smoothing happens on the
//! stabilized scale: binned transform energies Q_i have approximately
//! constant variance after Y_i = ln(Q_i / m) / sqrt(2), and the spline
//! estimate of E[Y] is mapped back through the inverse link.

use ndarray::Array2;

use crate::dct;
use crate::error::{Error, Result};
use crate::fft::cosine_sums;
use crate::special::normal_quantile;
use crate::spline::{self, HGrid, SplineFit};
use crate::toeplitz::ToeplitzMatrix;
use crate::vst::{self, h_inverse};
use crate::SampleMatrix;

/// How many bins to aggregate the p transform energies into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinSpec {
    /// p^0.73 bins, or p^0.85 when the config flags slow covariance decay.
    Auto,
    /// Exactly this many bins.
    Count(usize),
    /// Floor of p raised to this exponent.
    Exponent(f64),
}

/// Bandwidth choice for the smoothing step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    Gcv,
    Gml,
    Fixed(f64),
}

impl Selector {
    pub fn name(&self) -> &'static str {
        match self {
            Selector::Gcv => "gcv",
            Selector::Gml => "gml",
            Selector::Fixed(_) => "fixed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub bins: BinSpec,
    pub selector: Selector,
    /// Penalty order q of the smoothing spline.
    pub order: usize,
    /// Known or suspected smoothness of the density; guides the automatic
    /// bin exponent (values below 1 push it toward p^0.85).
    pub smoothness_hint: Option<f64>,
    /// Widens the automatic bin count to p^0.85 for densities with sharp
    /// peaks or slowly decaying covariances; a smoothness hint takes
    /// precedence when both are given.
    pub long_memory: bool,
    pub h_grid: HGrid,
    /// Number of quadrature subintervals; must be a power of two, at least
    /// 2p. `None` picks the smallest power of two >= 4p.
    pub eval_grid: Option<usize>,
    /// Quadrature refinement stops once sigma_0 moves less than this
    /// between grid doublings.
    pub quadrature_tol: f64,
    pub max_doublings: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            bins: BinSpec::Auto,
            selector: Selector::Gcv,
            order: 2,
            smoothness_hint: None,
            long_memory: false,
            h_grid: HGrid::default(),
            eval_grid: None,
            quadrature_tol: 1e-8,
            max_doublings: 3,
        }
    }
}

impl EstimatorConfig {
    /// The automatic bin exponent: p^0.73 for smooth densities (hint >= 1,
    /// or no hint and no long-memory flag), p^0.85 otherwise.
    fn auto_exponent(&self) -> f64 {
        let smooth = match self.smoothness_hint {
            Some(beta) => beta >= 1.0,
            None => !self.long_memory,
        };
        if smooth {
            0.73
        } else {
            0.85
        }
    }

    fn initial_intervals(&self, p: usize) -> Result<usize> {
        match self.eval_grid {
            None => Ok((4 * p).next_power_of_two()),
            Some(m) => {
                if !m.is_power_of_two() || m < 2 * p {
                    return Err(Error::InvalidArgument {
                        name: "eval_grid",
                        reason: format!(
                            "quadrature grid must be a power of two >= 2p = {}, got {m}",
                            2 * p
                        ),
                    });
                }
                Ok(m)
            }
        }
    }
}

/// Convergence record for the adaptive cosine quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureReport {
    /// Final number of subintervals of [0, 1].
    pub intervals: usize,
    /// |change in sigma_0| at the last doubling.
    pub sigma0_change: f64,
    pub doublings: usize,
    /// False when the tolerance was still unmet after `max_doublings`.
    pub converged: bool,
}

/// A fitted spectral density together with everything needed to reconstruct
/// covariance and precision matrices from it.
#[derive(Debug, Clone)]
pub struct SpectralDensityEstimate {
    spline: SplineFit,
    /// Stabilized bin values at the design points, before mirroring.
    ystar: Vec<f64>,
    p: usize,
    n: usize,
    bins: usize,
    bin_width: usize,
    discarded: usize,
    /// Energies summed per bin: n * bin_width.
    m: usize,
    selector: &'static str,
    sigma: Vec<f64>,
    quadrature: QuadratureReport,
    quadrature_tol: f64,
    max_doublings: usize,
}

impl SpectralDensityEstimate {
    /// Series length of the input rows.
    pub fn dim(&self) -> usize {
        self.p
    }

    /// Number of input rows.
    pub fn sample_count(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin_width(&self) -> usize {
        self.bin_width
    }

    /// Transform indices dropped because p is not a multiple of the bin count.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Energies aggregated per bin.
    pub fn aggregation(&self) -> usize {
        self.m
    }

    pub fn bandwidth(&self) -> f64 {
        self.spline.bandwidth()
    }

    pub fn order(&self) -> usize {
        self.spline.order()
    }

    pub fn edf(&self) -> f64 {
        self.spline.edf()
    }

    pub fn selector(&self) -> &'static str {
        self.selector
    }

    pub fn spline(&self) -> &SplineFit {
        &self.spline
    }

    pub fn quadrature(&self) -> &QuadratureReport {
        &self.quadrature
    }

    /// Estimated density at angular frequency omega (the natural argument
    /// range is [0, pi]; the fit extends evenly and 2 pi-periodically).
    pub fn density(&self, omega: f64) -> f64 {
        self.density_x(omega / std::f64::consts::PI)
    }

    /// Estimated density at pi * x, x in [0, 1].
    pub fn density_x(&self, x: f64) -> f64 {
        h_inverse(self.spline.evaluate(x / 2.0), self.m)
    }

    /// Density values at pi * i / intervals for i = 0..=intervals.
    pub fn density_samples(&self, intervals: usize) -> Result<Vec<f64>> {
        if intervals == 0 {
            return Err(Error::InvalidArgument {
                name: "intervals",
                reason: "density sampling needs at least one interval".into(),
            });
        }
        // The dense path needs 2 * intervals >= N; coarser grids fall back
        // to direct evaluation.
        if 2 * intervals >= self.spline.design_len() {
            let mut dense = self.spline.sample_dense(2 * intervals)?;
            dense.truncate(intervals + 1);
            Ok(dense.into_iter().map(|v| h_inverse(v, self.m)).collect())
        } else {
            Ok((0..=intervals)
                .map(|i| self.density_x(i as f64 / intervals as f64))
                .collect())
        }
    }

    /// Estimated covariances sigma_0..sigma_{p-1}.
    pub fn cosine_coefficients(&self) -> &[f64] {
        &self.sigma
    }

    /// The estimated p x p Toeplitz covariance matrix.
    pub fn covariance(&self) -> Result<ToeplitzMatrix> {
        ToeplitzMatrix::new(self.sigma.clone())
    }

    /// Toeplitz approximation to the inverse covariance: the cosine
    /// coefficients of 1 / f, scaled by the density convention factor.
    pub fn precision(&self) -> Result<(ToeplitzMatrix, QuadratureReport)> {
        let m = self.m;
        let spline = self.spline.clone();
        let sampler = move |intervals: usize| -> Result<Vec<f64>> {
            let mut dense = spline.sample_dense(2 * intervals)?;
            dense.truncate(intervals + 1);
            Ok(dense
                .into_iter()
                .map(|v| 1.0 / h_inverse(v, m))
                .collect())
        };
        let (row, report) = cosine_quadrature(
            &sampler,
            self.p,
            4 * self.p,
            self.quadrature_tol,
            self.max_doublings,
        )?;
        // The inverse density 1 / f expands in the same cosine-coefficient
        // convention as f itself, so the quadrature output is the first row
        // of the precision approximation with no rescaling.
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData(
                "inverse density quadrature produced a non-finite value".into(),
            ));
        }
        let t = ToeplitzMatrix::new(row)?;
        Ok((t, report))
    }

    /// Quantile pairs (theoretical, standardized residual) for checking the
    /// stabilized values against the Gaussian reference, sorted ascending.
    pub fn qq_data(&self) -> Vec<(f64, f64)> {
        let fitted = &self.spline.fitted()[..self.ystar.len()];
        let mut resid: Vec<f64> = self
            .ystar
            .iter()
            .zip(fitted)
            .map(|(y, f)| y - f)
            .collect();
        let n = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / n;
        let var = resid.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        let sd = var.sqrt().max(f64::MIN_POSITIVE);
        for r in resid.iter_mut() {
            *r = (*r - mean) / sd;
        }
        resid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        resid
            .into_iter()
            .enumerate()
            .map(|(i, r)| (normal_quantile((i as f64 + 0.5) / n), r))
            .collect()
    }
}

pub(crate) fn resolve_bins(spec: BinSpec, p: usize, auto_exponent: f64) -> Result<usize> {
    let from_exponent = |e: f64| -> Result<usize> {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::InvalidArgument {
                name: "bins",
                reason: format!("bin exponent must lie in (0, 1), got {e}"),
            });
        }
        let t = (p as f64).powf(e).floor() as usize;
        Ok(t.clamp(2, p))
    };
    match spec {
        BinSpec::Auto => from_exponent(auto_exponent),
        BinSpec::Exponent(e) => from_exponent(e),
        BinSpec::Count(t) => {
            if t < 2 || t > p {
                return Err(Error::InvalidArgument {
                    name: "bins",
                    reason: format!("bin count must lie in [2, p] = [2, {p}], got {t}"),
                });
            }
            Ok(t)
        }
    }
}

/// Adaptive trapezoid-grid cosine quadrature. `sample(M)` must return the
/// integrand at i / M for i = 0..=M; the result is out_len coefficients
/// c_k = int_0^1 g(u) cos(k pi u) du, refined by doubling M until c_0
/// changes by less than tol.
pub(crate) fn cosine_quadrature(
    sample: &dyn Fn(usize) -> Result<Vec<f64>>,
    out_len: usize,
    initial_intervals: usize,
    tol: f64,
    max_doublings: usize,
) -> Result<(Vec<f64>, QuadratureReport)> {
    let mut m = initial_intervals
        .max(out_len)
        .max(2)
        .next_power_of_two();
    let coeffs_at = |m: usize| -> Result<Vec<f64>> {
        let g = sample(m)?;
        if g.len() != m + 1 {
            return Err(Error::DimensionMismatch {
                context: "cosine_quadrature sample",
                expected: m + 1,
                actual: g.len(),
            });
        }
        let sums = cosine_sums(&g, out_len);
        Ok(sums.into_iter().map(|s| s / (2.0 * m as f64)).collect())
    };
    let mut current = coeffs_at(m)?;
    let mut doublings = 0;
    let mut change = f64::INFINITY;
    while doublings < max_doublings {
        let refined = coeffs_at(2 * m)?;
        change = (refined[0] - current[0]).abs();
        m *= 2;
        current = refined;
        doublings += 1;
        if change < tol {
            break;
        }
    }
    let converged = change < tol;
    Ok((
        current,
        QuadratureReport {
            intervals: m,
            sigma0_change: change,
            doublings,
            converged,
        },
    ))
}

/// Runs the whole pipeline on an n x p sample matrix.
pub fn estimate_spectral_density(
    y: &SampleMatrix,
    config: &EstimatorConfig,
) -> Result<SpectralDensityEstimate> {
    let w = dct::transform_sample(y)?;
    estimate_from_energies(&w, config)
}

/// The pipeline from the squared-transform stage onward; `w` holds the
/// per-row squared cosine-transform coefficients.
pub fn estimate_from_energies(
    w: &Array2<f64>,
    config: &EstimatorConfig,
) -> Result<SpectralDensityEstimate> {
    let (n, p) = w.dim();
    if p < 8 {
        return Err(Error::InvalidArgument {
            name: "p",
            reason: format!("estimation needs series of length at least 8, got {p}"),
        });
    }
    let initial_intervals = config.initial_intervals(p)?;
    let t = resolve_bins(config.bins, p, config.auto_exponent())?;
    let binned = vst::bin(w, t)?;
    let m = binned.m;
    let discarded = binned.discarded;
    let width = binned.m / n;
    let ystar = vst::stabilize(&binned)?;
    let data = vst::mirror(&ystar)?;

    let (fit, selector) = match config.selector {
        Selector::Gcv => {
            let r = spline::gcv_select(&data, config.order, &config.h_grid)?;
            (r.fit, "gcv")
        }
        Selector::Gml => {
            let r = spline::ml_select(&data, config.order, &config.h_grid)?;
            (r.fit, "gml")
        }
        Selector::Fixed(h) => (spline::fit(&data, h, config.order)?, "fixed"),
    };

    let spline_for_sampling = fit.clone();
    let sampler = move |intervals: usize| -> Result<Vec<f64>> {
        let mut dense = spline_for_sampling.sample_dense(2 * intervals)?;
        dense.truncate(intervals + 1);
        Ok(dense.into_iter().map(|v| h_inverse(v, m)).collect())
    };
    let (sigma, quadrature) = cosine_quadrature(
        &sampler,
        p,
        initial_intervals,
        config.quadrature_tol,
        config.max_doublings,
    )?;

    Ok(SpectralDensityEstimate {
        spline: fit,
        ystar,
        p,
        n,
        bins: t,
        bin_width: width,
        discarded,
        m,
        selector,
        sigma,
        quadrature,
        quadrature_tol: config.quadrature_tol,
        max_doublings: config.max_doublings,
    })
}

/// One-call covariance estimate: the full pipeline followed by the
/// Toeplitz reconstruction.
pub fn estimate_covariance(
    y: &SampleMatrix,
    config: &EstimatorConfig,
) -> Result<(ToeplitzMatrix, SpectralDensityEstimate)> {
    let est = estimate_spectral_density(y, config)?;
    let t = est.covariance()?;
    Ok((t, est))
}

/// One-call precision estimate: the full pipeline followed by inverse
/// density quadrature.
pub fn estimate_precision(
    y: &SampleMatrix,
    config: &EstimatorConfig,
) -> Result<(ToeplitzMatrix, SpectralDensityEstimate)> {
    let est = estimate_spectral_density(y, config)?;
    let (t, _) = est.precision()?;
    Ok((t, est))
}

/// Negative log likelihood of the sample under density f, evaluated in the
/// cosine-transform domain: sum over rows and ordinates of
/// ln f(pi x_j) + W_j / f(pi x_j) with x_j = j / (p - 1), j = 0..p.
pub fn dct_whittle_nll(density_x: &dyn Fn(f64) -> f64, y: &SampleMatrix) -> Result<f64> {
    let w = dct::transform_sample(y)?;
    let p = w.dim().1;
    let mut nll = 0.0;
    for row in w.rows() {
        for (j, &wj) in row.iter().enumerate() {
            let f = density_x(j as f64 / (p as f64 - 1.0));
            if !(f > 0.0) {
                return Err(Error::DegenerateData(format!(
                    "density is not positive at ordinate {j}"
                )));
            }
            nll += f.ln() + wj / f;
        }
    }
    Ok(nll)
}

/// Classical frequency-domain negative log likelihood from the periodogram:
/// ordinates I_j = |sum_k y_k e^{-2 pi i j k / p}|^2 / p for
/// j = 1..=floor((p - 1) / 2), density evaluated at 2 pi j / p.
pub fn classical_whittle_nll(density_x: &dyn Fn(f64) -> f64, y: &SampleMatrix) -> Result<f64> {
    use rustfft::num_complex::Complex;

    let (n, p) = y.dim();
    if n == 0 || p < 3 {
        return Err(Error::InvalidArgument {
            name: "y",
            reason: format!("periodogram needs p >= 3 and at least one row, got {n} x {p}"),
        });
    }
    let pair = crate::fft::FftPair::new(p);
    let top = (p - 1) / 2;
    let mut nll = 0.0;
    let mut buf = vec![Complex::default(); p];
    for row in y.rows() {
        for (b, &v) in buf.iter_mut().zip(row.iter()) {
            *b = Complex::new(v, 0.0);
        }
        pair.forward(&mut buf);
        for j in 1..=top {
            let i_j = buf[j].norm_sqr() / p as f64;
            let f = density_x(2.0 * j as f64 / p as f64);
            if !(f > 0.0) {
                return Err(Error::DegenerateData(format!(
                    "density is not positive at ordinate {j}"
                )));
            }
            nll += f.ln() + i_j / f;
        }
    }
    Ok(nll)
}
