//! Benchmark processes with exact covariance references, samplers for
//! Gaussian and standardized non-Gaussian draws, error metrics, and the
//! Monte Carlo driver that compares estimators over replications.

use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, CvOptions, TaperNorm};
use crate::dct;
use crate::error::{Error, Result};
use crate::estimator::{
    self, estimate_spectral_density, BinSpec, EstimatorConfig, Selector,
};
use crate::fft::FftPair;
use crate::spline::{self, HGrid};
use crate::toeplitz::{difference_spectral_norm, CirculantOperator, ToeplitzMatrix};
use crate::vst::{self, h_inverse};
use crate::{derive_seed, SampleMatrix};

/// Trapezoid intervals used by the density error metric.
pub const DENSITY_ERROR_INTERVALS: usize = 4096;

/// Terms kept when the polynomial-decay covariances are summed into a
/// density value; the tail beyond this index is under 1e-10.
const POLY_DENSITY_TERMS: usize = 252;

const AR_PHI1: f64 = 0.1;
const AR_PHI2: f64 = -0.1;
const AR_INNOVATION_VARIANCE: f64 = 1.44;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Relative tolerance of the power iterations behind the error metric.
const METRIC_NORM_TOL: f64 = 1e-5;
const METRIC_NORM_MAX_ITER: usize = 2000;

/// Tolerances of the oracle taper selector's power iterations. The oracle
/// criterion has real curvature in the taper width, so these only need to
/// resolve well below the criterion's k-to-k differences.
const TAPER_NORM_TOL: f64 = 1e-8;
const TAPER_NORM_MAX_ITER: usize = 20_000;

/// Stationary benchmark processes with known covariances. All three share
/// a variance close to 1.44 and differ in the smoothness of their spectral
/// densities: polynomial covariance decay (very smooth density), a
/// second-order autoregression (analytic density), and a density with a
/// kink (Lipschitz but not differentiable).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Process {
    PolyDecay,
    Ar2,
    LipschitzSd,
}

impl Process {
    pub fn name(&self) -> &'static str {
        match self {
            Process::PolyDecay => "poly-decay",
            Process::Ar2 => "ar2",
            Process::LipschitzSd => "lipschitz-sd",
        }
    }

    /// True covariances sigma_0..sigma_{p-1}.
    pub fn covariance_row(&self, p: usize) -> Result<Vec<f64>> {
        if p == 0 {
            return Err(Error::InvalidArgument {
                name: "p",
                reason: "need at least one covariance lag".into(),
            });
        }
        match self {
            Process::PolyDecay => Ok((0..p)
                .map(|k| 1.44 * (1.0 + k as f64).powf(-5.1))
                .collect()),
            Process::Ar2 => {
                // Yule-Walker: rho_1 = phi_1 / (1 - phi_2), then the same
                // second-order recursion the process itself obeys.
                let rho1 = AR_PHI1 / (1.0 - AR_PHI2);
                let rho2 = AR_PHI1 * rho1 + AR_PHI2;
                let s0 =
                    AR_INNOVATION_VARIANCE / (1.0 - AR_PHI1 * rho1 - AR_PHI2 * rho2);
                let mut row = vec![0.0; p];
                row[0] = s0;
                if p > 1 {
                    row[1] = rho1 * s0;
                }
                for d in 2..p {
                    row[d] = AR_PHI1 * row[d - 1] + AR_PHI2 * row[d - 2];
                }
                Ok(row)
            }
            Process::LipschitzSd => {
                let me = *self;
                let sample = move |m: usize| -> Result<Vec<f64>> {
                    Ok((0..=m)
                        .map(|i| me.density_x(i as f64 / m as f64))
                        .collect())
                };
                let (row, report) =
                    estimator::cosine_quadrature(&sample, p, 1 << 14, 1e-10, 6)?;
                if !report.converged {
                    return Err(Error::NotConverged {
                        iterations: report.doublings,
                        last_estimate: report.sigma0_change,
                    });
                }
                Ok(row)
            }
        }
    }

    /// True covariance matrix of dimension p.
    pub fn covariance(&self, p: usize) -> Result<ToeplitzMatrix> {
        ToeplitzMatrix::new(self.covariance_row(p)?)
    }

    /// Spectral density at omega in [0, pi], in the convention
    /// f(w) = sigma_0 + 2 sum_{k>=1} sigma_k cos(k w).
    pub fn density(&self, omega: f64) -> f64 {
        match self {
            Process::PolyDecay => {
                let mut f = 1.44;
                for k in 1..=POLY_DENSITY_TERMS {
                    f += 2.0
                        * 1.44
                        * (1.0 + k as f64).powf(-5.1)
                        * (k as f64 * omega).cos();
                }
                f
            }
            Process::Ar2 => {
                let z = Complex::from_polar(1.0, -omega);
                let transfer = Complex::new(1.0, 0.0) - Complex::new(AR_PHI1, 0.0) * z
                    + Complex::new(-AR_PHI2, 0.0) * z * z;
                AR_INNOVATION_VARIANCE / transfer.norm_sqr()
            }
            Process::LipschitzSd => 1.44 * (omega.cos().abs().powf(1.7) + 0.45),
        }
    }

    /// The density on the unit design scale: f(pi x) for x in [0, 1].
    pub fn density_x(&self, x: f64) -> f64 {
        self.density(PI * x)
    }

    /// Subseries count used by the single-series taper selector, chosen per
    /// process from knowledge of the truth.
    pub fn subseries_count(&self) -> usize {
        match self {
            Process::PolyDecay => 30,
            Process::Ar2 | Process::LipschitzSd => 15,
        }
    }
}

/// Distribution of the standardized entries driving a sampler; every
/// variant has mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Innovation {
    #[default]
    Gaussian,
    Gamma,
    Uniform,
}

impl Innovation {
    pub fn name(&self) -> &'static str {
        match self {
            Innovation::Gaussian => "gaussian",
            Innovation::Gamma => "gamma",
            Innovation::Uniform => "uniform",
        }
    }

    /// One standardized draw.
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Innovation::Gaussian => rng.sample(StandardNormal),
            Innovation::Gamma => {
                // z + sqrt(2) is gamma with shape 2 and scale 1/sqrt(2):
                // the sum of two exponentials, inverted in closed form.
                // random() lies in [0, 1); flip it so the logs stay finite.
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = 1.0 - rng.random::<f64>();
                -(u1.ln() + u2.ln()) / SQRT_2 - SQRT_2
            }
            Innovation::Uniform => SQRT_3 * (2.0 * rng.random::<f64>() - 1.0),
        }
    }
}

/// Largest dimension at which an indefinite embedding falls back to dense
/// Gaussian sampling.
const GAUSSIAN_DENSE_LIMIT: usize = 2048;
/// Largest dimension sampled through the dense symmetric square root.
const STANDARDIZED_DENSE_LIMIT: usize = 4096;
/// Embedding eigenvalues above this relative floor are clipped to zero;
/// anything below makes the embedding unusable.
const EIG_CLIP_REL: f64 = 1e-10;

enum Root {
    /// Frequency-domain square root of the circulant embedding. Each
    /// complex draw yields two independent exact Gaussian rows.
    GaussianPair { lambda_sqrt: Vec<f64> },
    /// Real square root of the circulant embedding applied to standardized
    /// entries: the covariance is exact, the marginal law is a convolution
    /// of the innovation law.
    CirculantReal { lambda_sqrt: Vec<f64> },
    /// Dense symmetric square root of the p x p truth.
    Dense { root: DMatrix<f64> },
    /// The autoregressive recursion itself, run past a burn-in.
    Recursion { sd: f64 },
}

/// Draws sample matrices from a benchmark process. Construction does the
/// expensive factorization once; `sample` is cheap and deterministic in
/// the seed.
pub struct ProcessSampler {
    p: usize,
    innovation: Innovation,
    root: Root,
    clipped: usize,
}

fn embedding_sqrt(process: Process, p: usize) -> Result<(Vec<f64>, usize)> {
    let row = process.covariance_row(p)?;
    let op = CirculantOperator::new(&row);
    let lambda = op.embedding_eigenvalues();
    let max = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < -EIG_CLIP_REL * max {
        return Err(Error::IndefiniteEmbedding { min_eig: min, p });
    }
    let clipped = lambda.iter().filter(|&&l| l < 0.0).count();
    if clipped > 0 {
        eprintln!(
            "warning: clipped {clipped} marginally negative embedding eigenvalues \
             (worst {min:.3e})"
        );
    }
    Ok((
        lambda.iter().map(|&l| l.max(0.0).sqrt()).collect(),
        clipped,
    ))
}

fn dense_root(process: Process, p: usize) -> Result<DMatrix<f64>> {
    let dense = process.covariance(p)?.to_dense()?;
    let eig = dense.symmetric_eigen();
    // True covariances are positive definite; any negative eigenvalue here
    // is roundoff and clips to zero.
    let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose())
}

impl ProcessSampler {
    /// Exact Gaussian sampler: circulant embedding when the embedding is
    /// positive semidefinite, dense square root as a fallback for modest p.
    pub fn gaussian(process: Process, p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidArgument {
                name: "p",
                reason: format!("sampling needs p >= 2, got {p}"),
            });
        }
        match embedding_sqrt(process, p) {
            Ok((lambda_sqrt, clipped)) => Ok(ProcessSampler {
                p,
                innovation: Innovation::Gaussian,
                root: Root::GaussianPair { lambda_sqrt },
                clipped,
            }),
            Err(Error::IndefiniteEmbedding { .. }) if p <= GAUSSIAN_DENSE_LIMIT => {
                Ok(ProcessSampler {
                    p,
                    innovation: Innovation::Gaussian,
                    root: Root::Dense {
                        root: dense_root(process, p)?,
                    },
                    clipped: 0,
                })
            }
            Err(e) => Err(e),
        }
    }

    /// Sampler with standardized non-Gaussian entries pushed through a
    /// square root of the covariance: dense and exact in law up to the
    /// dense limit, circulant-root beyond it (exact covariance, near-exact
    /// shape).
    pub fn standardized(process: Process, p: usize, innovation: Innovation) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidArgument {
                name: "p",
                reason: format!("sampling needs p >= 2, got {p}"),
            });
        }
        if p <= STANDARDIZED_DENSE_LIMIT {
            Ok(ProcessSampler {
                p,
                innovation,
                root: Root::Dense {
                    root: dense_root(process, p)?,
                },
                clipped: 0,
            })
        } else {
            Self::standardized_via_root(process, p, innovation)
        }
    }

    /// Forces the circulant-root route regardless of size. The covariance
    /// of the rows is exactly the process covariance for any standardized
    /// innovation law.
    pub fn standardized_via_root(
        process: Process,
        p: usize,
        innovation: Innovation,
    ) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidArgument {
                name: "p",
                reason: format!("sampling needs p >= 2, got {p}"),
            });
        }
        let (lambda_sqrt, clipped) = embedding_sqrt(process, p)?;
        Ok(ProcessSampler {
            p,
            innovation,
            root: Root::CirculantReal { lambda_sqrt },
            clipped,
        })
    }

    /// The autoregressive process generated by its own recursion with a
    /// 10 sqrt(p) burn-in. Innovations are scaled to variance 1.44, so the
    /// stationary law matches the closed-form covariances.
    pub fn ar2_recursion(p: usize, innovation: Innovation) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidArgument {
                name: "p",
                reason: format!("sampling needs p >= 2, got {p}"),
            });
        }
        Ok(ProcessSampler {
            p,
            innovation,
            root: Root::Recursion {
                sd: AR_INNOVATION_VARIANCE.sqrt(),
            },
            clipped: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Embedding eigenvalues that were clipped to zero at construction.
    pub fn clipped_eigenvalues(&self) -> usize {
        self.clipped
    }

    /// Draws an n x p sample matrix. Identical (n, seed) pairs give
    /// identical matrices.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleMatrix> {
        if n == 0 {
            return Err(Error::InvalidArgument {
                name: "n",
                reason: "need at least one row".into(),
            });
        }
        let p = self.p;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = SampleMatrix::zeros((n, p));
        match &self.root {
            Root::GaussianPair { lambda_sqrt } => {
                let l = lambda_sqrt.len();
                let fft = FftPair::new(l);
                let scale = 1.0 / (l as f64).sqrt();
                let mut buf = vec![Complex::default(); l];
                let mut r = 0;
                while r < n {
                    for (b, &ls) in buf.iter_mut().zip(lambda_sqrt) {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        *b = Complex::new(re, im) * (ls * scale);
                    }
                    fft.forward(&mut buf);
                    for j in 0..p {
                        y[(r, j)] = buf[j].re;
                    }
                    if r + 1 < n {
                        for j in 0..p {
                            y[(r + 1, j)] = buf[j].im;
                        }
                    }
                    r += 2;
                }
            }
            Root::CirculantReal { lambda_sqrt } => {
                let l = lambda_sqrt.len();
                let fft = FftPair::new(l);
                let inv_l = 1.0 / l as f64;
                let mut buf = vec![Complex::default(); l];
                for r in 0..n {
                    for b in buf.iter_mut() {
                        *b = Complex::new(self.innovation.draw(&mut rng), 0.0);
                    }
                    fft.forward(&mut buf);
                    for (b, &ls) in buf.iter_mut().zip(lambda_sqrt) {
                        *b *= ls;
                    }
                    fft.inverse(&mut buf);
                    for j in 0..p {
                        y[(r, j)] = buf[j].re * inv_l;
                    }
                }
            }
            Root::Dense { root } => {
                for r in 0..n {
                    let z =
                        DVector::from_iterator(p, (0..p).map(|_| self.innovation.draw(&mut rng)));
                    let v = root * z;
                    for j in 0..p {
                        y[(r, j)] = v[j];
                    }
                }
            }
            Root::Recursion { sd } => {
                let burn = (10.0 * (p as f64).sqrt()).ceil() as usize;
                for r in 0..n {
                    let (mut y1, mut y2) = (0.0, 0.0);
                    for t in 0..burn + p {
                        let v = sd * self.innovation.draw(&mut rng) + AR_PHI1 * y1
                            + AR_PHI2 * y2;
                        if t >= burn {
                            y[(r, t - burn)] = v;
                        }
                        y2 = y1;
                        y1 = v;
                    }
                }
            }
        }
        Ok(y)
    }
}

/// One-shot exact Gaussian sample from a benchmark process.
pub fn sample_gaussian(process: Process, p: usize, n: usize, seed: u64) -> Result<SampleMatrix> {
    ProcessSampler::gaussian(process, p)?.sample(n, seed)
}

/// One-shot sample with standardized non-Gaussian entries.
pub fn sample_nongaussian(
    process: Process,
    p: usize,
    n: usize,
    seed: u64,
    innovation: Innovation,
) -> Result<SampleMatrix> {
    ProcessSampler::standardized(process, p, innovation)?.sample(n, seed)
}

/// Squared L2 distance of two density evaluators (arguments in [0, pi]),
/// integrated over the normalized axis: a trapezoid rule on
/// x = 0, 1/4096, ..., 1 of (f_hat(pi x) - f_true(pi x))^2.
pub fn l2_density_error(f_hat: &dyn Fn(f64) -> f64, f_true: &dyn Fn(f64) -> f64) -> f64 {
    let g = DENSITY_ERROR_INTERVALS;
    let fh: Vec<f64> = (0..=g).map(|i| f_hat(PI * i as f64 / g as f64)).collect();
    let ft: Vec<f64> = (0..=g).map(|i| f_true(PI * i as f64 / g as f64)).collect();
    l2_density_error_from_samples(&fh, &ft).expect("grids share a length")
}

/// The same metric from equally sized samples on a uniform grid over the
/// normalized axis, endpoints included.
pub fn l2_density_error_from_samples(f_hat: &[f64], f_true: &[f64]) -> Result<f64> {
    if f_hat.len() != f_true.len() {
        return Err(Error::DimensionMismatch {
            context: "l2_density_error_from_samples",
            expected: f_true.len(),
            actual: f_hat.len(),
        });
    }
    if f_hat.len() < 2 {
        return Err(Error::InvalidArgument {
            name: "f_hat",
            reason: "need at least two grid points".into(),
        });
    }
    let g = f_hat.len() - 1;
    let mut total = 0.0;
    for i in 0..=g {
        let d = f_hat[i] - f_true[i];
        let w = if i == 0 || i == g { 0.5 } else { 1.0 };
        total += w * d * d;
    }
    Ok(total / g as f64)
}

/// The estimators a Monte Carlo run can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Spectral pipeline, bandwidth by generalized cross-validation.
    SpectralGcv,
    /// Spectral pipeline, bandwidth by the likelihood criterion.
    SpectralMl,
    /// Spectral pipeline, bandwidth minimizing the true density error.
    SpectralOracle,
    /// Diagonal-averaged sample covariance, no regularization.
    Sample,
    /// Tapered sample covariance, width by cross-validation over rows.
    TaperCv,
    /// Tapered sample covariance, width by subseries cross-validation.
    TaperSubseries,
    /// Tapered sample covariance, width minimizing the true risk.
    TaperOracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::SpectralGcv => "spectral-gcv",
            Method::SpectralMl => "spectral-ml",
            Method::SpectralOracle => "spectral-oracle",
            Method::Sample => "sample",
            Method::TaperCv => "taper-cv",
            Method::TaperSubseries => "taper-subseries",
            Method::TaperOracle => "taper-oracle",
        }
    }

    pub fn all() -> [Method; 7] {
        [
            Method::SpectralGcv,
            Method::SpectralMl,
            Method::SpectralOracle,
            Method::Sample,
            Method::TaperCv,
            Method::TaperSubseries,
            Method::TaperOracle,
        ]
    }
}

fn default_cv_splits() -> usize {
    30
}

/// A declarative Monte Carlo configuration, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Free-form name echoed into reports.
    #[serde(default)]
    pub label: String,
    pub process: Process,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub innovation: Innovation,
    /// Methods to run when the caller does not override them.
    #[serde(default)]
    pub methods: Vec<Method>,
    /// Explicit bin count for the spectral pipeline; absent means the
    /// automatic p-based rule.
    #[serde(default)]
    pub bins: Option<usize>,
    /// Subseries count for the single-series taper selector; absent means
    /// the per-process preset.
    #[serde(default)]
    pub subseries: Option<usize>,
    #[serde(default = "default_cv_splits")]
    pub cv_splits: usize,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::Scenario(reason));
        if self.reps < 1 {
            return fail("reps must be at least 1".into());
        }
        if self.n < 1 {
            return fail("n must be at least 1".into());
        }
        if self.p < 8 {
            return fail(format!("p must be at least 8, got {}", self.p));
        }
        if self.cv_splits < 1 {
            return fail("cv_splits must be at least 1".into());
        }
        if let Some(b) = self.bins {
            if b < 2 || b > self.p {
                return fail(format!(
                    "bins must lie in [2, p] = [2, {}], got {b}",
                    self.p
                ));
            }
        }
        if let Some(l) = self.subseries {
            if l < 3 {
                return fail(format!("subseries must be at least 3, got {l}"));
            }
        }
        Ok(())
    }
}

/// Per-replication, per-method outcome. Failed methods carry the error
/// text instead of metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: String,
    /// 100 x squared spectral norm of (estimate - truth).
    pub spectral_sq_x100: Option<f64>,
    /// 100 x squared L2 density error on the normalized axis.
    pub l2_sq_x100: Option<f64>,
    /// Wall-clock estimation time, excluding the error metrics.
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregate of one method over all replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub spectral_sq_x100_mean: Option<f64>,
    pub spectral_sq_x100_sd: Option<f64>,
    pub l2_sq_x100_mean: Option<f64>,
    pub l2_sq_x100_sd: Option<f64>,
    /// Mean wall-clock seconds over successful replications.
    pub mean_seconds: f64,
    pub reps_used: usize,
    pub reps_failed: usize,
}

/// Results of one Monte Carlo run: per-method summaries plus the raw
/// per-replication records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub label: String,
    pub process: Process,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub innovation: Innovation,
    pub methods: Vec<MethodSummary>,
    pub per_rep: Vec<RepRecord>,
}

fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.remove("seconds");
            map.remove("mean_seconds");
            for child in map.values_mut() {
                strip_timing(child);
            }
        }
        serde_json::Value::Array(items) => {
            for child in items {
                strip_timing(child);
            }
        }
        _ => {}
    }
}

impl McReport {
    /// Full report as pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// JSON with every wall-clock field removed: identical runs produce
    /// byte-identical output regardless of thread count or machine load.
    pub fn reproducible_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serialization cannot fail");
        strip_timing(&mut v);
        serde_json::to_string_pretty(&v).expect("report serialization cannot fail")
    }

    /// Summary table as CSV, one row per method: both error metrics
    /// (already multiplied by 100) with their standard deviations, then
    /// timing and replication counts. Missing aggregates are left empty.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from(
            "method,spectral_sq_x100_mean,spectral_sq_x100_sd,\
             l2_sq_x100_mean,l2_sq_x100_sd,mean_seconds,reps_used,reps_failed\n",
        );
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{},{}\n",
                m.method,
                fmt(m.spectral_sq_x100_mean),
                fmt(m.spectral_sq_x100_sd),
                fmt(m.l2_sq_x100_mean),
                fmt(m.l2_sq_x100_sd),
                m.mean_seconds,
                m.reps_used,
                m.reps_failed,
            ));
        }
        out
    }
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (Some(mean), Some((ss / (n - 1.0)).sqrt()))
}

fn summarize(method: Method, records: &[RepRecord]) -> MethodSummary {
    let mine: Vec<&RepRecord> = records.iter().filter(|r| r.method == method.name()).collect();
    let ok: Vec<&&RepRecord> = mine.iter().filter(|r| r.error.is_none()).collect();
    let spectral: Vec<f64> = ok.iter().filter_map(|r| r.spectral_sq_x100).collect();
    let l2: Vec<f64> = ok.iter().filter_map(|r| r.l2_sq_x100).collect();
    let (s_mean, s_sd) = mean_sd(&spectral);
    let (l_mean, l_sd) = mean_sd(&l2);
    let mean_seconds = if ok.is_empty() {
        0.0
    } else {
        ok.iter().map(|r| r.seconds).sum::<f64>() / ok.len() as f64
    };
    MethodSummary {
        method: method.name().to_string(),
        spectral_sq_x100_mean: s_mean,
        spectral_sq_x100_sd: s_sd,
        l2_sq_x100_mean: l_mean,
        l2_sq_x100_sd: l_sd,
        mean_seconds,
        reps_used: ok.len(),
        reps_failed: mine.len() - ok.len(),
    }
}

/// Spectral norm of the difference, falling back to the final power
/// iterate when the iteration stalls short of tolerance; that estimate is
/// a tight lower bound and fine for a summary statistic.
fn norm_of_difference(a: &ToeplitzMatrix, b: &ToeplitzMatrix) -> Result<f64> {
    match difference_spectral_norm(a, b, METRIC_NORM_TOL, METRIC_NORM_MAX_ITER) {
        Ok(v) => Ok(v),
        Err(Error::NotConverged { last_estimate, .. }) if last_estimate > 0.0 => {
            Ok(last_estimate)
        }
        Err(e) => Err(e),
    }
}

fn bins_spec(scenario: &ScenarioSpec) -> BinSpec {
    scenario.bins.map(BinSpec::Count).unwrap_or(BinSpec::Auto)
}

fn spectral_estimate(
    y: &SampleMatrix,
    scenario: &ScenarioSpec,
    selector: Selector,
) -> Result<(ToeplitzMatrix, Vec<f64>)> {
    let config = EstimatorConfig {
        bins: bins_spec(scenario),
        selector,
        ..EstimatorConfig::default()
    };
    let est = estimate_spectral_density(y, &config)?;
    Ok((
        est.covariance()?,
        est.density_samples(DENSITY_ERROR_INTERVALS)?,
    ))
}

/// Runs the spectral pipeline with the bandwidth that minimizes the true
/// density error, scanning the standard grid and zooming once around the
/// coarse winner.
fn oracle_spectral_estimate(
    y: &SampleMatrix,
    scenario: &ScenarioSpec,
    truth_density: &[f64],
) -> Result<(ToeplitzMatrix, Vec<f64>)> {
    let w = dct::transform_sample(y)?;
    let p = w.dim().1;
    let t = estimator::resolve_bins(bins_spec(scenario), p, 0.73)?;
    let binned = vst::bin(&w, t)?;
    let m = binned.m;
    let ystar = vst::stabilize(&binned)?;
    let data = vst::mirror(&ystar)?;
    let g = DENSITY_ERROR_INTERVALS;

    let score = |h: f64| -> Result<f64> {
        let fit = spline::fit(&data, h, 2)?;
        let fhat: Vec<f64> = if 2 * g >= fit.design_len() {
            let mut dense = fit.sample_dense(2 * g)?;
            dense.truncate(g + 1);
            dense.into_iter().map(|v| h_inverse(v, m)).collect()
        } else {
            (0..=g)
                .map(|i| h_inverse(fit.evaluate(i as f64 / (2 * g) as f64), m))
                .collect()
        };
        l2_density_error_from_samples(&fhat, truth_density)
    };

    let grid = HGrid::default().values()?;
    let mut best = (grid[0], score(grid[0])?);
    for &h in &grid[1..] {
        let s = score(h)?;
        if s < best.1 {
            best = (h, s);
        }
    }
    let idx = grid.iter().position(|&h| h == best.0).unwrap_or(0);
    let lo = grid[idx.saturating_sub(1)];
    let hi = grid[(idx + 1).min(grid.len() - 1)];
    if hi > lo {
        let (llo, lhi) = (lo.ln(), hi.ln());
        for i in 0..=24 {
            let h = (llo + (lhi - llo) * i as f64 / 24.0).exp();
            let s = score(h)?;
            if s < best.1 {
                best = (h, s);
            }
        }
    }

    let config = EstimatorConfig {
        bins: bins_spec(scenario),
        selector: Selector::Fixed(best.0),
        ..EstimatorConfig::default()
    };
    let est = estimate_spectral_density(y, &config)?;
    Ok((est.covariance()?, est.density_samples(g)?))
}

// The validation criterion is nearly flat in the taper width at these
// sample sizes: its k-to-k differences sit orders of magnitude below any
// practical power-iteration tolerance, which turns a spectral-norm argmin
// into noise. The exact l1 norm keeps the argmin meaningful and is far
// cheaper.
fn cv_options(scenario: &ScenarioSpec, cv_seed: u64) -> CvOptions {
    CvOptions {
        splits: scenario.cv_splits,
        seed: cv_seed,
        norm: TaperNorm::L1,
        ..CvOptions::default()
    }
}

fn run_method(
    method: Method,
    y: &SampleMatrix,
    scenario: &ScenarioSpec,
    truth: &ToeplitzMatrix,
    truth_density: &[f64],
    cv_seed: u64,
) -> Result<(ToeplitzMatrix, Vec<f64>)> {
    let grid = DENSITY_ERROR_INTERVALS;
    match method {
        Method::SpectralGcv => spectral_estimate(y, scenario, Selector::Gcv),
        Method::SpectralMl => spectral_estimate(y, scenario, Selector::Gml),
        Method::SpectralOracle => oracle_spectral_estimate(y, scenario, truth_density),
        Method::Sample => {
            let t = baselines::sample_toeplitz(y)?;
            let density = t.density_grid(grid);
            Ok((t, density))
        }
        Method::TaperCv => {
            let sel = baselines::cv_select_taper(y, &cv_options(scenario, cv_seed))?;
            let density = sel.estimate.density_grid(grid);
            Ok((sel.estimate, density))
        }
        Method::TaperSubseries => {
            let l = scenario
                .subseries
                .unwrap_or_else(|| scenario.process.subseries_count());
            let sel =
                baselines::subseries_cv_select_taper(y, l, &cv_options(scenario, cv_seed))?;
            let density = sel.estimate.density_grid(grid);
            Ok((sel.estimate, density))
        }
        Method::TaperOracle => {
            let sel =
                baselines::oracle_taper(y, truth, None, TAPER_NORM_TOL, TAPER_NORM_MAX_ITER)?;
            let density = sel.estimate.density_grid(grid);
            Ok((sel.estimate, density))
        }
    }
}

fn run_rep(
    scenario: &ScenarioSpec,
    methods: &[Method],
    sampler: &ProcessSampler,
    truth: &ToeplitzMatrix,
    truth_density: &[f64],
    rep: usize,
) -> Result<Vec<RepRecord>> {
    let rep_seed = derive_seed(scenario.seed, rep as u64);
    let y = sampler.sample(scenario.n, derive_seed(rep_seed, 0))?;
    let cv_seed = derive_seed(rep_seed, 1);
    let mut records = Vec::with_capacity(methods.len());
    for &method in methods {
        let started = Instant::now();
        let outcome = run_method(method, &y, scenario, truth, truth_density, cv_seed);
        let seconds = started.elapsed().as_secs_f64();
        records.push(match outcome {
            Ok((estimate, density)) => {
                let norm = norm_of_difference(&estimate, truth)?;
                let l2 = l2_density_error_from_samples(&density, truth_density)?;
                RepRecord {
                    rep,
                    method: method.name().to_string(),
                    spectral_sq_x100: Some(100.0 * norm * norm),
                    l2_sq_x100: Some(100.0 * l2),
                    seconds,
                    error: None,
                }
            }
            Err(e) => RepRecord {
                rep,
                method: method.name().to_string(),
                spectral_sq_x100: None,
                l2_sq_x100: None,
                seconds,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(records)
}

/// Runs every method on every replication of the scenario and aggregates
/// the error metrics. `methods` overrides the scenario's own list when
/// nonempty. `threads` bounds the worker pool (`None` uses the default);
/// the numeric results are identical for every thread count because each
/// replication derives its own seeds.
pub fn run_monte_carlo(
    scenario: &ScenarioSpec,
    methods: &[Method],
    threads: Option<usize>,
) -> Result<McReport> {
    scenario.validate()?;
    let methods: Vec<Method> = if methods.is_empty() {
        scenario.methods.clone()
    } else {
        methods.to_vec()
    };
    if methods.is_empty() {
        return Err(Error::InvalidArgument {
            name: "methods",
            reason: "need at least one method to run".into(),
        });
    }
    if methods.contains(&Method::TaperCv) && scenario.n < 3 {
        return Err(Error::InvalidArgument {
            name: "methods",
            reason: format!(
                "cross-validated tapering needs n >= 3 rows to split, got {}",
                scenario.n
            ),
        });
    }

    let truth = scenario.process.covariance(scenario.p)?;
    let g = DENSITY_ERROR_INTERVALS;
    let truth_density: Vec<f64> = (0..=g)
        .map(|i| scenario.process.density_x(i as f64 / g as f64))
        .collect();
    let sampler = match scenario.innovation {
        Innovation::Gaussian => ProcessSampler::gaussian(scenario.process, scenario.p)?,
        other => ProcessSampler::standardized(scenario.process, scenario.p, other)?,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument {
            name: "threads",
            reason: e.to_string(),
        })?;
    let nested: Vec<Vec<RepRecord>> = pool.install(|| {
        (0..scenario.reps)
            .into_par_iter()
            .map(|rep| run_rep(scenario, &methods, &sampler, &truth, &truth_density, rep))
            .collect::<Result<Vec<_>>>()
    })?;
    let per_rep: Vec<RepRecord> = nested.into_iter().flatten().collect();
    let summaries = methods.iter().map(|&m| summarize(m, &per_rep)).collect();

    Ok(McReport {
        label: scenario.label.clone(),
        process: scenario.process,
        p: scenario.p,
        n: scenario.n,
        reps: scenario.reps,
        seed: scenario.seed,
        innovation: scenario.innovation,
        methods: summaries,
        per_rep,
    })
}
