//! Estimation of large Toeplitz covariance and precision matrices from one
//! or more stationary series.
//!
//! The central estimator works in the frequency domain: an orthonormal
//! cosine transform takes each observed series to near-independent
//! components whose squared values have mean close to the spectral density
//! at grid frequencies. Binning, a log-domain variance-stabilizing
//! transform, and a periodic smoothing spline produce a density estimate,
//! and numerical quadrature of its cosine coefficients yields a positive
//! definite Toeplitz covariance matrix. Inverting the density before
//! quadrature gives a matching precision matrix without any p x p solve.
//!
//! The crate also ships the classical benchmarks (sample covariances and
//! tapered estimators with cross-validated, subseries, or oracle width
//! selection), synthetic processes with exact covariances for calibration,
//! and a Monte Carlo driver that compares methods over replicated draws.
//!
//! ```
//! use toepcov::{estimate_covariance, EstimatorConfig, SampleMatrix};
//!
//! // Two independent rows of white noise, p = 64.
//! let y = SampleMatrix::from_shape_fn((2, 64), |(i, j)| {
//!     let t = (i * 64 + j) as f64;
//!     (t * 12.9898).sin() * 43758.5453 % 1.0
//! });
//! let (sigma, est) = estimate_covariance(&y, &EstimatorConfig::default()).unwrap();
//! assert_eq!(sigma.dim(), 64);
//! assert!(est.quadrature().converged);
//! ```

pub mod baselines;
pub mod dct;
mod error;
pub mod estimator;
mod fft;
pub mod io;
pub mod simulation;
mod special;
pub mod spline;
pub mod toeplitz;
pub mod vst;

pub use error::{Error, Result};
pub use estimator::{
    estimate_covariance, estimate_precision, estimate_spectral_density, BinSpec, EstimatorConfig,
    QuadratureReport, Selector, SpectralDensityEstimate,
};
pub use toeplitz::ToeplitzMatrix;

/// Sample matrices are dense row-major arrays, one series per row.
pub type SampleMatrix = ndarray::Array2<f64>;

/// Derives an independent stream seed from a master seed, so that parallel
/// replications and nested randomized procedures never share state. Uses
/// the splitmix64 finalizer, which maps distinct inputs to well-spread
/// outputs.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
