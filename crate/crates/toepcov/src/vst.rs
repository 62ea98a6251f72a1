//! Binning and variance stabilization of squared DCT coefficients.
//!
//! Sums of m squared coefficients behave like Gamma(m/2, 2 f / m) variables,
//! so after dividing by the bin count, y = log(Q/m) / sqrt(2) has nearly
//! constant variance and mean H(f). The exact link and its inverse are
//! expressed through the digamma function.

use ndarray::Array2;

pub use crate::special::digamma;

use crate::error::{Error, Result};

/// Bin totals of squared coefficients, with the bookkeeping the later
/// regression steps need.
#[derive(Debug, Clone)]
pub struct BinnedSeries {
    /// Totals Q_1..Q_T (sums over n rows and the columns of each bin).
    pub totals: Vec<f64>,
    /// Observations per bin: m = n * floor(p / T).
    pub m: usize,
    /// Number of bins.
    pub t: usize,
    /// Trailing columns dropped because T does not divide p.
    pub discarded: usize,
}

/// Equispaced regression sample on [0, 1) produced by `mirror`.
#[derive(Debug, Clone)]
pub struct RegressionData {
    /// Design points k / N for k = 0..N.
    pub x: Vec<f64>,
    /// Responses at the design points.
    pub z: Vec<f64>,
}

impl RegressionData {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Sums the n x p matrix of squared coefficients into T equal-width column
/// bins of width floor(p / T), discarding any remainder columns at the top
/// end of the frequency range.
pub fn bin(w: &Array2<f64>, t: usize) -> Result<BinnedSeries> {
    let (n, p) = w.dim();
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument {
            name: "w",
            reason: "matrix must be nonempty".to_string(),
        });
    }
    if t < 2 || t > p {
        return Err(Error::InvalidArgument {
            name: "t",
            reason: format!("need 2 <= T <= p = {p}, got {t}"),
        });
    }
    let width = p / t;
    let mut totals = vec![0.0; t];
    for i in 0..n {
        let row = w.row(i);
        for (k, total) in totals.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in k * width..(k + 1) * width {
                s += row[j];
            }
            *total += s;
        }
    }
    Ok(BinnedSeries {
        totals,
        m: n * width,
        t,
        discarded: p - t * width,
    })
}

/// Variance-stabilized bin values y_k = log(Q_k / m) / sqrt(2).
/// Fails if any bin total is nonpositive (degenerate input data).
pub fn stabilize(b: &BinnedSeries) -> Result<Vec<f64>> {
    let m = b.m as f64;
    b.totals
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            if q > 0.0 {
                Ok((q / m).ln() / 2.0_f64.sqrt())
            } else {
                Err(Error::DegenerateData(format!(
                    "bin {} has nonpositive total {q}; the input rows carry no usable variance",
                    k + 1
                )))
            }
        })
        .collect()
}

/// Reflects the stabilized values of the T bins into a periodic sample of
/// size N = 2T - 2 on the design x_k = k / N: (y_1..y_T, y_{T-1}..y_2).
pub fn mirror(ystar: &[f64]) -> Result<RegressionData> {
    let t = ystar.len();
    if t < 2 {
        return Err(Error::InvalidArgument {
            name: "ystar",
            reason: format!("need at least 2 bins to mirror, got {t}"),
        });
    }
    let n = 2 * t - 2;
    let mut z = Vec::with_capacity(n);
    z.extend_from_slice(ystar);
    for k in (1..t - 1).rev() {
        z.push(ystar[k]);
    }
    let x = (0..n).map(|k| k as f64 / n as f64).collect();
    Ok(RegressionData { x, z })
}

/// Mean link H(y) = {digamma(m/2) + log(2y/m)} / sqrt(2) for y > 0.
pub fn h_transform(y: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument {
            name: "m",
            reason: "bin count must be positive".to_string(),
        });
    }
    if !(y > 0.0) {
        return Err(Error::InvalidArgument {
            name: "y",
            reason: format!("H is defined for positive arguments, got {y}"),
        });
    }
    let half_m = m as f64 / 2.0;
    Ok((digamma(half_m) + (2.0 * y / m as f64).ln()) / 2.0_f64.sqrt())
}

/// Inverse link H^{-1}(y) = m * exp(sqrt(2) * y - digamma(m/2)) / 2; always
/// strictly positive.
pub fn h_inverse(y: f64, m: usize) -> f64 {
    debug_assert!(m > 0);
    let half_m = m as f64 / 2.0;
    half_m * (2.0_f64.sqrt() * y - digamma(half_m)).exp()
}
