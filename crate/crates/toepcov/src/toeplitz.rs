//! Symmetric Toeplitz matrices represented by their first row, with
//! matrix-vector products and spectral norms computed through a circulant
//! embedding so no dense matrix is ever materialized.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::{cosine_series_grid, FftPair};

/// Largest dimension accepted by the dense O(p^3) paths.
pub const DENSE_LIMIT: usize = 4096;

/// A symmetric Toeplitz matrix sigma_{ij} = r_{|i-j|}, stored as its first row.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzMatrix {
    first_row: Vec<f64>,
}

impl ToeplitzMatrix {
    /// Validates and wraps a first row. The row must be nonempty and finite.
    pub fn new(first_row: Vec<f64>) -> Result<Self> {
        if first_row.is_empty() {
            return Err(Error::InvalidArgument {
                name: "first_row",
                reason: "must be nonempty".to_string(),
            });
        }
        if let Some(ix) = first_row.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "first_row",
                reason: format!("entry {ix} is not finite"),
            });
        }
        Ok(ToeplitzMatrix { first_row })
    }

    pub fn dim(&self) -> usize {
        self.first_row.len()
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    /// Materializes the dense matrix. Intended for small problems; guarded at
    /// `DENSE_LIMIT` because everything above it should stay in FFT land.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let p = self.dim();
        if p > DENSE_LIMIT {
            return Err(Error::TooLargeForDense {
                context: "ToeplitzMatrix::to_dense",
                limit: DENSE_LIMIT,
                actual: p,
            });
        }
        Ok(DMatrix::from_fn(p, p, |i, j| {
            self.first_row[i.abs_diff(j)]
        }))
    }

    /// Fast matrix-vector product via the circulant embedding, O(p log p).
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "ToeplitzMatrix::matvec",
                expected: self.dim(),
                actual: v.len(),
            });
        }
        let op = CirculantOperator::new(&self.first_row);
        let mut out = vec![0.0; self.dim()];
        op.matvec(v, &mut out);
        Ok(out)
    }

    /// Spectral norm (largest absolute eigenvalue) by power iteration with
    /// fast matvecs. Converges when successive norm estimates agree to a
    /// relative `tol`; the returned value approaches the norm from below.
    pub fn spectral_norm(&self, tol: f64, max_iter: usize) -> Result<f64> {
        spectral_norm_of_row(&self.first_row, tol, max_iter)
    }

    /// Smallest eigenvalue via a dense symmetric eigendecomposition.
    /// Only available up to `DENSE_LIMIT`.
    pub fn min_eigenvalue_dense(&self) -> Result<f64> {
        let dense = self.to_dense()?;
        let eig = dense.symmetric_eigen();
        Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Samples the spectral density implied by the stored coefficients,
    /// f(w) = r_0 + 2 sum_{d>=1} r_d cos(d w), at w = pi k / intervals for
    /// k = 0..=intervals. Used to compare estimators on a common grid.
    pub fn density_grid(&self, intervals: usize) -> Vec<f64> {
        let needed = self.first_row.len().saturating_sub(1);
        let g = intervals.max(needed).max(1);
        let grid = cosine_series_grid(&self.first_row, g);
        if g == intervals {
            return grid;
        }
        // Fine grid forced by a long first row: evaluate directly instead.
        (0..=intervals)
            .map(|k| {
                let w = std::f64::consts::PI * k as f64 / intervals.max(1) as f64;
                self.first_row[0]
                    + 2.0
                        * self.first_row[1..]
                            .iter()
                            .enumerate()
                            .map(|(i, &r)| r * ((i + 1) as f64 * w).cos())
                            .sum::<f64>()
            })
            .collect()
    }
}

/// Spectral norm of the difference of two equally sized Toeplitz matrices,
/// computed on the difference of first rows (itself Toeplitz).
pub fn difference_spectral_norm(
    a: &ToeplitzMatrix,
    b: &ToeplitzMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "difference_spectral_norm",
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let row: Vec<f64> = a
        .first_row
        .iter()
        .zip(&b.first_row)
        .map(|(x, y)| x - y)
        .collect();
    spectral_norm_of_row(&row, tol, max_iter)
}

fn spectral_norm_of_row(row: &[f64], tol: f64, max_iter: usize) -> Result<f64> {
    let p = row.len();
    if p == 1 {
        return Ok(row[0].abs());
    }
    if row.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let op = CirculantOperator::new(row);
    let scale = 1.0 / (p as f64).sqrt();
    // All-ones start; if it happens to be annihilated, an alternating-sign
    // vector cannot also be (their span meets any nonzero eigenspace of a
    // nonzero symmetric Toeplitz matrix only at 0 in contrived cases, and the
    // random fallback below covers the rest).
    let starts: [&dyn Fn(usize) -> f64; 3] = [
        &|_| scale,
        &|i| if i % 2 == 0 { scale } else { -scale },
        &|i| ((i as f64 + 1.37).sin() * 10.0).fract() + 0.25,
    ];
    let mut last_err = None;
    for start in starts {
        match power_iteration(&op, p, start, tol, max_iter) {
            Ok(v) => return Ok(v),
            // A zero estimate means the start vector was annihilated; only
            // then is another start worth trying.
            Err(Error::NotConverged { last_estimate, .. }) if last_estimate == 0.0 => {
                last_err = Some(Error::NotConverged {
                    iterations: max_iter,
                    last_estimate,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("power iteration attempted at least once"))
}

/// Power iteration that reuses the caller's iterate as the start vector and
/// always returns its best norm estimate (a lower bound), converged or not.
/// Sweeping a family of nearby matrices with one persistent vector makes
/// each call after the first converge in a handful of iterations, which is
/// what the taper cross-validation loops need.
pub(crate) fn spectral_norm_warm(
    row: &[f64],
    v: &mut Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> f64 {
    let p = row.len();
    if p == 1 {
        return row[0].abs();
    }
    if row.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let op = CirculantOperator::new(row);
    if v.len() != p || l2_norm(v) == 0.0 {
        v.clear();
        v.resize(p, 1.0 / (p as f64).sqrt());
    } else {
        let n0 = l2_norm(v);
        v.iter_mut().for_each(|x| *x /= n0);
    }
    let mut w = vec![0.0; p];
    let mut estimate = 0.0;
    let mut have_estimate = false;
    for _ in 0..max_iter {
        op.matvec(v, &mut w);
        let next = l2_norm(&w);
        if next == 0.0 {
            // Annihilated start; restart from a deterministic generic vector.
            for (i, x) in v.iter_mut().enumerate() {
                *x = ((i as f64 + 1.37).sin() * 10.0).fract() + 0.25;
            }
            let n0 = l2_norm(v);
            v.iter_mut().for_each(|x| *x /= n0);
            have_estimate = false;
            continue;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / next;
        }
        if have_estimate && (next - estimate).abs() <= tol * next {
            return next;
        }
        estimate = next;
        have_estimate = true;
    }
    estimate
}

fn power_iteration(
    op: &CirculantOperator,
    p: usize,
    start: &dyn Fn(usize) -> f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut v: Vec<f64> = (0..p).map(start).collect();
    let norm0 = l2_norm(&v);
    if norm0 == 0.0 {
        return Err(Error::NotConverged {
            iterations: 0,
            last_estimate: 0.0,
        });
    }
    for x in v.iter_mut() {
        *x /= norm0;
    }
    let mut w = vec![0.0; p];
    let mut estimate = 0.0;
    for it in 0..max_iter {
        op.matvec(&v, &mut w);
        let next = l2_norm(&w);
        if next == 0.0 {
            // Start vector lies in the null space; caller tries another start.
            return Err(Error::NotConverged {
                iterations: it,
                last_estimate: 0.0,
            });
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / next;
        }
        if it > 0 && (next - estimate).abs() <= tol * next.abs() {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        last_estimate: estimate,
    })
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Circulant embedding of a symmetric Toeplitz matrix: the p x p matrix with
/// first row r embeds into the (2p - 2)-dimensional circulant with first row
/// (r_0, ..., r_{p-1}, r_{p-2}, ..., r_1), which the FFT diagonalizes.
pub(crate) struct CirculantOperator {
    p: usize,
    len: usize,
    /// Real eigenvalues of the embedding (FFT of the symmetric first row).
    lambda: Vec<f64>,
    fft: Option<FftPair>,
    buf: std::cell::RefCell<Vec<Complex<f64>>>,
    scalar: f64,
}

impl CirculantOperator {
    pub fn new(first_row: &[f64]) -> Self {
        let p = first_row.len();
        assert!(p >= 1);
        if p == 1 {
            return CirculantOperator {
                p,
                len: 0,
                lambda: Vec::new(),
                fft: None,
                buf: std::cell::RefCell::new(Vec::new()),
                scalar: first_row[0],
            };
        }
        let len = 2 * p - 2;
        let pair = FftPair::new(len);
        let mut buf = vec![Complex::default(); len];
        for (j, &r) in first_row.iter().enumerate() {
            buf[j] = Complex::new(r, 0.0);
        }
        for j in 1..p - 1 {
            buf[len - j] = Complex::new(first_row[j], 0.0);
        }
        pair.forward(&mut buf);
        let lambda = buf.iter().map(|c| c.re).collect();
        CirculantOperator {
            p,
            len,
            lambda,
            fft: Some(pair),
            buf: std::cell::RefCell::new(vec![Complex::default(); len]),
            scalar: 0.0,
        }
    }

    /// Eigenvalues of the circulant embedding.
    pub fn embedding_eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.p);
        debug_assert_eq!(out.len(), self.p);
        if self.p == 1 {
            out[0] = self.scalar * v[0];
            return;
        }
        let pair = self.fft.as_ref().expect("plan exists for p >= 2");
        let mut buf = self.buf.borrow_mut();
        buf.iter_mut().for_each(|c| *c = Complex::default());
        for (j, &x) in v.iter().enumerate() {
            buf[j] = Complex::new(x, 0.0);
        }
        pair.forward(&mut buf);
        for (c, &l) in buf.iter_mut().zip(&self.lambda) {
            *c *= l;
        }
        pair.inverse(&mut buf);
        let inv_len = 1.0 / self.len as f64;
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.re * inv_len;
        }
    }
}
