//! Orthogonal type-I discrete cosine transform. For a symmetric Toeplitz
//! covariance with smooth spectral density f, the DCT-I basis approximately
//! diagonalizes the matrix: the transformed matrix has diagonal close to
//! f(pi * j / (p - 1)) and exactly vanishing odd off-diagonals. The transform
//! of a data row therefore carries one approximately independent variance
//! probe of f per frequency.

use ndarray::Array2;
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::FftPair;
use crate::toeplitz::ToeplitzMatrix;
use crate::SampleMatrix;

/// Largest p for which the dense transform matrix may be materialized.
pub const MATRIX_LIMIT: usize = 4096;

/// Largest p accepted by `diagonalization_report` (two dense products).
pub const REPORT_LIMIT: usize = 2048;

/// Dense orthogonal DCT-I matrix of size p:
/// D_ij = sqrt(2 / (p - 1)) * a_i * a_j * cos(pi i j / (p - 1)) with
/// a = 1/sqrt(2) at the two boundary indices and 1 elsewhere (0-based).
/// D is symmetric, orthogonal, and involutory.
pub fn dct1_matrix(p: usize) -> Result<Array2<f64>> {
    if p < 2 || p > MATRIX_LIMIT {
        return Err(Error::InvalidArgument {
            name: "p",
            reason: format!("dct1_matrix requires 2 <= p <= {MATRIX_LIMIT}, got {p}"),
        });
    }
    let norm = (2.0 / (p as f64 - 1.0)).sqrt();
    let half = 0.5_f64.sqrt();
    let weight = |i: usize| if i == 0 || i == p - 1 { half } else { 1.0 };
    let mut d = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let angle = std::f64::consts::PI * (i as f64) * (j as f64) / (p as f64 - 1.0);
            let v = norm * weight(i) * weight(j) * angle.cos();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Precomputed plan for applying the orthogonal DCT-I of size p in
/// O(p log p) through a length-(2p - 2) FFT of the even extension.
pub struct Dct1Plan {
    p: usize,
    norm: f64,
    fft: FftPair,
    buf: std::cell::RefCell<Vec<Complex<f64>>>,
}

impl Dct1Plan {
    pub fn new(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidArgument {
                name: "p",
                reason: format!("DCT-I needs p >= 2, got {p}"),
            });
        }
        Ok(Dct1Plan {
            p,
            norm: (2.0 / (p as f64 - 1.0)).sqrt(),
            fft: FftPair::new(2 * p - 2),
            buf: std::cell::RefCell::new(Vec::new()),
        })
    }

    pub fn len(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Applies the transform to one vector of length p.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.p];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    /// Applies the transform writing into a caller-provided buffer.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let p = self.p;
        if x.len() != p || out.len() != p {
            return Err(Error::DimensionMismatch {
                context: "Dct1Plan::apply",
                expected: p,
                actual: if x.len() != p { x.len() } else { out.len() },
            });
        }
        let half = 0.5_f64.sqrt();
        // Boundary-weighted input u, then V = Re FFT(even extension of u):
        // V_k = u_0 + (-1)^k u_{p-1} + 2 sum_{j=1}^{p-2} u_j cos(pi j k/(p-1)),
        // so the weighted cosine sum is (V_k + u_0 + (-1)^k u_{p-1}) / 2.
        let u0 = x[0] * half;
        let ulast = x[p - 1] * half;
        let mut buf = self.buf.borrow_mut();
        buf.clear();
        buf.resize(2 * p - 2, Complex::default());
        buf[0] = Complex::new(u0, 0.0);
        buf[p - 1] = Complex::new(ulast, 0.0);
        for j in 1..p - 1 {
            buf[j] = Complex::new(x[j], 0.0);
            buf[2 * p - 2 - j] = Complex::new(x[j], 0.0);
        }
        self.fft.forward(&mut buf);
        for (k, o) in out.iter_mut().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let weight = if k == 0 || k == p - 1 { half } else { 1.0 };
            let sum = 0.5 * (buf[k].re + u0 + sign * ulast);
            *o = self.norm * weight * sum;
        }
        Ok(())
    }
}

/// Transforms every row of the n x p sample and squares the coefficients:
/// W_ij = (D y_i)_j^2. Row j of the result estimates f at frequency
/// pi * j / (p - 1) with one (or n) chi-square degrees of freedom.
pub fn transform_sample(y: &SampleMatrix) -> Result<Array2<f64>> {
    let (n, p) = y.dim();
    if n == 0 || p < 2 {
        return Err(Error::InvalidArgument {
            name: "y",
            reason: format!("need n >= 1 and p >= 2, got {n} x {p}"),
        });
    }
    let plan = Dct1Plan::new(p)?;
    let mut w = Array2::zeros((n, p));
    let mut row_in = vec![0.0; p];
    let mut row_out = vec![0.0; p];
    for i in 0..n {
        for (dst, src) in row_in.iter_mut().zip(y.row(i)) {
            *dst = *src;
        }
        plan.apply_into(&row_in, &mut row_out)?;
        for (dst, src) in w.row_mut(i).iter_mut().zip(&row_out) {
            *dst = src * src;
        }
    }
    Ok(w)
}

/// How far D' Sigma D is from the diagonal matrix f(pi j / (p - 1)).
#[derive(Debug, Clone, Copy)]
pub struct DiagonalizationReport {
    /// max_j |(D' Sigma D)_jj - f(pi j / (p - 1))|
    pub max_diag_error: f64,
    /// max over odd |i - j| of |(D' Sigma D)_ij| (zero in exact arithmetic)
    pub max_offdiag_odd: f64,
    /// max over even |i - j|, i != j, of |(D' Sigma D)_ij|
    pub max_offdiag_even: f64,
}

/// Measures how well the DCT-I basis diagonalizes a Toeplitz matrix against
/// a target spectral density `f` (a function of the angular frequency on
/// [0, pi]). Dense O(p^3) computation, limited to p <= `REPORT_LIMIT`.
pub fn diagonalization_report(
    t: &ToeplitzMatrix,
    f: impl Fn(f64) -> f64,
) -> Result<DiagonalizationReport> {
    let p = t.dim();
    if p < 2 || p > REPORT_LIMIT {
        return Err(Error::TooLargeForDense {
            context: "diagonalization_report",
            limit: REPORT_LIMIT,
            actual: p,
        });
    }
    let d = dct1_matrix(p)?;
    let sigma = t.to_dense()?;
    let d_na = nalgebra::DMatrix::from_fn(p, p, |i, j| d[(i, j)]);
    let m = &d_na * &sigma * &d_na;
    let mut report = DiagonalizationReport {
        max_diag_error: 0.0,
        max_offdiag_odd: 0.0,
        max_offdiag_even: 0.0,
    };
    for i in 0..p {
        let x = i as f64 / (p as f64 - 1.0);
        let err = (m[(i, i)] - f(std::f64::consts::PI * x)).abs();
        report.max_diag_error = report.max_diag_error.max(err);
        for j in 0..i {
            let v = m[(i, j)].abs();
            if (i - j) % 2 == 1 {
                report.max_offdiag_odd = report.max_offdiag_odd.max(v);
            } else {
                report.max_offdiag_even = report.max_offdiag_even.max(v);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn lcg_values(seed: u64, n: usize) -> Vec<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        (0..n)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn matrix_p3_has_exact_entries() {
        let d = dct1_matrix(3).unwrap();
        let h = 0.5_f64.sqrt();
        let want = [[0.5, h, 0.5], [h, 0.0, -h], [0.5, -h, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (d[(i, j)] - want[i][j]).abs() < 1e-15,
                    "entry ({i},{j}): {} vs {}",
                    d[(i, j)],
                    want[i][j]
                );
            }
        }
    }

    #[test]
    fn matrix_p4_corner_value() {
        let d = dct1_matrix(4).unwrap();
        let want = (2.0 / 3.0_f64).sqrt() * 0.5;
        assert!((d[(0, 0)] - want).abs() < 1e-15);
        assert!((want - 0.408_248_290_463_863).abs() < 1e-12);
    }

    #[test]
    fn matrix_is_orthogonal_and_symmetric() {
        for p in [2usize, 3, 5, 8, 13, 33, 64] {
            let d = dct1_matrix(p).unwrap();
            for i in 0..p {
                for j in 0..p {
                    assert_eq!(d[(i, j)], d[(j, i)]);
                }
            }
            let prod = d.dot(&d);
            for i in 0..p {
                for j in 0..p {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (prod[(i, j)] - want).abs() < 1e-12,
                        "p = {p}, D*D at ({i},{j}) = {}",
                        prod[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn apply_matches_dense_matrix() {
        for p in [2usize, 3, 4, 9, 33, 120] {
            let d = dct1_matrix(p).unwrap();
            let x = lcg_values(p as u64, p);
            let plan = Dct1Plan::new(p).unwrap();
            let fast = plan.apply(&x).unwrap();
            for k in 0..p {
                let slow: f64 = (0..p).map(|j| d[(k, j)] * x[j]).sum();
                assert!(
                    (fast[k] - slow).abs() < 1e-12,
                    "p = {p}, k = {k}: {} vs {slow}",
                    fast[k]
                );
            }
        }
    }

    #[test]
    fn apply_twice_is_identity() {
        for p in [2usize, 7, 64, 257] {
            let x = lcg_values(p as u64 + 3, p);
            let plan = Dct1Plan::new(p).unwrap();
            let once = plan.apply(&x).unwrap();
            let twice = plan.apply(&once).unwrap();
            for (a, b) in twice.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12, "p = {p}");
            }
        }
    }

    #[test]
    fn apply_preserves_energy() {
        for p in [5usize, 32, 101] {
            let x = lcg_values(p as u64 + 11, p);
            let plan = Dct1Plan::new(p).unwrap();
            let y = plan.apply(&x).unwrap();
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ey: f64 = y.iter().map(|v| v * v).sum();
            assert!((ex - ey).abs() < 1e-12 * ex.max(1.0));
        }
    }

    #[test]
    fn transform_sample_on_basis_column_is_indicator() {
        let p = 16;
        let d = dct1_matrix(p).unwrap();
        let j = 5;
        let mut y = Array2::zeros((1, p));
        for i in 0..p {
            y[(0, i)] = d[(i, j)];
        }
        let w = transform_sample(&y).unwrap();
        for k in 0..p {
            let want = if k == j { 1.0 } else { 0.0 };
            assert!((w[(0, k)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_sample_of_zeros_is_zero() {
        let y = Array2::zeros((3, 8));
        let w = transform_sample(&y).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn report_on_identity_matrix_is_clean() {
        let t = ToeplitzMatrix::new({
            let mut r = vec![0.0; 64];
            r[0] = 1.0;
            r
        })
        .unwrap();
        let rep = diagonalization_report(&t, |_| 1.0).unwrap();
        assert!(rep.max_diag_error < 1e-12);
        assert!(rep.max_offdiag_odd < 1e-12);
        assert!(rep.max_offdiag_even < 1e-12);
    }
}
