//! Periodic smoothing splines on an equispaced design over [0, 1).
//!
//! The minimizer of (1/N) sum (z_k - s(x_k))^2 + h^{2q} int (s^{(q)})^2 over
//! 1-periodic functions is a trigonometric-basis ridge regression. On the
//! equispaced design the basis is orthogonal, so the fit reduces to
//! coefficient-wise shrinkage of the discrete Fourier coefficients:
//! frequency j is damped by w_j = 1 / (1 + (2 pi j h)^{2q}), the constant
//! passes through untouched. GCV and GML tuning reuse the same spectrum.

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::FftPair;
use crate::vst::RegressionData;

/// Penalty orders accepted by the fitters.
pub const MAX_ORDER: usize = 3;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const TAU: f64 = std::f64::consts::TAU;

/// A fitted periodic spline s(x) = a_0 + sum_j sqrt(2) (a_j cos(2 pi j x)
/// + b_j sin(2 pi j x)) together with its tuning diagnostics.
#[derive(Debug, Clone)]
pub struct SplineFit {
    n: usize,
    q: usize,
    h: f64,
    /// Cosine coefficients, indices 0..=N/2.
    a: Vec<f64>,
    /// Sine coefficients; b[0] = 0 and, for even N, b[N/2] = 0.
    b: Vec<f64>,
    fitted: Vec<f64>,
    edf: f64,
    rss: f64,
}

impl SplineFit {
    /// Design size N.
    pub fn design_len(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.q
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Effective degrees of freedom, the trace of the smoother matrix:
    /// 1 + sum_j mult(j) * w_j.
    pub fn edf(&self) -> f64 {
        self.edf
    }

    /// Residual sum of squares at the design points.
    pub fn rss(&self) -> f64 {
        self.rss
    }

    /// Fitted values at the design points k / N.
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    /// Cosine coefficients a_0..a_{N/2}.
    pub fn cos_coefficients(&self) -> &[f64] {
        &self.a
    }

    /// Sine coefficients b_0..b_{N/2} (first and, for even N, last are zero).
    pub fn sin_coefficients(&self) -> &[f64] {
        &self.b
    }

    /// Evaluates the fitted periodic function at any x.
    pub fn evaluate(&self, x: f64) -> f64 {
        let mut s = self.a[0];
        for j in 1..self.a.len() {
            let angle = TAU * j as f64 * x;
            s += SQRT2 * (self.a[j] * angle.cos() + self.b[j] * angle.sin());
        }
        s
    }

    /// Samples the fitted function at points i / count for i = 0..count with
    /// one FFT. Requires count >= N so every stored frequency is resolved.
    pub fn sample_dense(&self, count: usize) -> Result<Vec<f64>> {
        if count < self.n {
            return Err(Error::InvalidArgument {
                name: "count",
                reason: format!(
                    "dense sampling needs at least N = {} points, got {count}",
                    self.n
                ),
            });
        }
        let pair = FftPair::new(count);
        let mut buf = vec![Complex::default(); count];
        buf[0] = Complex::new(self.a[0], 0.0);
        for j in 1..self.a.len() {
            let c = Complex::new(self.a[j] / SQRT2, -self.b[j] / SQRT2);
            buf[j] += c;
            buf[count - j] += c.conj();
        }
        pair.inverse(&mut buf);
        Ok(buf.into_iter().map(|c| c.re).collect())
    }
}

/// Shrinkage weight for frequency j.
fn weight(j: usize, h: f64, q: usize) -> f64 {
    if j == 0 {
        return 1.0;
    }
    1.0 / (1.0 + (TAU * j as f64 * h).powi(2 * q as i32))
}

/// One minus the weight, computed without cancellation for small h.
fn co_weight(j: usize, h: f64, q: usize) -> f64 {
    if j == 0 {
        return 0.0;
    }
    let t = (TAU * j as f64 * h).powi(2 * q as i32);
    t / (1.0 + t)
}

/// The per-frequency energy decomposition of a data vector, reused by the
/// fitters and both selection criteria.
struct Spectrum {
    n: usize,
    /// Raw forward FFT of the data.
    freq: Vec<Complex<f64>>,
    /// ||projection onto frequency j||^2, j = 0..=N/2.
    energy: Vec<f64>,
    /// Basis-function count at frequency j (2, except 1 at j = 0 and Nyquist).
    mult: Vec<f64>,
}

fn validate_design(data: &RegressionData) -> Result<usize> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidArgument {
            name: "data",
            reason: format!("need at least 2 design points, got {n}"),
        });
    }
    if data.x.len() != n {
        return Err(Error::DimensionMismatch {
            context: "spline::fit",
            expected: n,
            actual: data.x.len(),
        });
    }
    for (k, &x) in data.x.iter().enumerate() {
        if (x - k as f64 / n as f64).abs() > 1e-9 {
            return Err(Error::InvalidArgument {
                name: "data.x",
                reason: format!(
                    "design must be equispaced on [0, 1): point {k} is {x}, expected {}",
                    k as f64 / n as f64
                ),
            });
        }
    }
    if let Some(bad) = data.z.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument {
            name: "data.z",
            reason: format!("response {bad} is not finite"),
        });
    }
    Ok(n)
}

fn validate_tuning(h: f64, q: usize) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument {
            name: "h",
            reason: format!("bandwidth must be positive and finite, got {h}"),
        });
    }
    if q == 0 || q > MAX_ORDER {
        return Err(Error::InvalidArgument {
            name: "q",
            reason: format!("penalty order must be in 1..={MAX_ORDER}, got {q}"),
        });
    }
    Ok(())
}

impl Spectrum {
    fn compute(data: &RegressionData) -> Result<Spectrum> {
        let n = validate_design(data)?;
        let pair = FftPair::new(n);
        let mut freq: Vec<Complex<f64>> =
            data.z.iter().map(|&v| Complex::new(v, 0.0)).collect();
        pair.forward(&mut freq);
        let jmax = n / 2;
        let even = n % 2 == 0;
        let mut energy = vec![0.0; jmax + 1];
        let mut mult = vec![2.0; jmax + 1];
        mult[0] = 1.0;
        let nf = n as f64;
        energy[0] = freq[0].re * freq[0].re / nf;
        if even {
            mult[jmax] = 1.0;
            energy[jmax] = freq[jmax].re * freq[jmax].re / nf;
        }
        let mid_end = if even { jmax } else { jmax + 1 };
        for j in 1..mid_end {
            energy[j] = 2.0 * freq[j].norm_sqr() / nf;
        }
        Ok(Spectrum {
            n,
            freq,
            energy,
            mult,
        })
    }

    fn edf(&self, h: f64, q: usize) -> f64 {
        (0..self.energy.len())
            .map(|j| self.mult[j] * weight(j, h, q))
            .sum()
    }

    fn rss(&self, h: f64, q: usize) -> f64 {
        (1..self.energy.len())
            .map(|j| {
                let c = co_weight(j, h, q);
                c * c * self.energy[j]
            })
            .sum()
    }

    fn gcv(&self, h: f64, q: usize) -> f64 {
        let n = self.n as f64;
        let denom = 1.0 - self.edf(h, q) / n;
        if denom <= 1e-12 {
            return f64::INFINITY;
        }
        (self.rss(h, q) / n) / (denom * denom)
    }

    /// Generalized maximum likelihood score: z'(I - S)z over the geometric
    /// mean of the nonunit eigenvalues of I - S (the constant direction is
    /// excluded; every other eigenvalue is 1 - w_j with its multiplicity).
    fn gml(&self, h: f64, q: usize) -> f64 {
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for j in 1..self.energy.len() {
            let c = co_weight(j, h, q);
            quad += c * self.energy[j];
            logdet += self.mult[j] * c.ln();
        }
        let scale = (logdet / (self.n as f64 - 1.0)).exp();
        quad / scale
    }
}

/// Fits the periodic smoothing spline at a fixed bandwidth h and penalty
/// order q. The design must be the equispaced grid k / N.
pub fn fit(data: &RegressionData, h: f64, q: usize) -> Result<SplineFit> {
    validate_tuning(h, q)?;
    let spectrum = Spectrum::compute(data)?;
    fit_from_spectrum(&spectrum, h, q)
}

fn fit_from_spectrum(spectrum: &Spectrum, h: f64, q: usize) -> Result<SplineFit> {
    let n = spectrum.n;
    let nf = n as f64;
    let jmax = n / 2;
    let even = n % 2 == 0;

    let mut a = vec![0.0; jmax + 1];
    let mut b = vec![0.0; jmax + 1];
    a[0] = spectrum.freq[0].re / nf;
    let mid_end = if even { jmax } else { jmax + 1 };
    for j in 1..mid_end {
        let w = weight(j, h, q);
        a[j] = w * SQRT2 * spectrum.freq[j].re / nf;
        b[j] = -w * SQRT2 * spectrum.freq[j].im / nf;
    }
    if even {
        a[jmax] = weight(jmax, h, q) * spectrum.freq[jmax].re / (nf * SQRT2);
    }

    // Fitted values: damp the raw spectrum symmetrically and invert.
    let pair = FftPair::new(n);
    let mut buf = spectrum.freq.clone();
    for (j, c) in buf.iter_mut().enumerate() {
        let jj = j.min(n - j);
        *c *= weight(jj, h, q);
    }
    pair.inverse(&mut buf);
    let fitted = buf.iter().map(|c| c.re / nf).collect();

    Ok(SplineFit {
        n,
        q,
        h,
        a,
        b,
        fitted,
        edf: spectrum.edf(h, q),
        rss: spectrum.rss(h, q),
    })
}

/// Log-spaced candidate bandwidths for the selectors.
#[derive(Debug, Clone, Copy)]
pub struct HGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for HGrid {
    fn default() -> Self {
        HGrid {
            min: 1e-4,
            max: 1.0,
            count: 40,
        }
    }
}

impl HGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0) || self.max < self.min || self.count == 0 {
            return Err(Error::InvalidArgument {
                name: "h_grid",
                reason: format!(
                    "need 0 < min <= max and count >= 1, got [{}, {}] x {}",
                    self.min, self.max, self.count
                ),
            });
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        let step = (hi - lo) / (self.count as f64 - 1.0);
        Ok((0..self.count)
            .map(|i| (lo + step * i as f64).exp())
            .collect())
    }
}

/// Outcome of a bandwidth search: the refitted spline at the winner plus the
/// coarse criterion curve for inspection.
#[derive(Debug, Clone)]
pub struct SelectorResult {
    pub fit: SplineFit,
    pub h: f64,
    pub criterion: f64,
    /// (h, criterion) over the coarse grid.
    pub curve: Vec<(f64, f64)>,
}

/// Selects h by generalized cross-validation over the grid, then golden-
/// section refinement between the winning grid neighbors. Ties prefer the
/// smaller bandwidth.
pub fn gcv_select(data: &RegressionData, q: usize, grid: &HGrid) -> Result<SelectorResult> {
    select(data, q, grid, &|s: &Spectrum, h| s.gcv(h, q))
}

/// Selects h by the generalized maximum likelihood criterion, same search
/// strategy as `gcv_select`.
pub fn ml_select(data: &RegressionData, q: usize, grid: &HGrid) -> Result<SelectorResult> {
    select(data, q, grid, &|s: &Spectrum, h| s.gml(h, q))
}

fn select(
    data: &RegressionData,
    q: usize,
    grid: &HGrid,
    criterion: &dyn Fn(&Spectrum, f64) -> f64,
) -> Result<SelectorResult> {
    validate_tuning(grid.min, q)?;
    let spectrum = Spectrum::compute(data)?;
    let hs = grid.values()?;
    let curve: Vec<(f64, f64)> = hs
        .iter()
        .map(|&h| (h, criterion(&spectrum, h)))
        .collect();
    let mut best = 0;
    for (i, &(_, c)) in curve.iter().enumerate() {
        if c < curve[best].1 {
            best = i;
        }
    }
    let (mut h_star, mut c_star) = curve[best];
    if curve.len() > 1 {
        let lo = curve[best.saturating_sub(1)].0;
        let hi = curve[(best + 1).min(curve.len() - 1)].0;
        if hi > lo {
            let (h_ref, c_ref) = golden_section(&spectrum, criterion, lo, hi);
            if c_ref < c_star || (c_ref == c_star && h_ref < h_star) {
                h_star = h_ref;
                c_star = c_ref;
            }
        }
    }
    let fit = fit_from_spectrum(&spectrum, h_star, q)?;
    Ok(SelectorResult {
        fit,
        h: h_star,
        criterion: c_star,
        curve,
    })
}

/// Golden-section minimization on the log-bandwidth scale, run down to a
/// relative interval width of 1e-3.
fn golden_section(
    spectrum: &Spectrum,
    criterion: &dyn Fn(&Spectrum, f64) -> f64,
    lo: f64,
    hi: f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo.ln();
    let mut b = hi.ln();
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = criterion(spectrum, c.exp());
    let mut fd = criterion(spectrum, d.exp());
    while b - a > 1e-3 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = criterion(spectrum, c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = criterion(spectrum, d.exp());
        }
    }
    if fc <= fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn grid_data(z: Vec<f64>) -> RegressionData {
        let n = z.len();
        RegressionData {
            x: (0..n).map(|k| k as f64 / n as f64).collect(),
            z,
        }
    }

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

    /// Dense trigonometric design matrix. Column order: constant, then
    /// (cos, sin) per frequency; for even N the final column is the Nyquist
    /// cosine scaled to have squared column norm N like all the others.
    fn dense_basis(n: usize) -> (DMatrix<f64>, Vec<f64>) {
        let jmax = n / 2;
        let even = n % 2 == 0;
        let ncols = n;
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(ncols);
        let mut freqs: Vec<f64> = Vec::with_capacity(ncols);
        cols.push(vec![1.0; n]);
        freqs.push(0.0);
        let mid_end = if even { jmax } else { jmax + 1 };
        for j in 1..mid_end {
            let c: Vec<f64> = (0..n)
                .map(|k| SQRT2 * (TAU * j as f64 * k as f64 / n as f64).cos())
                .collect();
            let s: Vec<f64> = (0..n)
                .map(|k| SQRT2 * (TAU * j as f64 * k as f64 / n as f64).sin())
                .collect();
            cols.push(c);
            freqs.push(j as f64);
            cols.push(s);
            freqs.push(j as f64);
        }
        if even {
            cols.push((0..n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect());
            freqs.push(jmax as f64);
        }
        let b = DMatrix::from_fn(n, ncols, |i, j| cols[j][i]);
        (b, freqs)
    }

    /// Penalized least squares through a generic symmetric solve; the oracle
    /// for the fast coefficient-shrinkage path.
    fn dense_fit(z: &[f64], h: f64, q: usize) -> Vec<f64> {
        let n = z.len();
        let (b, freqs) = dense_basis(n);
        let nf = n as f64;
        let mut normal = b.transpose() * &b / nf;
        for (j, &fj) in freqs.iter().enumerate() {
            normal[(j, j)] += h.powi(2 * q as i32) * (TAU * fj).powi(2 * q as i32);
        }
        let rhs = b.transpose() * DVector::from_column_slice(z) / nf;
        let theta = normal.lu().solve(&rhs).expect("normal equations solvable");
        (&b * theta).iter().copied().collect()
    }

    /// Dense smoother matrix obtained column by column from the oracle.
    fn dense_smoother(n: usize, h: f64, q: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let col = dense_fit(&e, h, q);
            for i in 0..n {
                s[(i, k)] = col[i];
            }
        }
        s
    }

    #[test]
    fn constant_data_fits_exactly_for_any_bandwidth() {
        for &h in &[1e-4, 0.03, 1.0, 50.0] {
            let data = grid_data(vec![3.7; 12]);
            let f = fit(&data, h, 2).unwrap();
            for &v in f.fitted() {
                assert!((v - 3.7).abs() < 1e-12);
            }
            for &x in &[0.0, 0.21, 0.5, 0.93] {
                assert!((f.evaluate(x) - 3.7).abs() < 1e-12);
            }
            assert!(f.rss() < 1e-20);
        }
    }

    #[test]
    fn huge_bandwidth_shrinks_to_the_mean() {
        let z = lcg_values(7, 14);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let f = fit(&grid_data(z), 1e6, 2).unwrap();
        for &v in f.fitted() {
            assert!((v - mean).abs() < 1e-9);
        }
        assert!((f.edf() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_dense_penalized_least_squares() {
        for &(n, h, q) in &[(16usize, 0.1f64, 2usize), (8, 0.02, 1), (16, 0.35, 3), (32, 0.005, 2)] {
            let z = lcg_values(n as u64 * 31 + q as u64, n);
            let fast = fit(&grid_data(z.clone()), h, q).unwrap();
            let slow = dense_fit(&z, h, q);
            for (a, b) in fast.fitted().iter().zip(&slow) {
                assert!(
                    (a - b).abs() < 1e-9,
                    "n = {n}, h = {h}, q = {q}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn fit_minimizes_the_penalized_objective() {
        // Perturbing the solution in coefficient space can only increase
        // (1/N)||z - B theta||^2 + h^{2q} theta' P theta.
        let objective = |z: &[f64], coefs: &DVector<f64>, h: f64, q: usize| {
            let n = z.len();
            let (b, freqs) = dense_basis(n);
            let resid = DVector::from_column_slice(z) - &b * coefs;
            let mut pen = 0.0;
            for (j, &fj) in freqs.iter().enumerate() {
                pen += (TAU * fj).powi(2 * q as i32) * coefs[j] * coefs[j];
            }
            resid.norm_squared() / n as f64 + h.powi(2 * q as i32) * pen
        };
        for &(n, h, q) in &[(8usize, 0.15f64, 1usize), (16, 0.05, 2), (32, 0.4, 2)] {
            let z = lcg_values(n as u64 + 100, n);
            let fast = fit(&grid_data(z.clone()), h, q).unwrap();
            // Convert the stored coefficients into the dense basis layout.
            let jmax = n / 2;
            let even = n % 2 == 0;
            let mut theta = Vec::with_capacity(n);
            theta.push(fast.cos_coefficients()[0]);
            let mid_end = if even { jmax } else { jmax + 1 };
            for j in 1..mid_end {
                theta.push(fast.cos_coefficients()[j]);
                theta.push(fast.sin_coefficients()[j]);
            }
            if even {
                theta.push(fast.cos_coefficients()[jmax] * SQRT2);
            }
            let theta = DVector::from_vec(theta);
            let base = objective(&z, &theta, h, q);
            let noise = lcg_values(n as u64 * 7 + 1, 100 * n);
            for trial in 0..100 {
                let mut perturbed = theta.clone();
                for j in 0..n {
                    perturbed[j] += 0.05 * noise[trial * n + j];
                }
                let other = objective(&z, &perturbed, h, q);
                assert!(
                    base <= other + 1e-12,
                    "n = {n}: objective {base} beaten by perturbation {other}"
                );
            }
        }
    }

    #[test]
    fn edf_and_rss_match_the_dense_smoother() {
        let n = 16;
        let z = lcg_values(3, n);
        for &h in &[0.01, 0.1, 0.6] {
            let f = fit(&grid_data(z.clone()), h, 2).unwrap();
            let s = dense_smoother(n, h, 2);
            let trace: f64 = (0..n).map(|i| s[(i, i)]).sum();
            assert!((f.edf() - trace).abs() < 1e-9, "edf {} vs trace {trace}", f.edf());
            let zv = DVector::from_column_slice(&z);
            let resid = &zv - &s * &zv;
            assert!((f.rss() - resid.norm_squared()).abs() < 1e-9);
        }
    }

    #[test]
    fn gml_matches_brute_force_eigenvalues() {
        let n = 16;
        let z = lcg_values(17, n);
        let data = grid_data(z.clone());
        let spectrum = Spectrum::compute(&data).unwrap();
        for &h in &[0.02, 0.2, 0.9] {
            let fast = spectrum.gml(h, 2);
            let s = dense_smoother(n, h, 2);
            let sym = (s.clone() + s.transpose()) * 0.5;
            let eigs = sym.symmetric_eigen().eigenvalues;
            let zv = DVector::from_column_slice(&z);
            let quad = (&zv - &s * &zv).dot(&zv);
            let mut logdet = 0.0;
            let mut dropped = 0;
            for &l in eigs.iter() {
                let om = 1.0 - l;
                if om.abs() < 1e-9 {
                    dropped += 1;
                } else {
                    logdet += om.ln();
                }
            }
            assert_eq!(dropped, 1, "exactly the constant direction passes through");
            let brute = quad / (logdet / (n as f64 - 1.0)).exp();
            assert!(
                (fast - brute).abs() < 1e-9 * brute.abs().max(1.0),
                "h = {h}: {fast} vs {brute}"
            );
        }
    }

    #[test]
    fn fit_is_linear_in_the_data() {
        let n = 24;
        let z1 = lcg_values(1, n);
        let z2 = lcg_values(2, n);
        let combo: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| 2.5 * a - 1.25 * b).collect();
        let f1 = fit(&grid_data(z1), 0.07, 2).unwrap();
        let f2 = fit(&grid_data(z2), 0.07, 2).unwrap();
        let fc = fit(&grid_data(combo), 0.07, 2).unwrap();
        for j in 0..=n / 2 {
            let want = 2.5 * f1.cos_coefficients()[j] - 1.25 * f2.cos_coefficients()[j];
            assert!((fc.cos_coefficients()[j] - want).abs() < 1e-10);
            let want_b = 2.5 * f1.sin_coefficients()[j] - 1.25 * f2.sin_coefficients()[j];
            assert!((fc.sin_coefficients()[j] - want_b).abs() < 1e-10);
        }
    }

    #[test]
    fn edf_decreases_and_rss_increases_with_bandwidth() {
        let z = lcg_values(5, 20);
        let data = grid_data(z);
        let hs = [0.001, 0.01, 0.1, 1.0, 10.0];
        let fits: Vec<SplineFit> = hs.iter().map(|&h| fit(&data, h, 2).unwrap()).collect();
        for w in fits.windows(2) {
            assert!(w[1].edf() < w[0].edf());
            assert!(w[1].rss() >= w[0].rss() - 1e-12);
        }
    }

    #[test]
    fn evaluate_reproduces_design_points_and_period() {
        let z = lcg_values(9, 18);
        let f = fit(&grid_data(z), 0.03, 2).unwrap();
        for (k, &v) in f.fitted().iter().enumerate() {
            let x = k as f64 / 18.0;
            assert!((f.evaluate(x) - v).abs() < 1e-10);
        }
        for &x in &[0.13, 0.49, 0.77] {
            assert!((f.evaluate(x) - f.evaluate(x + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn sample_dense_agrees_with_pointwise_evaluation() {
        let z = lcg_values(21, 14);
        let f = fit(&grid_data(z), 0.08, 2).unwrap();
        for &count in &[14usize, 32, 64] {
            let dense = f.sample_dense(count).unwrap();
            assert_eq!(dense.len(), count);
            for (i, &v) in dense.iter().enumerate() {
                let want = f.evaluate(i as f64 / count as f64);
                assert!((v - want).abs() < 1e-10, "count {count}, i {i}");
            }
        }
        assert!(f.sample_dense(8).is_err());
    }

    #[test]
    fn selectors_are_shift_invariant() {
        let n = 32;
        let z = lcg_values(33, n);
        let shifted: Vec<f64> = z.iter().map(|v| v + 5.0).collect();
        let grid = HGrid::default();
        for selector in [gcv_select, ml_select] {
            let r1 = selector(&grid_data(z.clone()), 2, &grid).unwrap();
            let r2 = selector(&grid_data(shifted.clone()), 2, &grid).unwrap();
            assert!((r1.h - r2.h).abs() < 1e-12 * r1.h);
            for (a, b) in r1.fit.fitted().iter().zip(r2.fit.fitted()) {
                assert!((a + 5.0 - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn noiseless_smooth_signal_is_reproduced() {
        let n = 64;
        let z: Vec<f64> = (0..n).map(|k| (TAU * k as f64 / n as f64).sin()).collect();
        let r = gcv_select(&grid_data(z), 2, &HGrid::default()).unwrap();
        let mean_square = r.fit.rss() / n as f64;
        assert!(mean_square < 1e-8, "residual mean square {mean_square} too large");
    }

    #[test]
    fn selector_handles_single_point_grid() {
        let z = lcg_values(2, 16);
        let grid = HGrid {
            min: 0.05,
            max: 0.05,
            count: 1,
        };
        let r = gcv_select(&grid_data(z), 2, &grid).unwrap();
        assert_eq!(r.h, 0.05);
        assert_eq!(r.curve.len(), 1);
    }

    #[test]
    fn white_noise_keeps_moderate_degrees_of_freedom() {
        // Pure noise has no structure worth tracking, so GCV should spend
        // well under a fifth of the budget on most draws.
        let n = 498;
        let mut hits = 0;
        for seed in 0..20u64 {
            let z = lcg_values(seed * 13 + 5, n);
            let r = gcv_select(&grid_data(z), 2, &HGrid::default()).unwrap();
            if r.fit.edf() < 0.2 * n as f64 {
                hits += 1;
            }
        }
        assert!(hits >= 18, "only {hits}/20 stayed under 0.2 N");
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = grid_data(lcg_values(1, 8));
        assert!(fit(&data, 0.0, 2).is_err());
        assert!(fit(&data, 0.1, 0).is_err());
        assert!(fit(&data, 0.1, MAX_ORDER + 1).is_err());
        let skewed = RegressionData {
            x: vec![0.0, 0.3, 0.5, 0.75],
            z: vec![1.0; 4],
        };
        assert!(fit(&skewed, 0.1, 2).is_err());
    }
}
