//! Internal FFT plumbing shared by the transform, quadrature, and sampling
//! code. Plans are cached globally so repeated work at the same length
//! (Monte Carlo replications, power iterations) reuses them.

use std::cell::RefCell;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

/// Forward/inverse complex FFT plans of a fixed length with reusable scratch.
/// The inverse is unnormalized; callers divide by the length.
pub(crate) struct FftPair {
    pub len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: RefCell<Vec<Complex<f64>>>,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let (fwd, inv) = {
            let mut planner = planner().lock().expect("FFT planner lock poisoned");
            (
                planner.plan_fft_forward(len),
                planner.plan_fft_inverse(len),
            )
        };
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        FftPair {
            len,
            fwd,
            inv,
            scratch: RefCell::new(vec![Complex::default(); scratch_len]),
        }
    }

    pub fn forward(&self, buf: &mut [Complex<f64>]) {
        debug_assert_eq!(buf.len(), self.len);
        let mut scratch = self.scratch.borrow_mut();
        self.fwd.process_with_scratch(buf, &mut scratch);
    }

    pub fn inverse(&self, buf: &mut [Complex<f64>]) {
        debug_assert_eq!(buf.len(), self.len);
        let mut scratch = self.scratch.borrow_mut();
        self.inv.process_with_scratch(buf, &mut scratch);
    }
}

/// Writes the even (whole-sample symmetric) extension of `vals` into `buf`:
/// for k + 1 input values the result has length 2k with
/// `buf[j] = vals[j]` for `j <= k` and `buf[2k - j] = vals[j]` for `0 < j < k`.
pub(crate) fn even_extension_into(vals: &[f64], buf: &mut Vec<Complex<f64>>) {
    let k = vals.len() - 1;
    debug_assert!(k >= 1, "even extension needs at least two values");
    buf.clear();
    buf.resize(2 * k, Complex::default());
    for (j, &v) in vals.iter().enumerate() {
        buf[j] = Complex::new(v, 0.0);
    }
    for j in 1..k {
        buf[2 * k - j] = Complex::new(vals[j], 0.0);
    }
}

/// Raw half-sample cosine sums of `vals` = (g_0, ..., g_M):
/// S_k = g_0 + (-1)^k g_M + 2 * sum_{j=1}^{M-1} g_j cos(pi j k / M)
/// for k = 0..out_len, computed with one length-2M FFT.
pub(crate) fn cosine_sums(vals: &[f64], out_len: usize) -> Vec<f64> {
    let m = vals.len() - 1;
    assert!(m >= 1, "cosine_sums needs at least two samples");
    assert!(out_len <= 2 * m);
    let pair = FftPair::new(2 * m);
    let mut buf = Vec::new();
    even_extension_into(vals, &mut buf);
    pair.forward(&mut buf);
    buf[..out_len].iter().map(|c| c.re).collect()
}

/// Evaluates the cosine series c_0 + 2 * sum_{d>=1} c_d cos(pi d x) on the
/// uniform grid x = k / g for k = 0..=g. Requires g + 1 >= coeffs.len().
pub(crate) fn cosine_series_grid(coeffs: &[f64], g: usize) -> Vec<f64> {
    assert!(!coeffs.is_empty());
    assert!(
        g + 1 >= coeffs.len(),
        "grid too coarse for {} coefficients",
        coeffs.len()
    );
    if coeffs.len() == 1 {
        return vec![coeffs[0]; g + 1];
    }
    let pair = FftPair::new(2 * g);
    let mut buf = vec![Complex::default(); 2 * g];
    buf[0] = Complex::new(coeffs[0], 0.0);
    for (d, &c) in coeffs.iter().enumerate().skip(1) {
        buf[d] = Complex::new(c, 0.0);
        buf[2 * g - d] = Complex::new(c, 0.0);
    }
    pair.forward(&mut buf);
    buf[..=g].iter().map(|c| c.re).collect()
}
