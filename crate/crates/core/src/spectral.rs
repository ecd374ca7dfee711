//! FFT helpers for real time series on the run's time grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse plans of one transform length. Cheap to clone.
#[derive(Clone)]
pub struct Fourier {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("n", &self.n).finish()
    }
}

/// Per-thread buffers for [`Fourier`].
pub struct FftScratch {
    pub buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fourier {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fourier {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scratch(&self) -> FftScratch {
        let s = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        FftScratch {
            buf: vec![Complex64::new(0.0, 0.0); self.n],
            scratch: vec![Complex64::new(0.0, 0.0); s],
        }
    }

    /// Unnormalised forward DFT of `x` into `ws.buf`.
    pub fn forward<T: Copy + Into<f64>>(&self, x: &[T], ws: &mut FftScratch) {
        debug_assert_eq!(x.len(), self.n);
        for (b, &v) in ws.buf.iter_mut().zip(x) {
            *b = Complex64::new(v.into(), 0.0);
        }
        self.fwd.process_with_scratch(&mut ws.buf, &mut ws.scratch);
    }

    /// In-place forward DFT of `ws.buf`.
    pub fn forward_inplace(&self, ws: &mut FftScratch) {
        self.fwd.process_with_scratch(&mut ws.buf, &mut ws.scratch);
    }

    /// Inverse DFT of `ws.buf` (scaled by `1/n`); real part written to `out`.
    pub fn inverse_real(&self, ws: &mut FftScratch, out: &mut [f64]) {
        self.inv.process_with_scratch(&mut ws.buf, &mut ws.scratch);
        let scale = 1.0 / self.n as f64;
        for (o, b) in out.iter_mut().zip(&ws.buf) {
            *o = b.re * scale;
        }
    }

    /// In-place inverse DFT of `ws.buf`, scaled by `1/n`.
    pub fn inverse_inplace(&self, ws: &mut FftScratch) {
        self.inv.process_with_scratch(&mut ws.buf, &mut ws.scratch);
        let scale = 1.0 / self.n as f64;
        for b in ws.buf.iter_mut() {
            *b *= scale;
        }
    }
}

/// Signed frequency (Hz) of DFT bin `k`; the Nyquist bin maps to `+fs/2`.
pub fn bin_frequency(k: usize, n: usize, dt: f64) -> f64 {
    let df = 1.0 / (n as f64 * dt);
    if k <= n / 2 {
        k as f64 * df
    } else {
        (k as f64 - n as f64) * df
    }
}

pub fn bin_omega(k: usize, n: usize, dt: f64) -> f64 {
    2.0 * PI * bin_frequency(k, n, dt)
}

/// True for the unpaired Nyquist bin of an even-length transform.
pub fn is_nyquist(k: usize, n: usize) -> bool {
    n % 2 == 0 && k == n / 2
}

/// Spectral factor `exp(-iωτ)` delaying a real series by `tau`. The Nyquist
/// bin keeps only the real part so the output stays real.
pub fn delay_factor(k: usize, n: usize, dt: f64, tau: f64) -> Complex64 {
    let phase = -bin_omega(k, n, dt) * tau;
    if is_nyquist(k, n) || k == 0 {
        Complex64::new(phase.cos(), 0.0)
    } else {
        Complex64::from_polar(1.0, phase)
    }
}

/// Weight of bin `k` when summing one-sided power: DC and Nyquist once,
/// all other non-negative bins twice.
pub fn one_sided_weight(k: usize, n: usize) -> f64 {
    if k == 0 || is_nyquist(k, n) {
        1.0
    } else {
        2.0
    }
}
