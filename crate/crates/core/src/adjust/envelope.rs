//! Complex envelope `s̃(t)` with `s(t) = Re{s̃(t) e^{iω0 t}}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::TimeSeries;
use crate::spectral::{bin_omega, is_nyquist, Fourier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSignal {
    pub envelope: Vec<Complex64>,
    /// Carrier, rad/s: the power-weighted spectral centroid.
    pub omega0: f64,
    pub dt: f64,
    pub t0: f64,
}

impl AnalyticSignal {
    pub fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.envelope.iter().map(|e| e.norm()).collect()
    }

    /// `Re{s̃ e^{iω0 t}}`.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.envelope
            .iter()
            .enumerate()
            .map(|(i, e)| (e * Complex64::from_polar(1.0, self.omega0 * self.t(i))).re)
            .collect()
    }

    /// Index of the envelope maximum.
    pub fn peak_index(&self) -> usize {
        self.envelope
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, e)| {
                if e.norm() > best.1 {
                    (i, e.norm())
                } else {
                    best
                }
            })
            .0
    }
}

/// Analytic signal from the one-sided spectrum, demodulated at its
/// spectral centroid.
pub fn analytic_envelope(ts: &TimeSeries) -> AnalyticSignal {
    let n = ts.len();
    let fourier = Fourier::new(n);
    let mut ws = fourier.scratch();
    fourier.forward(&ts.samples, &mut ws);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..=n / 2 {
        let p = ws.buf[k].norm_sqr();
        num += bin_omega(k, n, ts.dt) * p;
        den += p;
    }
    let omega0 = if den > 0.0 { num / den } else { 0.0 };
    for k in 0..n {
        let w = if k == 0 || is_nyquist(k, n) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        ws.buf[k] *= w;
    }
    fourier.inverse_inplace(&mut ws);
    let envelope = ws
        .buf
        .iter()
        .enumerate()
        .map(|(i, z)| z * Complex64::from_polar(1.0, -omega0 * ts.t(i)))
        .collect();
    AnalyticSignal {
        envelope,
        omega0,
        dt: ts.dt,
        t0: ts.t0,
    }
}
