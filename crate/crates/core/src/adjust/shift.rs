//! Inter-polarity delay estimation by windowed cross-correlation.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldCube;
use crate::grid::Grid;
use crate::spectral::{FftScratch, Fourier};

/// Below this normalised correlation peak an estimate is flagged.
pub const LOW_CONFIDENCE: f64 = 0.5;

/// Fraction of the window taken by each cosine taper.
const TAPER: f64 = 0.25;

/// Estimated delay `τ(z, r)` between two HF fields; `τ > 0` means the
/// first (`s₊`) arrives earlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftMap {
    pub grid: Grid,
    /// Seconds, `[z][r]`.
    pub tau: Vec<f64>,
    /// Normalised correlation peak in `[0, 1]`, `[z][r]`.
    pub confidence: Vec<f64>,
}

impl ShiftMap {
    pub fn tau_at(&self, iz: usize, ir: usize) -> f64 {
        self.tau[iz * self.grid.nr + ir]
    }

    pub fn confidence_at(&self, iz: usize, ir: usize) -> f64 {
        self.confidence[iz * self.grid.nr + ir]
    }

    pub fn low_confidence(&self, iz: usize, ir: usize) -> bool {
        self.confidence_at(iz, ir) < LOW_CONFIDENCE
    }

    /// On-axis delay curve.
    pub fn on_axis(&self) -> Vec<f64> {
        (0..self.grid.nz).map(|iz| self.tau_at(iz, 0)).collect()
    }
}

/// Single-series estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    pub tau: f64,
    pub confidence: f64,
}

/// Reusable state for [`DelayEstimator::estimate`].
pub struct EstimatorScratch {
    a: FftScratch,
    b: Vec<Complex64>,
    cross: Vec<Complex64>,
    windowed: Vec<f64>,
    corr: Vec<f64>,
}

/// Windowed cross-correlation delay estimator with sub-sample refinement.
#[derive(Debug, Clone)]
pub struct DelayEstimator {
    fourier: Fourier,
    nt: usize,
    dt: f64,
    /// Window length in samples.
    width: usize,
}

impl DelayEstimator {
    pub fn new(nt: usize, dt: f64, window: f64) -> Result<Self> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::NonPositive {
                field: "window",
                value: window,
            });
        }
        let width = (window / dt).round() as usize;
        if width < 4 || width >= nt {
            return Err(Error::InvalidParameter {
                field: "window",
                reason: format!("window of {width} samples must span 4..{nt} samples"),
            });
        }
        Ok(DelayEstimator {
            fourier: Fourier::new(nt),
            nt,
            dt,
            width,
        })
    }

    pub fn scratch(&self) -> EstimatorScratch {
        EstimatorScratch {
            a: self.fourier.scratch(),
            b: vec![Complex64::default(); self.nt],
            cross: vec![Complex64::default(); self.nt],
            windowed: vec![0.0; self.nt],
            corr: vec![0.0; self.nt],
        }
    }

    /// Flat-top window weight at circular distance `d` (samples) from the
    /// window centre.
    fn weight(&self, d: f64) -> f64 {
        let half = self.width as f64 / 2.0;
        let flat = half * (1.0 - 2.0 * TAPER);
        let d = d.abs();
        if d <= flat {
            1.0
        } else if d >= half {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (d - flat) / (half - flat)).cos())
        }
    }

    /// Band-limited cross-correlation at fractional lag `x` (samples).
    fn corr_at(&self, cross: &[Complex64], x: f64) -> f64 {
        let n = self.nt;
        let mut acc = cross[0].re;
        let step = 2.0 * std::f64::consts::PI * x / n as f64;
        for (k, c) in cross.iter().enumerate().take(n.div_ceil(2)).skip(1) {
            let (s, co) = (step * k as f64).sin_cos();
            acc += 2.0 * (c.re * co - c.im * s);
        }
        if n % 2 == 0 {
            acc += cross[n / 2].re * (std::f64::consts::PI * x).cos();
        }
        acc / n as f64
    }

    pub fn estimate<A, B>(&self, plus: &[A], minus: &[B], sc: &mut EstimatorScratch) -> DelayEstimate
    where
        A: Copy + Into<f64>,
        B: Copy + Into<f64>,
    {
        let n = self.nt;
        let mut e = 0.0;
        let mut moment = 0.0;
        for (i, &v) in plus.iter().enumerate() {
            let v: f64 = v.into();
            e += v * v;
            moment += v * v * i as f64;
        }
        let e_minus: f64 = minus.iter().map(|&v| v.into().powi(2)).sum();
        if e == 0.0 || e_minus == 0.0 {
            return DelayEstimate {
                tau: 0.0,
                confidence: 0.0,
            };
        }
        let centre = moment / e;
        let mut ew = 0.0;
        for (i, (w, &v)) in sc.windowed.iter_mut().zip(plus).enumerate() {
            let g = self.weight(circular(i as f64 - centre, n));
            let v: f64 = v.into();
            *w = g * v;
            ew += *w * *w;
        }
        self.fourier.forward(&sc.windowed, &mut sc.a);
        sc.b.copy_from_slice(&sc.a.buf);
        self.fourier.forward(minus, &mut sc.a);
        for k in 0..n {
            sc.cross[k] = sc.b[k].conj() * sc.a.buf[k];
        }
        sc.a.buf.copy_from_slice(&sc.cross);
        self.fourier.inverse_real(&mut sc.a, &mut sc.corr);

        // integer peak within ±width/2, ties to the smallest |lag|
        let reach = (self.width / 2) as isize;
        let mut best = (0isize, f64::NEG_INFINITY);
        for mag in 0..=reach {
            for lag in [mag, -mag] {
                let v = sc.corr[lag.rem_euclid(n as isize) as usize];
                if v > best.1 {
                    best = (lag, v);
                }
                if mag == 0 {
                    break;
                }
            }
        }
        let l0 = best.0;
        // Window s- too, following the coarse lag, so that two identical
        // pulses correlate symmetrically about zero.
        let mut em = 0.0;
        for (i, (w, &v)) in sc.windowed.iter_mut().zip(minus).enumerate() {
            let g = self.weight(circular(i as f64 - centre - l0 as f64, n));
            let v: f64 = v.into();
            *w = g * v;
            em += *w * *w;
        }
        self.fourier.forward(&sc.windowed, &mut sc.a);
        for k in 0..n {
            sc.cross[k] = sc.b[k].conj() * sc.a.buf[k];
        }
        sc.a.buf.copy_from_slice(&sc.cross);
        self.fourier.inverse_real(&mut sc.a, &mut sc.corr);
        let at = |l: isize| sc.corr[l.rem_euclid(n as isize) as usize];
        let mut x = l0 as f64 + parabola_vertex(at(l0 - 1), at(l0), at(l0 + 1));
        // repeat the parabolic fit on the band-limited correlation at
        // shrinking spacings to remove the coarse-sampling bias
        for h in [0.125, 1.0 / 64.0] {
            let c = [
                self.corr_at(&sc.cross, x - h),
                self.corr_at(&sc.cross, x),
                self.corr_at(&sc.cross, x + h),
            ];
            let step = parabola_vertex(c[0], c[1], c[2]).clamp(-1.0, 1.0);
            x += h * step;
        }
        let peak = self.corr_at(&sc.cross, x);
        let confidence = if em > 0.0 {
            (peak / (ew * em).sqrt()).clamp(0.0, 1.0)
        } else {
            0.0
        };
        DelayEstimate {
            tau: x * self.dt,
            confidence,
        }
    }
}

/// Signed circular distance of `d` on a ring of `n` samples.
fn circular(d: f64, n: usize) -> f64 {
    let n = n as f64;
    let r = d.rem_euclid(n);
    if r > n / 2.0 {
        r - n
    } else {
        r
    }
}

/// Offset of the vertex of the parabola through `(-1, a), (0, b), (1, c)`.
fn parabola_vertex(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den >= 0.0 {
        0.0
    } else {
        0.5 * (a - c) / den
    }
}

/// Per-point delay between `s_plus` and `s_minus` over a `window`
/// (seconds) centred on each `s_plus` pulse's energy centroid.
pub fn estimate_shift_map(s_plus: &FieldCube, s_minus: &FieldCube, window: f64) -> Result<ShiftMap> {
    if !s_plus.same_grid(s_minus) {
        return Err(Error::GridMismatch);
    }
    let g = *s_plus.grid();
    let est = DelayEstimator::new(g.nt, g.dt, window)?;
    let points = g.nz * g.nr;
    let results: Vec<DelayEstimate> = (0..points)
        .into_par_iter()
        .map_init(
            || est.scratch(),
            |sc, i| {
                let (iz, ir) = (i / g.nr, i % g.nr);
                est.estimate(s_plus.series(iz, ir), s_minus.series(iz, ir), sc)
            },
        )
        .collect();
    Ok(ShiftMap {
        grid: g,
        tau: results.iter().map(|r| r.tau).collect(),
        confidence: results.iter().map(|r| r.confidence).collect(),
    })
}
