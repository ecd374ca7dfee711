//! Wiener equalizer making `s₋` match `s₊` on-axis at one depth.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldCube, FieldKind, TimeSeries};
use crate::medium::PulseComplexSpec;
use crate::spectral::{bin_frequency, is_nyquist, Fourier};

/// Default regularisation, as a fraction of the peak reference power.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Frequency interval (Hz, inclusive) where the equalizer may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardBand {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl GuardBand {
    /// `f_H (1 ± bw_H)`.
    pub fn for_pulse(spec: &PulseComplexSpec) -> Self {
        GuardBand {
            f_lo: (spec.f_h * (1.0 - spec.bw_h)).max(0.0),
            f_hi: spec.f_h * (1.0 + spec.bw_h),
        }
    }

    /// Every frequency up to `f_max`.
    pub fn all(f_max: f64) -> Self {
        GuardBand { f_lo: 0.0, f_hi: f_max }
    }

    pub fn contains(&self, f: f64) -> bool {
        let f = f.abs();
        f >= self.f_lo && f <= self.f_hi
    }
}

/// Filter response on the one-sided bins `0..=nt/2` of one time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalizer {
    /// Reference depth, m.
    pub z_a: f64,
    pub epsilon: f64,
    pub nt: usize,
    pub dt: f64,
    pub band: GuardBand,
    pub response: Vec<Complex64>,
}

impl Equalizer {
    /// `H ≡ 1` on every bin.
    pub fn identity(nt: usize, dt: f64) -> Self {
        Equalizer {
            z_a: 0.0,
            epsilon: 0.0,
            nt,
            dt,
            band: GuardBand::all(0.5 / dt),
            response: vec![Complex64::new(1.0, 0.0); nt / 2 + 1],
        }
    }

    /// Full-length (two-sided) response at bin `k`.
    pub fn at(&self, k: usize) -> Complex64 {
        let h = if k <= self.nt / 2 {
            self.response[k]
        } else {
            self.response[self.nt - k].conj()
        };
        if k == 0 || is_nyquist(k, self.nt) {
            Complex64::new(h.re, 0.0)
        } else {
            h
        }
    }

    /// In-band `(f_hz, re, im)` rows.
    pub fn table(&self) -> Vec<[f64; 3]> {
        self.response
            .iter()
            .enumerate()
            .filter(|(k, _)| self.band.contains(bin_frequency(*k, self.nt, self.dt)))
            .map(|(k, h)| [bin_frequency(k, self.nt, self.dt), h.re, h.im])
            .collect()
    }

    /// Rebuild from a serialized table; bins absent from the table are zero.
    pub fn from_table(z_a: f64, epsilon: f64, nt: usize, dt: f64, band: GuardBand, rows: &[[f64; 3]]) -> Result<Self> {
        if nt == 0 || !(dt > 0.0) {
            return Err(Error::InvalidParameter {
                field: "equalizer",
                reason: "table needs nt >= 1 and dt > 0".into(),
            });
        }
        let df = 1.0 / (nt as f64 * dt);
        let mut response = vec![Complex64::new(0.0, 0.0); nt / 2 + 1];
        for row in rows {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("equalizer response".into()));
            }
            let k = (row[0] / df).round();
            if k < 0.0 || k as usize > nt / 2 || (k * df - row[0]).abs() > 1e-6 * df {
                return Err(Error::InvalidParameter {
                    field: "equalizer.response",
                    reason: format!("{} Hz is not a bin of the {nt}-point grid", row[0]),
                });
            }
            response[k as usize] = Complex64::new(row[1], row[2]);
        }
        Ok(Equalizer {
            z_a,
            epsilon,
            nt,
            dt,
            band,
            response,
        })
    }
}

/// Wiener design `H = S₊ S₋* / (|S₋|² + ε max|S₋|²)` inside `band`, zero
/// outside. `z_a` is recorded with the filter.
pub fn design_equalizer(
    ref_plus: &TimeSeries,
    ref_minus: &TimeSeries,
    epsilon: f64,
    band: GuardBand,
    z_a: f64,
) -> Result<Equalizer> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::NonPositive {
            field: "epsilon",
            value: epsilon,
        });
    }
    if ref_plus.len() != ref_minus.len() || ref_plus.dt != ref_minus.dt || ref_plus.is_empty() {
        return Err(Error::GridMismatch);
    }
    let tiny = f64::MIN_POSITIVE.sqrt();
    if !(ref_plus.energy() > tiny) || !(ref_minus.energy() > tiny) {
        return Err(Error::SilentReference);
    }
    let n = ref_plus.len();
    let dt = ref_plus.dt;
    let fourier = Fourier::new(n);
    let mut ws = fourier.scratch();
    fourier.forward(&ref_plus.samples, &mut ws);
    let sp: Vec<Complex64> = ws.buf[..=n / 2].to_vec();
    fourier.forward(&ref_minus.samples, &mut ws);
    let sm: Vec<Complex64> = ws.buf.clone();
    let peak = sm.iter().map(|s| s.norm_sqr()).fold(0.0_f64, f64::max);
    let floor = epsilon * peak;
    let response = (0..=n / 2)
        .map(|k| {
            if band.contains(bin_frequency(k, n, dt)) {
                sp[k] * sm[k].conj() / (sm[k].norm_sqr() + floor)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(Equalizer {
        z_a,
        epsilon,
        nt: n,
        dt,
        band,
        response,
    })
}

/// Filter one series.
pub fn equalize_series(x: &[f64], eq: &Equalizer) -> Vec<f64> {
    let fourier = Fourier::new(x.len());
    let mut ws = fourier.scratch();
    fourier.forward(x, &mut ws);
    for (k, b) in ws.buf.iter_mut().enumerate() {
        *b *= eq.at(k);
    }
    let mut out = vec![0.0; x.len()];
    fourier.inverse_real(&mut ws, &mut out);
    out
}

/// Apply `H` to every series of `field`. Output kind is `ADJUSTED`.
pub fn apply_equalizer(field: &FieldCube, eq: &Equalizer) -> Result<FieldCube> {
    let g = *field.grid();
    if g.nt != eq.nt || g.dt != eq.dt {
        return Err(Error::GridMismatch);
    }
    let fourier = Fourier::new(g.nt);
    let h: Vec<Complex64> = (0..g.nt).map(|k| eq.at(k)).collect();
    let samples = field.map_series(
        || (fourier.scratch(), vec![0.0; g.nt]),
        |(ws, out), _, src, dst| {
            if src.iter().all(|&v| v == 0.0) {
                dst.fill(0.0);
                return;
            }
            fourier.forward(src, ws);
            for (b, f) in ws.buf.iter_mut().zip(&h) {
                *b *= f;
            }
            fourier.inverse_real(ws, out);
            for (d, &v) in dst.iter_mut().zip(out.iter()) {
                *d = v as f32;
            }
        },
    );
    FieldCube::new(
        g,
        FieldKind::Adjusted,
        samples,
        format!(
            "equalizer z_a={:.3} mm eps={:e} of {}",
            eq.z_a * 1e3,
            eq.epsilon,
            field.kind()
        ),
    )
}
