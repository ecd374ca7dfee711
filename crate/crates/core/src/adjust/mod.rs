//! Post-processing adjustments of the negative-polarity HF field before
//! forming the SURF difference `sΔ = s₊ − ŝ₋`.
//!
//! Two adjustments are provided: a pure time shift `τ_a` and a Wiener
//! equalizer designed from the on-axis series at one reference depth.

mod envelope;
mod equalizer;
mod shift;

pub use envelope::{analytic_envelope, AnalyticSignal};
pub use equalizer::{apply_equalizer, design_equalizer, equalize_series, Equalizer, GuardBand, DEFAULT_EPSILON};
pub use shift::{estimate_shift_map, DelayEstimate, DelayEstimator, EstimatorScratch, ShiftMap, LOW_CONFIDENCE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldCube, FieldKind};
use crate::spectral::{delay_factor, Fourier};

/// Default correlation window for delay estimation, seconds.
pub const DEFAULT_WINDOW: f64 = 2.4e-6;

/// One adjustment applied to `s₋`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "AdjustmentRecord", try_from = "AdjustmentRecord")]
pub enum AdjustmentSpec {
    PureDelay {
        /// Seconds; positive values delay `s₋`.
        tau_a: f64,
        /// Depth the delay was chosen for, if any.
        z_a: Option<f64>,
    },
    Equalizer(Equalizer),
}

impl AdjustmentSpec {
    pub fn z_a(&self) -> Option<f64> {
        match self {
            AdjustmentSpec::PureDelay { z_a, .. } => *z_a,
            AdjustmentSpec::Equalizer(eq) => Some(eq.z_a),
        }
    }

    /// Check the delay search bound `|τ_a| ≤ 1/f_H`.
    pub fn validate(&self, f_h: f64) -> Result<()> {
        match self {
            AdjustmentSpec::PureDelay { tau_a, .. } if tau_a.abs() > 1.0 / f_h || !tau_a.is_finite() => {
                Err(Error::DelayTooLarge {
                    tau: *tau_a,
                    limit: 1.0 / f_h,
                })
            }
            AdjustmentSpec::Equalizer(eq) if eq.response.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) => {
                Err(Error::NonFinite("equalizer response".into()))
            }
            _ => Ok(()),
        }
    }

    /// Apply to a field, producing the adjusted `ŝ₋`.
    pub fn apply(&self, field: &FieldCube) -> Result<FieldCube> {
        match self {
            AdjustmentSpec::PureDelay { tau_a, .. } => apply_delay(field, *tau_a),
            AdjustmentSpec::Equalizer(eq) => apply_equalizer(field, eq),
        }
    }
}

/// Serialized form: delays in ns, depths in mm, the equalizer as a table of
/// in-band `(f_hz, re, im)` rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
enum AdjustmentRecord {
    PureDelay {
        tau_a_ns: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_a_mm: Option<f64>,
    },
    Equalizer {
        z_a_mm: f64,
        epsilon: f64,
        nt: usize,
        dt_ns: f64,
        band_hz: [f64; 2],
        response: Vec<[f64; 3]>,
    },
}

impl From<AdjustmentSpec> for AdjustmentRecord {
    fn from(a: AdjustmentSpec) -> Self {
        match a {
            AdjustmentSpec::PureDelay { tau_a, z_a } => AdjustmentRecord::PureDelay {
                tau_a_ns: tau_a * 1e9,
                z_a_mm: z_a.map(|z| z * 1e3),
            },
            AdjustmentSpec::Equalizer(eq) => {
                let rows = eq.table();
                AdjustmentRecord::Equalizer {
                    z_a_mm: eq.z_a * 1e3,
                    epsilon: eq.epsilon,
                    nt: eq.nt,
                    dt_ns: eq.dt * 1e9,
                    band_hz: [eq.band.f_lo, eq.band.f_hi],
                    response: rows,
                }
            }
        }
    }
}

impl TryFrom<AdjustmentRecord> for AdjustmentSpec {
    type Error = String;

    fn try_from(r: AdjustmentRecord) -> std::result::Result<Self, String> {
        match r {
            AdjustmentRecord::PureDelay { tau_a_ns, z_a_mm } => Ok(AdjustmentSpec::PureDelay {
                tau_a: tau_a_ns * 1e-9,
                z_a: z_a_mm.map(|z| z * 1e-3),
            }),
            AdjustmentRecord::Equalizer {
                z_a_mm,
                epsilon,
                nt,
                dt_ns,
                band_hz,
                response,
            } => Equalizer::from_table(
                z_a_mm * 1e-3,
                epsilon,
                nt,
                dt_ns * 1e-9,
                GuardBand {
                    f_lo: band_hz[0],
                    f_hi: band_hz[1],
                },
                &response,
            )
            .map(AdjustmentSpec::Equalizer)
            .map_err(|e| e.to_string()),
        }
    }
}

/// Delay every series by `tau_a` through the spectral phase ramp
/// `exp(−iω τ_a)`. Output kind is `ADJUSTED`.
pub fn apply_delay(field: &FieldCube, tau_a: f64) -> Result<FieldCube> {
    let g = *field.grid();
    let limit = g.nt as f64 * g.dt / 4.0;
    if !tau_a.is_finite() || tau_a.abs() >= limit {
        return Err(Error::DelayTooLarge { tau: tau_a, limit });
    }
    let prov = format!("delay {:.4} ns of {}", tau_a * 1e9, field.kind());
    if tau_a == 0.0 {
        return Ok(field.relabel(FieldKind::Adjusted, prov));
    }
    let fourier = Fourier::new(g.nt);
    let factors: Vec<_> = (0..g.nt).map(|k| delay_factor(k, g.nt, g.dt, tau_a)).collect();
    let samples = field.map_series(
        || (fourier.scratch(), vec![0.0; g.nt]),
        |(ws, out), _, src, dst| {
            fourier.forward(src, ws);
            for (b, f) in ws.buf.iter_mut().zip(&factors) {
                *b *= f;
            }
            fourier.inverse_real(ws, out);
            for (d, &v) in dst.iter_mut().zip(out.iter()) {
                *d = v as f32;
            }
        },
    );
    FieldCube::new(g, FieldKind::Adjusted, samples, prov)
}

/// Fractional delay of one `f64` series; the series-level kernel of
/// [`apply_delay`].
pub fn delay_series(x: &[f64], dt: f64, tau_a: f64) -> Vec<f64> {
    let n = x.len();
    let fourier = Fourier::new(n);
    let mut ws = fourier.scratch();
    fourier.forward(x, &mut ws);
    for (k, b) in ws.buf.iter_mut().enumerate() {
        *b *= delay_factor(k, n, dt, tau_a);
    }
    let mut out = vec![0.0; n];
    fourier.inverse_real(&mut ws, &mut out);
    out
}

/// `sΔ = s₊ − ŝ₋`, sample-wise.
pub fn surf_difference(s_plus: &FieldCube, s_minus_adj: &FieldCube) -> Result<FieldCube> {
    if !s_plus.same_grid(s_minus_adj) {
        return Err(Error::GridMismatch);
    }
    let samples = s_plus
        .samples()
        .iter()
        .zip(s_minus_adj.samples())
        .map(|(&a, &b)| (f64::from(a) - f64::from(b)) as f32)
        .collect();
    FieldCube::new(
        *s_plus.grid(),
        FieldKind::Difference,
        samples,
        format!("{} - {}", s_plus.kind(), s_minus_adj.provenance()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{create_grid, Grid, GridConfig};

    fn grid(nz: usize, nr: usize, nt: usize) -> Grid {
        create_grid(
            &GridConfig {
                nz,
                dz: 1e-3,
                z0: 0.0,
                nr,
                dr: 1e-3,
                nt,
                dt: 10e-9,
                t0: None,
            },
            14e6,
        )
        .unwrap()
    }

    fn burst_cube(g: Grid) -> FieldCube {
        let mut s = Vec::with_capacity(g.len());
        for iz in 0..g.nz {
            for ir in 0..g.nr {
                for it in 0..g.nt {
                    let t = g.t(it) - (iz as f64 * 7.0 + ir as f64 * 3.0) * 1e-9;
                    s.push((-(t / 0.4e-6).powi(2)).exp() * (2.0 * std::f64::consts::PI * 3.5e6 * t).cos() * 1e6);
                }
            }
        }
        FieldCube::from_f64(g, FieldKind::HfMinus, &s, "test").unwrap()
    }

    #[test]
    fn zero_delay_is_bitwise_identity() {
        let c = burst_cube(grid(2, 2, 512));
        let d = apply_delay(&c, 0.0).unwrap();
        assert!(d.bitwise_eq(&c));
        assert_eq!(d.kind(), FieldKind::Adjusted);
    }

    #[test]
    fn integer_delay_matches_index_roll() {
        let (nt, dt) = (512, 10e-9);
        let x: Vec<f64> = (0..nt)
            .map(|i| {
                let t = (i as f64 - 256.0) * dt;
                (-(t / 0.4e-6).powi(2)).exp() * (2.0 * std::f64::consts::PI * 3.5e6 * t).cos()
            })
            .collect();
        let y = delay_series(&x, dt, 7.0 * dt);
        let mut rolled = x.clone();
        rolled.rotate_right(7);
        let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in y.iter().zip(&rolled) {
            assert!((a - b).abs() < 1e-9 * peak);
        }
    }

    #[test]
    fn delay_round_trip_restores_series() {
        // band-limited: the unpaired Nyquist bin cannot carry a delay
        let x: Vec<f64> = (0..256)
            .map(|i| {
                let t = (i as f64 - 128.0) * 1e-8;
                (-(t / 0.3e-6).powi(2)).exp() * (2.0 * std::f64::consts::PI * 5e6 * t).sin()
            })
            .collect();
        let back = delay_series(&delay_series(&x, 1e-8, 3.3e-8), 1e-8, -3.3e-8);
        let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9 * peak);
        }
    }

    #[test]
    fn cube_delay_round_trip_is_storage_exact() {
        let c = burst_cube(grid(2, 3, 512));
        let back = apply_delay(&apply_delay(&c, 23.7e-9).unwrap(), -23.7e-9).unwrap();
        let peak = 1e6_f64;
        for (a, b) in c.samples().iter().zip(back.samples()) {
            // two f32 roundings
            assert!((f64::from(*a) - f64::from(*b)).abs() < 4.0 * f64::from(f32::EPSILON) * peak);
        }
    }

    #[test]
    fn delay_bound_is_enforced() {
        let c = burst_cube(grid(1, 1, 512));
        let limit = 512.0 * 10e-9 / 4.0;
        let err = apply_delay(&c, limit).unwrap_err();
        assert_eq!(err.code(), "DELAY_TOO_LARGE");
        assert!(apply_delay(&c, 0.99 * limit).is_ok());
    }

    #[test]
    fn difference_of_equal_fields_is_zero() {
        let c = burst_cube(grid(2, 2, 256));
        let d = surf_difference(&c, &c).unwrap();
        assert!(d.samples().iter().all(|&v| v == 0.0));
        assert_eq!(d.kind(), FieldKind::Difference);
        let zero = FieldCube::constant(*c.grid(), FieldKind::Adjusted, 0.0).unwrap();
        assert!(surf_difference(&c, &zero).unwrap().samples() == c.samples());
        let other = burst_cube(grid(2, 3, 256));
        assert_eq!(surf_difference(&c, &other).unwrap_err().code(), "GRID_MISMATCH");
    }

    #[test]
    fn pure_delay_serializes_in_ns_and_mm() {
        let a = AdjustmentSpec::PureDelay {
            tau_a: 7.1e-9,
            z_a: Some(0.03),
        };
        let text = serde_json::to_string(&a).unwrap();
        assert!(text.contains("\"variant\":\"PURE_DELAY\""), "{text}");
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!((v["tau_a_ns"].as_f64().unwrap() - 7.1).abs() < 1e-9);
        assert!((v["z_a_mm"].as_f64().unwrap() - 30.0).abs() < 1e-9);
        let back: AdjustmentSpec = serde_json::from_str(&text).unwrap();
        match back {
            AdjustmentSpec::PureDelay { tau_a, z_a } => {
                assert!((tau_a - 7.1e-9).abs() < 1e-20);
                assert!((z_a.unwrap() - 0.03).abs() < 1e-15);
            }
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn delay_search_bound() {
        let a = AdjustmentSpec::PureDelay {
            tau_a: 300e-9,
            z_a: None,
        };
        assert_eq!(a.validate(3.5e6).unwrap_err().code(), "DELAY_TOO_LARGE");
        let a = AdjustmentSpec::PureDelay {
            tau_a: 280e-9,
            z_a: None,
        };
        assert!(a.validate(3.5e6).is_ok());
    }
}
