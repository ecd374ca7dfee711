//! Gain-factor model, beam and energy maps, and the beam quality ratios.

mod aggregate;
mod optimize;
mod report;
mod sweep;

pub use aggregate::{Adjust, SpectralAggregates};
pub use optimize::{golden_section_max, optimize_tau, optimize_tau_fields, TauOptimum, TauSearch};
pub use report::{
    beam_csv, format_db, q_vs_tau_csv, q_za_csv, tau_opt_csv, write_beam_csv, write_report_files, ReportFiles,
};
pub use sweep::{
    sweep, AdjustmentKind, BeamRecord, FundamentalBaseline, QualityReport, QualityRow, SweepOptions, TauCurvePoint,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldCube;
use crate::grid::Grid;

/// `G = 2 sin(ω0 τ / 2)`: narrowband amplitude of the difference field
/// relative to the unmanipulated pulse.
pub fn gain_factor(omega0: f64, tau_total: f64) -> f64 {
    2.0 * (omega0 * tau_total / 2.0).sin()
}

/// Phase in degrees equivalent to a delay `tau` at frequency `f`.
pub fn delay_phase_equiv(tau: f64, f: f64) -> f64 {
    360.0 * f * tau
}

/// Narrowband estimate of `max_t |sΔ|` from the reference envelope peak.
pub fn predicted_difference_peak(s_zero_env_peak: f64, g: f64) -> f64 {
    g.abs() * s_zero_env_peak
}

/// Quadrature weight of radial sample `ir` over the full circle.
pub fn radial_weight(grid: &Grid, ir: usize) -> f64 {
    if ir == 0 {
        std::f64::consts::PI * (grid.dr / 2.0).powi(2)
    } else {
        2.0 * std::f64::consts::PI * grid.r(ir) * grid.dr
    }
}

pub fn radial_weights(grid: &Grid) -> Vec<f64> {
    (0..grid.nr).map(|ir| radial_weight(grid, ir)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamMode {
    Rms,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Normalization {
    None,
    /// Divided by the map's own maximum.
    Peak {
        reference: f64,
    },
    /// Scaled against an external reference level. The applied factor is
    /// the power of two `scale`, so maps sharing a reference keep their
    /// ratios exactly; `reference * scale` is the level of the reference in
    /// the scaled units.
    Common {
        reference: f64,
        scale: f64,
    },
}

/// Per-`(z, r)` reduction over time of one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamMap {
    pub grid: Grid,
    pub mode: BeamMode,
    pub normalization: Normalization,
    /// `[z][r]`, non-negative.
    pub values: Vec<f64>,
}

impl BeamMap {
    pub fn at(&self, iz: usize, ir: usize) -> f64 {
        self.values[iz * self.grid.nr + ir]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, &v| m.max(v))
    }

    /// Copy scaled so that the maximum is exactly 1.
    pub fn normalized_peak(&self) -> BeamMap {
        let raw = self.raw_values();
        let peak = raw.iter().fold(0.0_f64, |m, &v| m.max(v));
        let values = if peak > 0.0 {
            raw.iter().map(|v| v / peak).collect()
        } else {
            raw
        };
        BeamMap {
            grid: self.grid,
            mode: self.mode,
            normalization: Normalization::Peak { reference: peak },
            values,
        }
    }

    /// Copy scaled against `reference` (see [`Normalization::Common`]).
    pub fn normalized_common(&self, reference: f64) -> BeamMap {
        let scale = if reference > 0.0 && reference.is_finite() {
            2f64.powi(-(reference.log2().ceil() as i32))
        } else {
            1.0
        };
        BeamMap {
            grid: self.grid,
            mode: self.mode,
            normalization: Normalization::Common { reference, scale },
            values: self.raw_values().iter().map(|v| v * scale).collect(),
        }
    }

    /// Values in the field's own units, undoing any normalization.
    pub fn raw_values(&self) -> Vec<f64> {
        match self.normalization {
            Normalization::None => self.values.clone(),
            Normalization::Peak { reference } if reference > 0.0 => self.values.iter().map(|v| v * reference).collect(),
            Normalization::Peak { .. } => self.values.clone(),
            Normalization::Common { scale, .. } => self.values.iter().map(|v| v / scale).collect(),
        }
    }

    /// Levels in dB (`20 log10`) relative to the normalization reference,
    /// floored at `floor_db`.
    pub fn db(&self, floor_db: f64) -> Vec<f64> {
        let unit = match self.normalization {
            Normalization::None => 1.0,
            Normalization::Peak { .. } => 1.0,
            Normalization::Common { reference, scale } => reference * scale,
        };
        self.values
            .iter()
            .map(|&v| {
                let x = if unit > 0.0 { v / unit } else { v };
                if x > 0.0 {
                    (20.0 * x.log10()).max(floor_db)
                } else {
                    floor_db
                }
            })
            .collect()
    }
}

fn series_rms(s: &[f32]) -> f64 {
    (s.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
}

fn series_max(s: &[f32]) -> f64 {
    s.iter().fold(0.0_f64, |m, &v| m.max(f64::from(v).abs()))
}

pub fn beam_map(field: &FieldCube, mode: BeamMode) -> BeamMap {
    let g = *field.grid();
    let f = match mode {
        BeamMode::Rms => series_rms,
        BeamMode::Max => series_max,
    };
    let values = (0..g.nz)
        .flat_map(|iz| (0..g.nr).map(move |ir| (iz, ir)))
        .map(|(iz, ir)| f(field.series(iz, ir)))
        .collect();
    BeamMap {
        grid: g,
        mode,
        normalization: Normalization::None,
        values,
    }
}

/// Beam map of `s₊ − adjust(s₋)` computed series by series, without
/// materializing the adjusted and difference cubes. Samples are rounded to
/// `f32` at the same points as [`crate::adjust::apply_delay`] +
/// [`crate::adjust::surf_difference`], so the result matches that pipeline
/// bit for bit.
pub fn difference_beam_map(
    s_plus: &FieldCube,
    s_minus: &FieldCube,
    adjust: Adjust<'_>,
    mode: BeamMode,
) -> Result<BeamMap> {
    use crate::spectral::{delay_factor, Fourier};
    use num_complex::Complex64;
    use rayon::prelude::*;

    if !s_plus.same_grid(s_minus) {
        return Err(Error::GridMismatch);
    }
    let g = *s_plus.grid();
    let factors: Option<Vec<Complex64>> = match adjust {
        Adjust::None => None,
        Adjust::Delay(tau) => {
            let limit = g.nt as f64 * g.dt / 4.0;
            if !tau.is_finite() || tau.abs() >= limit {
                return Err(Error::DelayTooLarge { tau, limit });
            }
            (tau != 0.0).then(|| (0..g.nt).map(|k| delay_factor(k, g.nt, g.dt, tau)).collect())
        }
        Adjust::Equalizer(eq) => {
            if eq.nt != g.nt || eq.dt != g.dt {
                return Err(Error::GridMismatch);
            }
            Some((0..g.nt).map(|k| eq.at(k)).collect())
        }
    };
    let skip_silent = matches!(adjust, Adjust::Equalizer(_));
    let reduce = match mode {
        BeamMode::Rms => series_rms,
        BeamMode::Max => series_max,
    };
    let fourier = Fourier::new(g.nt);
    let values = (0..g.nz * g.nr)
        .into_par_iter()
        .map_init(
            || (fourier.scratch(), vec![0.0; g.nt], vec![0.0f32; g.nt]),
            |(ws, out, diff), i| {
                let (iz, ir) = (i / g.nr, i % g.nr);
                let (a, b) = (s_plus.series(iz, ir), s_minus.series(iz, ir));
                match &factors {
                    Some(h) if !(skip_silent && b.iter().all(|&v| v == 0.0)) => {
                        fourier.forward(b, ws);
                        for (x, f) in ws.buf.iter_mut().zip(h) {
                            *x *= f;
                        }
                        fourier.inverse_real(ws, out);
                        for ((d, &p), &m) in diff.iter_mut().zip(a).zip(out.iter()) {
                            *d = (f64::from(p) - f64::from(m as f32)) as f32;
                        }
                    }
                    Some(_) => {
                        for (d, &p) in diff.iter_mut().zip(a) {
                            *d = (f64::from(p) - 0.0) as f32;
                        }
                    }
                    None => {
                        for ((d, &p), &m) in diff.iter_mut().zip(a).zip(b) {
                            *d = (f64::from(p) - f64::from(m)) as f32;
                        }
                    }
                }
                reduce(diff)
            },
        )
        .collect();
    Ok(BeamMap {
        grid: g,
        mode,
        normalization: Normalization::None,
        values,
    })
}

/// `E(z, r) = Σ_t p² dt`, Pa²·s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyMap {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl EnergyMap {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Self {
        EnergyMap { grid, values }
    }

    pub fn at(&self, iz: usize, ir: usize) -> f64 {
        self.values[iz * self.grid.nr + ir]
    }

    /// `Σ_r w_r E(z, r)` for slice `iz`.
    pub fn slice_energy(&self, iz: usize) -> f64 {
        (0..self.grid.nr)
            .map(|ir| radial_weight(&self.grid, ir) * self.at(iz, ir))
            .sum()
    }

    pub fn scaled(&self, c: f64) -> EnergyMap {
        EnergyMap {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

pub fn energy_map(field: &FieldCube) -> EnergyMap {
    let g = *field.grid();
    let values = (0..g.nz)
        .flat_map(|iz| (0..g.nr).map(move |ir| (iz, ir)))
        .map(|(iz, ir)| field.series(iz, ir).iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() * g.dt)
        .collect();
    EnergyMap { grid: g, values }
}

/// Depth interval `[z_n, z_f)` used for imaging, m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingRegion {
    pub z_n: f64,
    pub z_f: f64,
}

impl Default for ImagingRegion {
    fn default() -> Self {
        ImagingRegion {
            z_n: 60e-3,
            z_f: 130e-3,
        }
    }
}

impl ImagingRegion {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let slop = 1e-9 * grid.dz;
        if !(self.z_n > 0.0 && self.z_n < self.z_f && self.z_f <= grid.z_max() + slop) {
            return Err(Error::InvalidParameter {
                field: "region",
                reason: format!(
                    "need 0 < z_n < z_f <= {:.3} mm, got [{:.3}, {:.3}] mm",
                    grid.z_max() * 1e3,
                    self.z_n * 1e3,
                    self.z_f * 1e3
                ),
            });
        }
        Ok(())
    }

    /// Slice indices inside the region. Each slice stands for the cell
    /// `[z, z + dz)`.
    pub fn slices(&self, grid: &Grid) -> Vec<usize> {
        let slop = 1e-9 * grid.dz;
        (0..grid.nz)
            .filter(|&iz| {
                let z = grid.z(iz);
                z >= self.z_n - slop && z < self.z_f - slop
            })
            .collect()
    }

    /// Slice indices of the near field `[0, z_n)`.
    pub fn near_slices(&self, grid: &Grid) -> Vec<usize> {
        let slop = 1e-9 * grid.dz;
        (0..grid.nz).filter(|&iz| grid.z(iz) < self.z_n - slop).collect()
    }
}

/// A quality ratio in dB. A zero denominator yields `+∞` with the flag set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QValue {
    #[serde(with = "nullable_f64")]
    pub db: f64,
    pub zero_denominator: bool,
}

impl QValue {
    pub fn from_ratio(num: f64, den: f64) -> QValue {
        if den <= 0.0 {
            QValue {
                db: f64::INFINITY,
                zero_denominator: true,
            }
        } else {
            QValue {
                db: 10.0 * (num / den).log10(),
                zero_denominator: false,
            }
        }
    }
}

pub(crate) mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Ratio of region energy to the energy of slice `z_a` (nearest slice),
/// both per unit of depth.
pub fn quality_specific(e: &EnergyMap, region: &ImagingRegion, z_a: f64) -> Result<QValue> {
    region.validate(&e.grid)?;
    let slice_energy: Vec<f64> = (0..e.grid.nz).map(|iz| e.slice_energy(iz)).collect();
    Ok(quality_specific_from_slices(
        &slice_energy,
        &e.grid,
        region,
        e.grid.nearest_z(z_a),
    ))
}

/// Ratio of region energy to near-field energy.
pub fn quality_general(e: &EnergyMap, region: &ImagingRegion) -> Result<QValue> {
    region.validate(&e.grid)?;
    let slice_energy: Vec<f64> = (0..e.grid.nz).map(|iz| e.slice_energy(iz)).collect();
    Ok(quality_general_from_slices(&slice_energy, &e.grid, region))
}

pub(crate) fn quality_specific_from_slices(slices: &[f64], grid: &Grid, region: &ImagingRegion, iz_a: usize) -> QValue {
    let num: f64 = region.slices(grid).iter().map(|&iz| slices[iz] * grid.dz).sum();
    QValue::from_ratio(num, slices[iz_a] * grid.dz)
}

pub(crate) fn quality_general_from_slices(slices: &[f64], grid: &Grid, region: &ImagingRegion) -> QValue {
    let num: f64 = region.slices(grid).iter().map(|&iz| slices[iz] * grid.dz).sum();
    let den: f64 = region.near_slices(grid).iter().map(|&iz| slices[iz] * grid.dz).sum();
    QValue::from_ratio(num, den)
}
