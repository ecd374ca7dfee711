//! One-way axisymmetric propagation of the dual-frequency pulse complex.
//!
//! The march is operator-split per `dz_step`: angular-spectrum diffraction
//! in a Hankel basis, power-law absorption, then the LF-driven time warp of
//! each HF carrier. The LF pulse itself propagates linearly. Retarded time
//! `t' = t - z/c0` keeps every pulse inside one fixed window.

pub mod hankel;
pub mod source;
pub mod steps;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldCube, FieldKind};
use crate::grid::Grid;
use crate::medium::{LfWaveform, MediumSpec, Polarity, PulseComplexSpec};
use crate::spectral::Fourier;

pub use source::{initial_aperture_field, Apodization, Component, TimePlane};
pub use steps::{
    absorption_step, diffraction_step, nonlinear_strain_step, DiffractionOperator, RadialBasis, SpectralPlane,
};

use steps::{absorption_factors, apply_bin_factors, warp_spectral};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    /// Diffraction and LF-on-HF nonlinearity.
    #[serde(alias = "full")]
    Full,
    /// No diffraction, single on-axis series. Oracle mode.
    #[serde(alias = "plane-wave", alias = "plane_wave")]
    PlaneWave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub mode: Mode,
    /// Largest march step, m. Each output interval is split evenly.
    pub dz_step: f64,
    pub apodization: Apodization,
    /// Radius fraction where the absorbing rim starts; 1 disables it.
    pub rim_fraction: f64,
    /// Also record the LF field.
    pub record_lf: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            mode: Mode::Full,
            dz_step: 0.325e-3,
            apodization: Apodization::Rect,
            rim_fraction: 0.8,
            record_lf: false,
        }
    }
}

impl PropagationConfig {
    pub fn plane_wave() -> Self {
        PropagationConfig {
            mode: Mode::PlaneWave,
            ..PropagationConfig::default()
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dz_step > 0.0 && self.dz_step.is_finite()) {
            return Err(Error::NonPositive {
                field: "propagation.dz_step",
                value: self.dz_step,
            });
        }
        if self.dz_step > grid.dz * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter {
                field: "propagation.dz_step",
                reason: format!("step {} exceeds the output spacing {}", self.dz_step, grid.dz),
            });
        }
        if !(self.rim_fraction > 0.0 && self.rim_fraction <= 1.0) {
            return Err(Error::InvalidParameter {
                field: "propagation.rim_fraction",
                reason: format!("must be in (0, 1], got {}", self.rim_fraction),
            });
        }
        match self.apodization {
            Apodization::Tukey { fraction } if !(0.0..=1.0).contains(&fraction) => {
                return Err(Error::InvalidParameter {
                    field: "propagation.apodization",
                    reason: "Tukey fraction must be in [0, 1]".into(),
                })
            }
            Apodization::Gaussian { width } if !(width > 0.0) => {
                return Err(Error::InvalidParameter {
                    field: "propagation.apodization",
                    reason: "Gaussian width must be positive".into(),
                })
            }
            _ => {}
        }
        if self.mode == Mode::PlaneWave && grid.nr != 1 {
            return Err(Error::InvalidParameter {
                field: "grid.nr",
                reason: format!("plane-wave mode needs nr = 1, got {}", grid.nr),
            });
        }
        Ok(())
    }
}

/// Accumulated inter-polarity delay of plane waves under constant LF
/// pressure: `2 βn κ |p_L| z / c0`.
pub fn plane_wave_oracle_tau(z: f64, medium: &MediumSpec, p_l: f64) -> f64 {
    2.0 * medium.speed_coefficient() * p_l.abs() * z / medium.c0
}

/// Output of a single transmission.
#[derive(Debug, Clone)]
pub struct PulseComplexFields {
    pub hf: FieldCube,
    pub lf: Option<FieldCube>,
}

/// The three HF transmissions of one SURF run, propagated jointly.
#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub plus: FieldCube,
    pub minus: FieldCube,
    pub zero: FieldCube,
    pub lf: Option<FieldCube>,
}

/// DFT bins where a Gaussian burst at `f` with fractional bandwidth `bw`
/// exceeds `1e-6` of its peak, widened by `margin` Hz on both sides.
fn gaussian_band(f: f64, bw: f64, margin: f64, nt: usize, dt: f64) -> std::ops::Range<usize> {
    let sigma_f = bw * f / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let half = sigma_f * (2.0 * 1e6_f64.ln()).sqrt() + margin;
    let df = 1.0 / (nt as f64 * dt);
    let top = nt.div_ceil(2); // first bin that is Nyquist or negative
    let lo = (((f - half) / df).floor().max(1.0) as usize).min(top - 1);
    let hi = (((f + half) / df).ceil() as usize + 1).clamp(lo + 1, top);
    lo..hi
}

/// Raised-cosine rim weight on the basis nodes.
fn rim_weights(nodes: &[f64], radius: f64, fraction: f64) -> Vec<f64> {
    let start = fraction * radius;
    nodes
        .iter()
        .map(|&r| {
            if fraction >= 1.0 || r <= start {
                1.0
            } else {
                0.5 * (1.0
                    + (std::f64::consts::PI * (r - start) / (radius - start))
                        .min(std::f64::consts::PI)
                        .cos())
            }
        })
        .collect()
}

enum LfState {
    Off,
    Constant(Vec<f64>),
    Spectral(SpectralPlane),
}

struct Recorder {
    interp: DMatrix<f64>,
    samples: Vec<f32>,
}

impl Recorder {
    fn new(interp: DMatrix<f64>, grid: &Grid) -> Self {
        Recorder {
            interp,
            samples: vec![0.0; grid.len()],
        }
    }

    fn record(&mut self, plane: &SpectralPlane, iz: usize, grid: &Grid, fourier: &Fourier) {
        let uniform = &self.interp * plane.data();
        let mut ws = fourier.scratch();
        let mut row = vec![0.0; grid.nt];
        let nb = plane.bins();
        let band = plane.band();
        for ir in 0..grid.nr {
            ws.buf.fill(num_complex::Complex64::new(0.0, 0.0));
            for b in 0..nb {
                let k = band.start + b;
                let v = num_complex::Complex64::new(uniform[(ir, 2 * b)], uniform[(ir, 2 * b + 1)]);
                ws.buf[k] = v;
                ws.buf[grid.nt - k] = v.conj();
            }
            fourier.inverse_real(&mut ws, &mut row);
            let off = grid.offset(iz, ir);
            for (d, &v) in self.samples[off..off + grid.nt].iter_mut().zip(&row) {
                *d = v as f32;
            }
        }
    }

    fn record_constant(&mut self, values: &[f64], iz: usize, grid: &Grid) {
        // constant LF only exists on the single plane-wave node
        let off = grid.offset(iz, 0);
        self.samples[off..off + grid.nt]
            .iter_mut()
            .for_each(|d| *d = values[0] as f32);
    }
}

fn provenance(spec: &PulseComplexSpec, medium: &MediumSpec, grid: &Grid, config: &PropagationConfig) -> String {
    let text = serde_json::to_string(&(spec, medium, grid, config)).unwrap_or_default();
    let hash = crate::store::crc32(text.as_bytes());
    let mode = match config.mode {
        Mode::Full => "FULL",
        Mode::PlaneWave => "PLANE_WAVE",
    };
    format!("propagator {mode} dz_step={:e}; config {hash:08x}", config.dz_step)
}

/// Joint march of several HF carriers sharing one LF pulse. `signs` scales
/// the warp of each carrier (`+1`, `-1` or `0`).
fn march(
    spec: &PulseComplexSpec,
    medium: &MediumSpec,
    grid: &Grid,
    config: &PropagationConfig,
    signs: &[f64],
) -> Result<(Vec<Vec<f32>>, Option<Vec<f32>>)> {
    spec.validate()?;
    medium.validate()?;
    grid.validate()?;
    config.validate(grid)?;
    if spec.f_max() > 1.0 / (2.0 * grid.dt) {
        return Err(Error::UnderSampled {
            dt: grid.dt,
            limit: 1.0 / (2.0 * spec.f_max()),
        });
    }
    let lf_on = spec.polarity != Polarity::Off && spec.p0_l != 0.0;
    if spec.lf_waveform == LfWaveform::Constant && config.mode != Mode::PlaneWave {
        return Err(Error::InvalidParameter {
            field: "pulse.lf_waveform",
            reason: "a constant LF pressure is only defined for plane-wave runs".into(),
        });
    }

    let basis = match config.mode {
        Mode::PlaneWave => RadialBasis::axis(),
        Mode::Full => {
            let extent = grid.radial_extent();
            if 2.0 * spec.a_l > extent * (1.0 + 1e-12) {
                return Err(Error::ApertureExceedsGrid {
                    radius: spec.a_l,
                    extent,
                });
            }
            RadialBasis::hankel(grid.nr, extent)
        }
    };
    let (nt, dt) = (grid.nt, grid.dt);
    let fourier = Fourier::new(nt);
    let nodes = basis.nodes().to_vec();
    let rim = rim_weights(&nodes, grid.radial_extent(), config.rim_fraction);
    let use_rim = !basis.is_axis() && rim.iter().any(|&w| w != 1.0);

    let margin = if lf_on { 4.0 * spec.f_l } else { 0.0 };
    let hf_band = gaussian_band(spec.f_h, spec.bw_h, margin, nt, dt);
    let hf_source = source::source_on_radii(spec, medium, grid, Component::Hf, config.apodization, &nodes);
    let hf0 = SpectralPlane::from_time(&hf_source, basis.scale(), dt, hf_band, &fourier);
    let mut carriers: Vec<SpectralPlane> = signs.iter().map(|_| hf0.clone()).collect();

    let mut lf = if !lf_on {
        LfState::Off
    } else if spec.lf_waveform == LfWaveform::Constant {
        LfState::Constant(vec![spec.polarity.sign() * spec.p0_l; nodes.len()])
    } else {
        let band = gaussian_band(spec.f_l, spec.bw_l, 0.0, nt, dt);
        let src = source::source_on_radii(spec, medium, grid, Component::Lf, config.apodization, &nodes);
        LfState::Spectral(SpectralPlane::from_time(&src, basis.scale(), dt, band, &fourier))
    };

    let interp = basis.interpolation_matrix(&grid.r_axis());
    let mut recorders: Vec<Recorder> = signs.iter().map(|_| Recorder::new(interp.clone(), grid)).collect();
    let mut lf_recorder = config.record_lf.then(|| Recorder::new(interp.clone(), grid));

    let mut hf_work = DMatrix::zeros(hf0.data().nrows(), hf0.data().ncols());
    let mut lf_work = match &lf {
        LfState::Spectral(p) => DMatrix::zeros(p.data().nrows(), p.data().ncols()),
        _ => DMatrix::zeros(0, 0),
    };
    let mut lf_time = vec![0.0; nodes.len() * nt];
    let mut lf_ws = fourier.scratch();

    // Operators are cached per distinct step length.
    let mut cached_h = f64::NAN;
    let mut hf_op = None;
    let mut lf_op = None;
    let mut hf_abs = None;
    let mut lf_abs = None;

    let mut z = 0.0;
    for iz in 0..grid.nz {
        let target = grid.z(iz);
        let gap = target - z;
        let n_sub = if gap <= 0.0 {
            0
        } else {
            (gap / config.dz_step * (1.0 - 1e-12)).ceil().max(1.0) as usize
        };
        for _ in 0..n_sub {
            let h = gap / n_sub as f64;
            if h != cached_h {
                cached_h = h;
                hf_op = Some(DiffractionOperator::new(&basis, &hf0, medium.c0, h));
                hf_abs = absorption_factors(&hf0, medium, h);
                if let LfState::Spectral(p) = &lf {
                    lf_op = Some(DiffractionOperator::new(&basis, p, medium.c0, h));
                    lf_abs = absorption_factors(p, medium, h);
                }
            }
            // LF: linear propagation to the end of the step
            if let LfState::Spectral(p) = &mut lf {
                lf_op.as_ref().expect("lf operator").apply(&basis, p, &mut lf_work);
                if let Some(f) = &lf_abs {
                    apply_bin_factors(p, f);
                }
                if use_rim {
                    p.apply_radial_weight(&rim);
                }
                for n in 0..nodes.len() {
                    let row = &mut lf_time[n * nt..(n + 1) * nt];
                    if p.node_is_zero(n) {
                        row.fill(0.0);
                        continue;
                    }
                    p.node_time(n, &fourier, &mut lf_ws, row);
                    let inv = 1.0 / basis.scale()[n];
                    row.iter_mut().for_each(|v| *v *= inv);
                }
            } else if let LfState::Constant(values) = &lf {
                for (n, &v) in values.iter().enumerate() {
                    lf_time[n * nt..(n + 1) * nt].fill(v);
                }
            }
            for (c, &sign) in carriers.iter_mut().zip(signs) {
                hf_op.as_ref().expect("hf operator").apply(&basis, c, &mut hf_work);
                if let Some(f) = &hf_abs {
                    apply_bin_factors(c, f);
                }
                if !matches!(lf, LfState::Off) && sign != 0.0 {
                    warp_spectral(c, &lf_time, sign, medium, h, &fourier)?;
                }
                if use_rim {
                    c.apply_radial_weight(&rim);
                }
            }
        }
        z = target;
        for (rec, c) in recorders.iter_mut().zip(&carriers) {
            rec.record(c, iz, grid, &fourier);
        }
        if let Some(rec) = lf_recorder.as_mut() {
            match &lf {
                LfState::Spectral(p) => rec.record(p, iz, grid, &fourier),
                LfState::Constant(v) => rec.record_constant(v, iz, grid),
                LfState::Off => {}
            }
        }
    }
    Ok((
        recorders.into_iter().map(|r| r.samples).collect(),
        lf_recorder.map(|r| r.samples),
    ))
}

fn kind_for(polarity: Polarity) -> FieldKind {
    match polarity {
        Polarity::Positive => FieldKind::HfPlus,
        Polarity::Negative => FieldKind::HfMinus,
        Polarity::Off => FieldKind::HfZero,
    }
}

/// Propagate one transmission with the LF polarity given in `spec`.
pub fn simulate_pulse_complex(
    spec: &PulseComplexSpec,
    medium: &MediumSpec,
    grid: &Grid,
    config: &PropagationConfig,
) -> Result<PulseComplexFields> {
    let (mut hf, lf) = march(spec, medium, grid, config, &[1.0])?;
    let prov = provenance(spec, medium, grid, config);
    Ok(PulseComplexFields {
        hf: FieldCube::new(
            *grid,
            kind_for(spec.polarity),
            hf.pop().expect("one carrier"),
            prov.clone(),
        )?,
        lf: lf.map(|s| FieldCube::new(*grid, FieldKind::Lf, s, prov)).transpose()?,
    })
}

/// Propagate `spec`'s polarity, its flipped polarity and the LF-off
/// reference in one march sharing the LF field.
pub fn simulate_run(
    spec: &PulseComplexSpec,
    medium: &MediumSpec,
    grid: &Grid,
    config: &PropagationConfig,
) -> Result<SimulatedRun> {
    let (mut hf, lf) = march(spec, medium, grid, config, &[1.0, -1.0, 0.0])?;
    let prov = provenance(spec, medium, grid, config);
    let zero = hf.pop().expect("three carriers");
    let minus = hf.pop().expect("three carriers");
    let plus = hf.pop().expect("three carriers");
    Ok(SimulatedRun {
        plus: FieldCube::new(*grid, FieldKind::HfPlus, plus, prov.clone())?,
        minus: FieldCube::new(*grid, FieldKind::HfMinus, minus, prov.clone())?,
        zero: FieldCube::new(*grid, FieldKind::HfZero, zero, prov.clone())?,
        lf: lf.map(|s| FieldCube::new(*grid, FieldKind::Lf, s, prov)).transpose()?,
    })
}
