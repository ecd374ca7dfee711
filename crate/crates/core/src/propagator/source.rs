//! Transmit source plane at `z = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::medium::{LfWaveform, MediumSpec, PulseComplexSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Hf,
    Lf,
}

/// Radial amplitude weighting across an aperture of radius `a`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Apodization {
    /// Uniform amplitude, hard edge.
    #[default]
    Rect,
    /// Flat centre with a cosine taper over the outer `fraction` of the radius.
    Tukey { fraction: f64 },
    /// `exp(-(r / (width * a))^2)` inside the aperture.
    Gaussian { width: f64 },
}

impl Apodization {
    pub fn weight(&self, r: f64, a: f64) -> f64 {
        if r > a {
            return 0.0;
        }
        match *self {
            Apodization::Rect => 1.0,
            Apodization::Tukey { fraction } => {
                let start = a * (1.0 - fraction.clamp(0.0, 1.0));
                if r <= start || a <= start {
                    1.0
                } else {
                    0.5 * (1.0 + (PI * (r - start) / (a - start)).cos())
                }
            }
            Apodization::Gaussian { width } => (-(r / (width * a)).powi(2)).exp(),
        }
    }
}

/// Temporal standard deviation of a Gaussian envelope whose amplitude
/// spectrum has fractional -6 dB bandwidth `bw` about `f`.
pub fn envelope_sigma(f: f64, bw: f64) -> f64 {
    let sigma_f = bw * f / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    1.0 / (2.0 * PI * sigma_f)
}

/// Gaussian-envelope tone burst centred on `t = 0`.
pub fn tone_burst(t: f64, f: f64, bw: f64) -> f64 {
    let s = envelope_sigma(f, bw);
    (-(t * t) / (2.0 * s * s)).exp() * (2.0 * PI * f * t).cos()
}

/// Firing advance that focuses radius `r` at depth `focus`.
pub fn focus_delay(r: f64, focus: f64, c0: f64) -> f64 {
    ((focus * focus + r * r).sqrt() - focus) / c0
}

/// Real pressure series on a set of radii, `[r][t]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePlane {
    pub radii: Vec<f64>,
    pub nt: usize,
    pub samples: Vec<f64>,
}

impl TimePlane {
    pub fn series(&self, i: usize) -> &[f64] {
        &self.samples[i * self.nt..(i + 1) * self.nt]
    }
}

/// Source pressure of one component at the given radii.
///
/// The HF burst is centred on `t' = 0`; the LF burst lags it by `-tau0` and
/// carries the polarity sign. Each radius fires early by its focusing delay.
pub fn source_on_radii(
    spec: &PulseComplexSpec,
    medium: &MediumSpec,
    grid: &Grid,
    component: Component,
    apodization: Apodization,
    radii: &[f64],
) -> TimePlane {
    let (f, bw, p0, a, focus, centre, sign) = match component {
        Component::Hf => (spec.f_h, spec.bw_h, spec.p0_h, spec.a_h, spec.focus_h, 0.0, 1.0),
        Component::Lf => (
            spec.f_l,
            spec.bw_l,
            spec.p0_l,
            spec.a_l,
            spec.focus_l,
            -spec.tau0,
            spec.polarity.sign(),
        ),
    };
    let nt = grid.nt;
    let mut samples = vec![0.0; radii.len() * nt];
    if sign == 0.0 || p0 == 0.0 {
        return TimePlane {
            radii: radii.to_vec(),
            nt,
            samples,
        };
    }
    let constant = component == Component::Lf && spec.lf_waveform == LfWaveform::Constant;
    for (i, &r) in radii.iter().enumerate() {
        let w = apodization.weight(r, a);
        if w == 0.0 {
            continue;
        }
        let amp = sign * p0 * w;
        let advance = focus_delay(r, focus, medium.c0);
        let row = &mut samples[i * nt..(i + 1) * nt];
        for (it, v) in row.iter_mut().enumerate() {
            *v = if constant {
                amp
            } else {
                amp * tone_burst(grid.t(it) - centre + advance, f, bw)
            };
        }
    }
    TimePlane {
        radii: radii.to_vec(),
        nt,
        samples,
    }
}

/// Source plane on the grid's radial axis.
pub fn initial_aperture_field(
    spec: &PulseComplexSpec,
    medium: &MediumSpec,
    grid: &Grid,
    component: Component,
    apodization: Apodization,
) -> Result<TimePlane> {
    let a = match component {
        Component::Hf => spec.a_h,
        Component::Lf => spec.a_l,
    };
    if grid.nr > 1 && a >= grid.radial_extent() {
        return Err(Error::ApertureExceedsGrid {
            radius: a,
            extent: grid.radial_extent(),
        });
    }
    Ok(source_on_radii(
        spec,
        medium,
        grid,
        component,
        apodization,
        &grid.r_axis(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{create_grid, GridConfig};
    use crate::medium::Polarity;

    fn grid() -> Grid {
        create_grid(
            &GridConfig {
                nz: 1,
                dz: 1e-3,
                z0: 0.0,
                nr: 128,
                dr: 22e-3 / 128.0,
                nt: 2048,
                dt: 10e-9,
                t0: None,
            },
            14e6,
        )
        .unwrap()
    }

    #[test]
    fn default_source_is_valid() {
        let g = grid();
        let spec = PulseComplexSpec::default();
        let m = MediumSpec::default();
        let hf = initial_aperture_field(&spec, &m, &g, Component::Hf, Apodization::Rect).unwrap();
        let lf = initial_aperture_field(&spec, &m, &g, Component::Lf, Apodization::Rect).unwrap();
        // on-axis HF peaks at p0_H at t = 0
        let peak = hf.series(0).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!((peak - 3.5e6).abs() < 1.0);
        let lf_peak = lf.series(0).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!((lf_peak - 0.85e6).abs() / 0.85e6 < 1e-3);
    }

    #[test]
    fn lf_off_is_zero() {
        let g = grid();
        let spec = PulseComplexSpec::default().with_polarity(Polarity::Off);
        let lf = initial_aperture_field(&spec, &MediumSpec::default(), &g, Component::Lf, Apodization::Rect).unwrap();
        assert!(lf.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_outside_apertures() {
        let g = grid();
        let spec = PulseComplexSpec::default();
        let m = MediumSpec::default();
        let hf = initial_aperture_field(&spec, &m, &g, Component::Hf, Apodization::Rect).unwrap();
        let lf = initial_aperture_field(&spec, &m, &g, Component::Lf, Apodization::Rect).unwrap();
        for (i, &r) in g.r_axis().iter().enumerate() {
            if r > spec.a_l {
                assert!(hf.series(i).iter().all(|&v| v == 0.0));
                assert!(lf.series(i).iter().all(|&v| v == 0.0));
            }
            if r > spec.a_h {
                assert!(hf.series(i).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn aperture_larger_than_grid() {
        let mut c = GridConfig::default();
        c.nr = 16;
        c.dr = 0.5e-3;
        let g = create_grid(&c, 14e6).unwrap();
        let err = initial_aperture_field(
            &PulseComplexSpec::default(),
            &MediumSpec::default(),
            &g,
            Component::Lf,
            Apodization::Rect,
        )
        .unwrap_err();
        assert_eq!(err.code(), "APERTURE_EXCEEDS_GRID");
    }

    #[test]
    fn burst_bandwidth_matches_minus_6_db() {
        // amplitude spectrum of the envelope falls to 1/2 at ±bw·f/2
        let (f, bw) = (3.5e6, 0.5);
        let s = envelope_sigma(f, bw);
        let sigma_f = 1.0 / (2.0 * PI * s);
        let half = bw * f / 2.0;
        let ratio = (-(half * half) / (2.0 * sigma_f * sigma_f)).exp();
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn focusing_advances_the_edge() {
        let g = grid();
        let spec = PulseComplexSpec::default();
        let hf = initial_aperture_field(&spec, &MediumSpec::default(), &g, Component::Hf, Apodization::Rect).unwrap();
        let peak_index = |s: &[f64]| {
            s.iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0
        };
        let ir = 40; // r ≈ 6.9 mm
        let expected = focus_delay(g.r(ir), spec.focus_h, 1540.0) / g.dt;
        let shift = peak_index(hf.series(0)) as f64 - peak_index(hf.series(ir)) as f64;
        assert!((shift - expected).abs() <= 1.0, "{shift} vs {expected}");
    }
}
