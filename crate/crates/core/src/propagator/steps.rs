//! The three split-step operators of the z-march.
//!
//! Fields are carried as one-sided temporal spectra on a band of DFT bins,
//! one complex radial profile per bin. Radial profiles live on the nodes of
//! a [`RadialBasis`] in its scaled form (see [`super::hankel`]); pointwise
//! operations in `r` act on the scaled values unchanged.

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::hankel::RadialTransform;
use super::source::TimePlane;
use crate::error::{Error, Result};
use crate::medium::MediumSpec;
use crate::spectral::{bin_omega, FftScratch, Fourier};

/// Largest per-step warp, in samples, before the step is rejected.
pub const MAX_WARP_SAMPLES: f64 = 0.5;

/// Radial discretisation: a single on-axis node (plane waves) or a
/// Hankel basis on `J0` zeros.
#[derive(Debug, Clone)]
pub struct RadialBasis {
    nodes: Vec<f64>,
    scale: Vec<f64>,
    wavenumbers: Vec<f64>,
    hankel: Option<(RadialTransform, DMatrix<f64>)>,
}

impl RadialBasis {
    pub fn axis() -> Self {
        RadialBasis {
            nodes: vec![0.0],
            scale: vec![1.0],
            wavenumbers: vec![0.0],
            hankel: None,
        }
    }

    pub fn hankel(n: usize, radius: f64) -> Self {
        let t = RadialTransform::new(n, radius);
        let m = DMatrix::from_row_slice(n, n, t.matrix());
        RadialBasis {
            nodes: t.nodes().to_vec(),
            scale: t.scale().to_vec(),
            wavenumbers: t.wavenumbers().to_vec(),
            hankel: Some((t, m)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Factor from physical value to scaled value per node.
    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn is_axis(&self) -> bool {
        self.hankel.is_none()
    }

    /// Matrix (`radii.len() x N`) taking scaled nodal values to physical
    /// values at `radii`.
    pub fn interpolation_matrix(&self, radii: &[f64]) -> DMatrix<f64> {
        match &self.hankel {
            None => DMatrix::from_element(radii.len(), 1, 1.0),
            Some((t, _)) => DMatrix::from_row_slice(radii.len(), t.len(), &t.interpolation_matrix(radii)),
        }
    }

    fn transform(&self, input: &DMatrix<f64>, output: &mut DMatrix<f64>) {
        match &self.hankel {
            None => output.copy_from(input),
            Some((_, m)) => m.mul_to(input, output),
        }
    }
}

/// One-sided spectra of a real field on a band of DFT bins, per radial node.
///
/// Storage is `nodes x 2·bins`: column `2b` holds the real and `2b + 1` the
/// imaginary part of bin `band.start + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPlane {
    nt: usize,
    dt: f64,
    band: Range<usize>,
    data: DMatrix<f64>,
}

impl SpectralPlane {
    pub fn zeros(nodes: usize, nt: usize, dt: f64, band: Range<usize>) -> Self {
        assert!(
            band.start >= 1 && band.end <= nt.div_ceil(2),
            "band must exclude DC and Nyquist"
        );
        let width = band.len();
        SpectralPlane {
            nt,
            dt,
            band,
            data: DMatrix::zeros(nodes, 2 * width),
        }
    }

    /// Spectra of time series `plane` (physical values) multiplied by the
    /// basis `scale`. Content outside `band` is discarded.
    pub fn from_time(plane: &TimePlane, scale: &[f64], dt: f64, band: Range<usize>, fourier: &Fourier) -> Self {
        let nodes = plane.radii.len();
        let mut out = SpectralPlane::zeros(nodes, plane.nt, dt, band);
        let mut ws = fourier.scratch();
        for n in 0..nodes {
            let row = plane.series(n);
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            fourier.forward(row, &mut ws);
            for b in 0..out.bins() {
                out.set(n, b, ws.buf[out.band.start + b] * scale[n]);
            }
        }
        out
    }

    pub fn nodes(&self) -> usize {
        self.data.nrows()
    }

    pub fn bins(&self) -> usize {
        self.band.len()
    }

    pub fn band(&self) -> Range<usize> {
        self.band.clone()
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Angular frequency of band-local bin `b`.
    pub fn omega(&self, b: usize) -> f64 {
        bin_omega(self.band.start + b, self.nt, self.dt)
    }

    pub fn get(&self, n: usize, b: usize) -> Complex64 {
        Complex64::new(self.data[(n, 2 * b)], self.data[(n, 2 * b + 1)])
    }

    pub fn set(&mut self, n: usize, b: usize, v: Complex64) {
        self.data[(n, 2 * b)] = v.re;
        self.data[(n, 2 * b + 1)] = v.im;
    }

    pub(crate) fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// True when every bin of node `n` is exactly zero.
    pub fn node_is_zero(&self, n: usize) -> bool {
        self.data.row(n).iter().all(|&v| v == 0.0)
    }

    /// Fill `ws.buf` with the full Hermitian spectrum built from per-bin
    /// values `f(b)`.
    fn hermitian_into(&self, ws: &mut FftScratch, f: impl Fn(usize) -> Complex64) {
        ws.buf.fill(Complex64::new(0.0, 0.0));
        for b in 0..self.bins() {
            let k = self.band.start + b;
            let v = f(b);
            ws.buf[k] = v;
            ws.buf[self.nt - k] = v.conj();
        }
    }

    /// Real time series of node `n` (in the plane's scaled units).
    pub fn node_time(&self, n: usize, fourier: &Fourier, ws: &mut FftScratch, out: &mut [f64]) {
        self.hermitian_into(ws, |b| self.get(n, b));
        fourier.inverse_real(ws, out);
    }

    /// Time-domain plane at the nodes, undoing `scale`.
    pub fn to_time(&self, radii: &[f64], scale: &[f64], fourier: &Fourier) -> TimePlane {
        let mut ws = fourier.scratch();
        let mut samples = vec![0.0; self.nodes() * self.nt];
        for n in 0..self.nodes() {
            let row = &mut samples[n * self.nt..(n + 1) * self.nt];
            self.node_time(n, fourier, &mut ws, row);
            let inv = 1.0 / scale[n];
            row.iter_mut().for_each(|v| *v *= inv);
        }
        TimePlane {
            radii: radii.to_vec(),
            nt: self.nt,
            samples,
        }
    }

    /// `Σ |X|²` over nodes and bins, in scaled units. Proportional to the
    /// field energy for a Hankel basis.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Multiply every node's profile by a real radial weight.
    pub fn apply_radial_weight(&mut self, weight: &[f64]) {
        for (n, &w) in weight.iter().enumerate() {
            if w != 1.0 {
                self.data.row_mut(n).iter_mut().for_each(|v| *v *= w);
            }
        }
    }
}

/// Angular-spectrum advance over a fixed `dz`, precomputed per
/// `(k_r, ω)` for a given band.
#[derive(Debug, Clone)]
pub struct DiffractionOperator {
    /// `nodes x bins` phase factors, row-major.
    factors: Vec<Complex64>,
    bins: usize,
    identity: bool,
}

impl DiffractionOperator {
    pub fn new(basis: &RadialBasis, plane: &SpectralPlane, c0: f64, dz: f64) -> Self {
        let bins = plane.bins();
        let identity = dz == 0.0 || basis.is_axis();
        let mut factors = Vec::with_capacity(if identity { 0 } else { basis.len() * bins });
        if !identity {
            for &kr in basis.wavenumbers() {
                for b in 0..bins {
                    let k = plane.omega(b) / c0;
                    factors.push(propagation_factor(k, kr, dz));
                }
            }
        }
        DiffractionOperator {
            factors,
            bins,
            identity,
        }
    }

    /// Advance `plane` in place; `work` must match the plane's storage shape.
    pub fn apply(&self, basis: &RadialBasis, plane: &mut SpectralPlane, work: &mut DMatrix<f64>) {
        if self.identity {
            return;
        }
        basis.transform(&plane.data, work);
        for m in 0..work.nrows() {
            for b in 0..self.bins {
                let f = self.factors[m * self.bins + b];
                let v = Complex64::new(work[(m, 2 * b)], work[(m, 2 * b + 1)]) * f;
                work[(m, 2 * b)] = v.re;
                work[(m, 2 * b + 1)] = v.im;
            }
        }
        basis.transform(work, &mut plane.data);
    }
}

/// `exp(-i dz (k_z - k))` in the retarded frame; evanescent components
/// decay as `exp(-dz sqrt(k_r² - k²))`.
pub fn propagation_factor(k: f64, kr: f64, dz: f64) -> Complex64 {
    let d = k * k - kr * kr;
    if d >= 0.0 {
        Complex64::from_polar(1.0, -dz * (d.sqrt() - k))
    } else {
        Complex64::from_polar((-dz * (-d).sqrt()).exp(), dz * k)
    }
}

/// Diffraction over `dz` as a pure function of the plane.
pub fn diffraction_step(plane: &SpectralPlane, basis: &RadialBasis, c0: f64, dz: f64) -> SpectralPlane {
    let mut out = plane.clone();
    let op = DiffractionOperator::new(basis, plane, c0, dz);
    let mut work = DMatrix::zeros(plane.data.nrows(), plane.data.ncols());
    op.apply(basis, &mut out, &mut work);
    out
}

/// Per-bin amplitude factors `exp(-α(f) dz)`; `None` when absorption is off.
pub fn absorption_factors(plane: &SpectralPlane, medium: &MediumSpec, dz: f64) -> Option<Vec<f64>> {
    let a = medium.active_absorption()?;
    if dz == 0.0 {
        return None;
    }
    Some(
        (0..plane.bins())
            .map(|b| {
                let f = plane.omega(b) / (2.0 * std::f64::consts::PI);
                (-a.nepers_per_metre(f) * dz).exp()
            })
            .collect(),
    )
}

pub(crate) fn apply_bin_factors(plane: &mut SpectralPlane, factors: &[f64]) {
    for (b, &f) in factors.iter().enumerate() {
        plane.data.column_mut(2 * b).iter_mut().for_each(|v| *v *= f);
        plane.data.column_mut(2 * b + 1).iter_mut().for_each(|v| *v *= f);
    }
}

/// Power-law absorption over `dz` as a pure function of the plane.
pub fn absorption_step(plane: &SpectralPlane, dz: f64, medium: &MediumSpec) -> SpectralPlane {
    let mut out = plane.clone();
    if let Some(f) = absorption_factors(plane, medium, dz) {
        apply_bin_factors(&mut out, &f);
    }
    out
}

/// Local time advance `dz · βn κ p_L / c0` for each LF sample.
pub fn warp_advance(lf: &[f64], medium: &MediumSpec, dz: f64, out: &mut [f64]) {
    let c = dz * medium.speed_coefficient() / medium.c0;
    for (o, &p) in out.iter_mut().zip(lf) {
        *o = c * p;
    }
}

fn check_warp(advance: &[f64], dt: f64) -> Result<()> {
    let worst = advance.iter().fold(0.0_f64, |a, v| a.max(v.abs())) / dt;
    if worst > MAX_WARP_SAMPLES {
        return Err(Error::WarpTooLarge { samples: worst });
    }
    Ok(())
}

/// `s(t + δ(t)) ≈ s + δ s' + δ² s'' / 2`.
fn taylor_warp(s: &[f64], s1: &[f64], s2: &[f64], advance: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        let d = advance[i];
        out[i] = s[i] + d * (s1[i] + 0.5 * d * s2[i]);
    }
}

/// Reusable buffers for warping one node.
pub(crate) struct WarpScratch {
    ws: FftScratch,
    s: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    out: Vec<f64>,
}

impl WarpScratch {
    pub(crate) fn new(fourier: &Fourier) -> Self {
        let n = fourier.len();
        WarpScratch {
            ws: fourier.scratch(),
            s: vec![0.0; n],
            s1: vec![0.0; n],
            s2: vec![0.0; n],
            out: vec![0.0; n],
        }
    }
}

/// Warp node `n` of `plane` by the per-sample advance (seconds).
pub(crate) fn warp_node(plane: &mut SpectralPlane, n: usize, advance: &[f64], fourier: &Fourier, sc: &mut WarpScratch) {
    let nt = plane.nt;
    // s + i s' from one inverse transform of X + i(iωX)
    plane.hermitian_into(&mut sc.ws, |b| plane.get(n, b));
    let i = Complex64::new(0.0, 1.0);
    for b in 0..plane.bins() {
        let k = plane.band.start + b;
        let x = plane.get(n, b);
        let d = x * (i * plane.omega(b));
        sc.ws.buf[k] += i * d;
        sc.ws.buf[nt - k] += i * d.conj();
    }
    fourier.inverse_inplace(&mut sc.ws);
    for t in 0..nt {
        sc.s[t] = sc.ws.buf[t].re;
        sc.s1[t] = sc.ws.buf[t].im;
    }
    plane.hermitian_into(&mut sc.ws, |b| {
        let w = plane.omega(b);
        plane.get(n, b) * (-w * w)
    });
    fourier.inverse_real(&mut sc.ws, &mut sc.s2);
    taylor_warp(&sc.s, &sc.s1, &sc.s2, advance, &mut sc.out);
    fourier.forward(&sc.out, &mut sc.ws);
    for b in 0..plane.bins() {
        let v = sc.ws.buf[plane.band.start + b];
        plane.set(n, b, v);
    }
}

/// Spectral-plane form of the LF-on-HF time warp used inside the march.
///
/// `lf_time` holds physical LF pressure at the nodes (`nodes x nt`). Nodes
/// whose LF series is identically zero are left untouched.
pub fn warp_spectral(
    hf: &mut SpectralPlane,
    lf_time: &[f64],
    sign: f64,
    medium: &MediumSpec,
    dz: f64,
    fourier: &Fourier,
) -> Result<()> {
    let nt = hf.nt;
    let mut advance = vec![0.0; nt];
    let mut sc = WarpScratch::new(fourier);
    for n in 0..hf.nodes() {
        let lf = &lf_time[n * nt..(n + 1) * nt];
        if sign == 0.0 || lf.iter().all(|&v| v == 0.0) {
            continue;
        }
        warp_advance(lf, medium, dz, &mut advance);
        if sign < 0.0 {
            advance.iter_mut().for_each(|v| *v = -*v);
        }
        check_warp(&advance, hf.dt)?;
        warp_node(hf, n, &advance, fourier, &mut sc);
    }
    Ok(())
}

/// Time-domain LF-on-HF warp over `dz`: each HF sample is re-read at
/// `t + dz βn κ p_L(r, t) / c0`, so positive LF pressure advances the HF
/// pulse. Derivatives are taken spectrally; the LF plane is not modified.
pub fn nonlinear_strain_step(
    hf: &TimePlane,
    lf: &TimePlane,
    medium: &MediumSpec,
    dz: f64,
    dt: f64,
) -> Result<TimePlane> {
    if hf.radii.len() != lf.radii.len() || hf.nt != lf.nt {
        return Err(Error::GridMismatch);
    }
    let nt = hf.nt;
    let fourier = Fourier::new(nt);
    let mut ws = fourier.scratch();
    let mut out = hf.clone();
    let (mut s1, mut s2, mut advance) = (vec![0.0; nt], vec![0.0; nt], vec![0.0; nt]);
    for n in 0..hf.radii.len() {
        let p = lf.series(n);
        if p.iter().all(|&v| v == 0.0) {
            continue;
        }
        warp_advance(p, medium, dz, &mut advance);
        check_warp(&advance, dt)?;
        let s = hf.series(n);
        fourier.forward(s, &mut ws);
        let spectrum = ws.buf.clone();
        for (order, dst) in [(1, &mut s1), (2, &mut s2)] {
            for (j, v) in ws.buf.iter_mut().enumerate() {
                let w = if crate::spectral::is_nyquist(j, nt) {
                    0.0
                } else {
                    bin_omega(j, nt, dt)
                };
                *v = spectrum[j] * Complex64::new(0.0, w).powi(order);
            }
            fourier.inverse_real(&mut ws, dst);
        }
        taylor_warp(s, &s1, &s2, &advance, &mut out.samples[n * nt..(n + 1) * nt]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::Absorption;

    fn plane_with(nodes: usize, nt: usize, dt: f64, band: Range<usize>) -> SpectralPlane {
        let mut p = SpectralPlane::zeros(nodes, nt, dt, band);
        for n in 0..nodes {
            for b in 0..p.bins() {
                p.set(
                    n,
                    b,
                    Complex64::new((n + b) as f64 * 0.1 + 1.0, b as f64 * 0.05 - n as f64 * 0.02),
                );
            }
        }
        p
    }

    #[test]
    fn zero_step_is_identity() {
        let basis = RadialBasis::hankel(16, 0.01);
        let p = plane_with(16, 256, 10e-9, 10..40);
        assert_eq!(diffraction_step(&p, &basis, 1540.0, 0.0), p);
        let m = MediumSpec {
            absorption: Some(Absorption { alpha0: 0.5, y: 1.0 }),
            ..MediumSpec::default()
        };
        assert_eq!(absorption_step(&p, 0.0, &m), p);
        assert_eq!(absorption_step(&p, 0.01, &MediumSpec::default()), p);
    }

    #[test]
    fn plane_wave_is_unchanged_by_diffraction() {
        let basis = RadialBasis::axis();
        let p = plane_with(1, 256, 10e-9, 10..40);
        assert_eq!(diffraction_step(&p, &basis, 1540.0, 0.05), p);
    }

    #[test]
    fn diffraction_conserves_propagating_energy() {
        // smooth profile, wavenumbers well inside the propagating cone
        let basis = RadialBasis::hankel(64, 0.02);
        let mut p = SpectralPlane::zeros(64, 512, 10e-9, 150..200);
        for (n, &r) in basis.nodes().iter().enumerate() {
            let v = (-(r / 4e-3).powi(2)).exp() * basis.scale()[n];
            for b in 0..p.bins() {
                p.set(n, b, Complex64::new(v, 0.0));
            }
        }
        let e0 = p.energy();
        let q = diffraction_step(&p, &basis, 1540.0, 0.03);
        assert!(((q.energy() - e0) / e0).abs() < 1e-9);
        assert_ne!(q, p);
    }

    #[test]
    fn evanescent_components_decay() {
        let f = propagation_factor(100.0, 200.0, 0.01);
        assert!(f.norm() < 1.0);
        let g = propagation_factor(200.0, 100.0, 0.01);
        assert!((g.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn absorption_reduces_each_bin() {
        let m = MediumSpec {
            absorption: Some(Absorption { alpha0: 0.5, y: 1.0 }),
            ..MediumSpec::default()
        };
        let p = plane_with(3, 256, 10e-9, 10..40);
        let q = absorption_step(&p, 0.01, &m);
        for n in 0..3 {
            for b in 0..p.bins() {
                assert!(q.get(n, b).norm() < p.get(n, b).norm());
            }
        }
    }

    fn burst_plane(nt: usize, dt: f64) -> TimePlane {
        let samples: Vec<f64> = (0..nt)
            .map(|i| {
                let t = (i as f64 - nt as f64 / 2.0) * dt;
                (-(t / 0.4e-6).powi(2)).exp() * (2.0 * std::f64::consts::PI * 3.5e6 * t).cos()
            })
            .collect();
        TimePlane {
            radii: vec![0.0],
            nt,
            samples,
        }
    }

    #[test]
    fn zero_lf_leaves_hf_untouched() {
        let (nt, dt) = (512, 10e-9);
        let hf = burst_plane(nt, dt);
        let lf = TimePlane {
            radii: vec![0.0],
            nt,
            samples: vec![0.0; nt],
        };
        let out = nonlinear_strain_step(&hf, &lf, &MediumSpec::default(), 1e-3, dt).unwrap();
        assert_eq!(out, hf);
    }

    #[test]
    fn constant_lf_advances_hf_by_closed_form() {
        let (nt, dt) = (512, 10e-9);
        let m = MediumSpec::default();
        let hf = burst_plane(nt, dt);
        let p = 0.85e6;
        let lf = TimePlane {
            radii: vec![0.0],
            nt,
            samples: vec![p; nt],
        };
        let dz = 0.5e-3;
        let out = nonlinear_strain_step(&hf, &lf, &m, dz, dt).unwrap();
        let adv = dz * m.speed_coefficient() * p / m.c0;
        for i in 0..nt {
            let t = (i as f64 - nt as f64 / 2.0) * dt + adv;
            let exact = (-(t / 0.4e-6).powi(2)).exp() * (2.0 * std::f64::consts::PI * 3.5e6 * t).cos();
            assert!((out.samples[i] - exact).abs() < 1e-6, "{i}");
        }
    }

    #[test]
    fn flipped_lf_mirrors_the_warp_exactly() {
        let (nt, dt) = (512, 10e-9);
        let m = MediumSpec::default();
        let hf = burst_plane(nt, dt);
        let lf: Vec<f64> = (0..nt).map(|i| 0.8e6 * (i as f64 * 0.01).sin()).collect();
        let plus = TimePlane {
            radii: vec![0.0],
            nt,
            samples: lf.clone(),
        };
        let minus = TimePlane {
            radii: vec![0.0],
            nt,
            samples: lf.iter().map(|v| -v).collect(),
        };
        let mut a = vec![0.0; nt];
        let mut b = vec![0.0; nt];
        warp_advance(&plus.samples, &m, 1e-3, &mut a);
        warp_advance(&minus.samples, &m, 1e-3, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), (-y).to_bits());
        }
        let up = nonlinear_strain_step(&hf, &plus, &m, 1e-3, dt).unwrap();
        let down = nonlinear_strain_step(&hf, &minus, &m, 1e-3, dt).unwrap();
        assert_ne!(up, down);
    }

    #[test]
    fn oversized_warp_is_rejected() {
        let (nt, dt) = (64, 10e-9);
        let hf = burst_plane(nt, dt);
        let lf = TimePlane {
            radii: vec![0.0],
            nt,
            samples: vec![5e6; nt],
        };
        let err = nonlinear_strain_step(&hf, &lf, &MediumSpec::default(), 1.0, dt).unwrap_err();
        assert_eq!(err.code(), "WARP_TOO_LARGE");
    }

    #[test]
    fn spectral_and_time_warps_agree() {
        let (nt, dt) = (512, 10e-9);
        let m = MediumSpec::default();
        let hf = burst_plane(nt, dt);
        let fourier = Fourier::new(nt);
        let lf: Vec<f64> = (0..nt).map(|i| 0.8e6 * (i as f64 * 0.01).cos()).collect();
        let lf_plane = TimePlane {
            radii: vec![0.0],
            nt,
            samples: lf.clone(),
        };
        let band = 1..nt / 2;
        let mut spec = SpectralPlane::from_time(&hf, &[1.0], dt, band, &fourier);
        warp_spectral(&mut spec, &lf, 1.0, &m, 1e-3, &fourier).unwrap();
        let a = spec.to_time(&[0.0], &[1.0], &fourier);
        let b = nonlinear_strain_step(&hf, &lf_plane, &m, 1e-3, dt).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() < 1e-7, "{x} {y}");
        }
    }
}
