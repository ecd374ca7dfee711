//! Cylindrically weighted cross-spectra for fast evaluation of the quality
//! ratios under many candidate adjustments.
//!
//! With `P_z(k) = Σ_r w_r |S₊|²`, `M_z(k) = Σ_r w_r |S₋|²` and
//! `C_z(k) = Σ_r w_r S₊* S₋`, the slice energy of `s₊ − h·s₋` for any
//! per-bin filter `h` is
//! `dt/n · Σ_k c_k (P + |h|² M − 2 Re(h C))`
//! with one-sided weights `c_k`. One pass over the cubes then serves every
//! delay or equalizer that the optimizer tries.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{quality_general_from_slices, quality_specific_from_slices, radial_weights, ImagingRegion, QValue};
use crate::adjust::Equalizer;
use crate::error::{Error, Result};
use crate::field::FieldCube;
use crate::grid::Grid;
use crate::spectral::{delay_factor, one_sided_weight, Fourier};

/// Adjustment of `s₋` applied before differencing.
#[derive(Debug, Clone, Copy)]
pub enum Adjust<'a> {
    None,
    Delay(f64),
    Equalizer(&'a Equalizer),
}

impl Adjust<'_> {
    fn factors(&self, nt: usize, dt: f64) -> Option<Vec<Complex64>> {
        match self {
            Adjust::None => None,
            Adjust::Delay(tau) => Some((0..=nt / 2).map(|k| delay_factor(k, nt, dt, *tau)).collect()),
            Adjust::Equalizer(eq) => Some((0..=nt / 2).map(|k| eq.at(k)).collect()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralAggregates {
    grid: Grid,
    bins: usize,
    plus: Vec<f64>,
    minus: Vec<f64>,
    cross: Vec<Complex64>,
    /// Slices where `s₊` and `s₋` are bitwise equal; their unadjusted
    /// difference is exactly zero.
    identical: Vec<bool>,
    /// `c_k dt / n` per bin.
    bin_weight: Vec<f64>,
}

impl SpectralAggregates {
    pub fn new(s_plus: &FieldCube, s_minus: &FieldCube) -> Result<Self> {
        if !s_plus.same_grid(s_minus) {
            return Err(Error::GridMismatch);
        }
        let g = *s_plus.grid();
        let bins = g.nt / 2 + 1;
        let weights = radial_weights(&g);
        let fourier = Fourier::new(g.nt);
        let per_slice: Vec<(Vec<f64>, Vec<f64>, Vec<Complex64>, bool)> = (0..g.nz)
            .into_par_iter()
            .map_init(
                || (fourier.scratch(), fourier.scratch()),
                |(wa, wb), iz| {
                    let mut p = vec![0.0; bins];
                    let mut m = vec![0.0; bins];
                    let mut c = vec![Complex64::new(0.0, 0.0); bins];
                    for (ir, &w) in weights.iter().enumerate() {
                        fourier.forward(s_plus.series(iz, ir), wa);
                        fourier.forward(s_minus.series(iz, ir), wb);
                        for k in 0..bins {
                            let (a, b) = (wa.buf[k], wb.buf[k]);
                            p[k] += w * a.norm_sqr();
                            m[k] += w * b.norm_sqr();
                            c[k] += w * a.conj() * b;
                        }
                    }
                    let same = s_plus.slice(iz) == s_minus.slice(iz);
                    (p, m, c, same)
                },
            )
            .collect();
        let mut agg = SpectralAggregates {
            grid: g,
            bins,
            plus: Vec::with_capacity(g.nz * bins),
            minus: Vec::with_capacity(g.nz * bins),
            cross: Vec::with_capacity(g.nz * bins),
            identical: Vec::with_capacity(g.nz),
            bin_weight: (0..bins)
                .map(|k| one_sided_weight(k, g.nt) * g.dt / g.nt as f64)
                .collect(),
        };
        for (p, m, c, same) in per_slice {
            agg.identical.push(same);
            agg.plus.extend(p);
            agg.minus.extend(m);
            agg.cross.extend(c);
        }
        Ok(agg)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn slice_with(&self, iz: usize, factors: Option<&[Complex64]>) -> f64 {
        let o = iz * self.bins;
        let (p, m, c) = (
            &self.plus[o..o + self.bins],
            &self.minus[o..o + self.bins],
            &self.cross[o..o + self.bins],
        );
        let mut e = 0.0;
        match factors {
            None if self.identical[iz] => {}
            None => {
                for k in 0..self.bins {
                    e += self.bin_weight[k] * (p[k] + m[k] - 2.0 * c[k].re);
                }
            }
            Some(h) => {
                for k in 0..self.bins {
                    e += self.bin_weight[k] * (p[k] + h[k].norm_sqr() * m[k] - 2.0 * (h[k] * c[k]).re);
                }
            }
        }
        // rounding can leave a tiny negative where the difference vanishes
        e.max(0.0)
    }

    /// `Σ_r w_r Σ_t sΔ² dt` for every slice.
    pub fn slice_energies(&self, adjust: Adjust<'_>) -> Vec<f64> {
        let f = adjust.factors(self.grid.nt, self.grid.dt);
        (0..self.grid.nz).map(|iz| self.slice_with(iz, f.as_deref())).collect()
    }

    /// Slice energies of `s₊` alone.
    pub fn plus_slice_energies(&self) -> Vec<f64> {
        (0..self.grid.nz)
            .map(|iz| {
                let o = iz * self.bins;
                (0..self.bins).map(|k| self.bin_weight[k] * self.plus[o + k]).sum()
            })
            .collect()
    }

    pub fn quality_specific(&self, region: &ImagingRegion, z_a: f64, adjust: Adjust<'_>) -> Result<QValue> {
        region.validate(&self.grid)?;
        let iz_a = self.grid.nearest_z(z_a);
        let f = adjust.factors(self.grid.nt, self.grid.dt);
        // only the slices the ratio touches
        let mut slices = vec![0.0; self.grid.nz];
        for iz in region.slices(&self.grid).into_iter().chain(std::iter::once(iz_a)) {
            slices[iz] = self.slice_with(iz, f.as_deref());
        }
        Ok(quality_specific_from_slices(&slices, &self.grid, region, iz_a))
    }

    pub fn quality_general(&self, region: &ImagingRegion, adjust: Adjust<'_>) -> Result<QValue> {
        region.validate(&self.grid)?;
        Ok(quality_general_from_slices(
            &self.slice_energies(adjust),
            &self.grid,
            region,
        ))
    }
}
