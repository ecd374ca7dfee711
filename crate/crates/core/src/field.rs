//! Sampled pressure fields `p(z, r, t)` and single-point time series.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FieldKind {
    HfPlus,
    HfMinus,
    HfZero,
    Lf,
    Difference,
    Adjusted,
}

impl FieldKind {
    /// Lower-case stem used for file names (`hf_plus.f32`, ...).
    pub fn stem(self) -> &'static str {
        match self {
            FieldKind::HfPlus => "hf_plus",
            FieldKind::HfMinus => "hf_minus",
            FieldKind::HfZero => "hf_zero",
            FieldKind::Lf => "lf",
            FieldKind::Difference => "difference",
            FieldKind::Adjusted => "adjusted",
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stem())
    }
}

/// Immutable pressure cube in pascals, stored C-order `[z][r][t]`.
///
/// Samples are held as `f32`, the on-disk precision, so persistence is
/// bit-exact. All processing widens to `f64`. Clones share storage.
#[derive(Debug, Clone)]
pub struct FieldCube {
    grid: Grid,
    kind: FieldKind,
    samples: Arc<[f32]>,
    provenance: String,
}

impl FieldCube {
    pub fn new(grid: Grid, kind: FieldKind, samples: Vec<f32>, provenance: impl Into<String>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InconsistentManifest(format!(
                "{kind} field has {} samples, grid expects {}",
                samples.len(),
                grid.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(kind.to_string()));
        }
        Ok(FieldCube {
            grid,
            kind,
            samples: samples.into(),
            provenance: provenance.into(),
        })
    }

    /// Build from `f64` working values, rounding to storage precision.
    pub fn from_f64(grid: Grid, kind: FieldKind, samples: &[f64], provenance: impl Into<String>) -> Result<Self> {
        FieldCube::new(grid, kind, samples.iter().map(|&v| v as f32).collect(), provenance)
    }

    /// Cube with every sample equal to `value`.
    pub fn constant(grid: Grid, kind: FieldKind, value: f32) -> Result<Self> {
        FieldCube::new(grid, kind, vec![value; grid.len()], "constant")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Borrow the time series at `(iz, ir)` without copying.
    pub fn series(&self, iz: usize, ir: usize) -> &[f32] {
        let off = self.grid.offset(iz, ir);
        &self.samples[off..off + self.grid.nt]
    }

    /// All series of depth slice `iz`, `nr * nt` samples.
    pub fn slice(&self, iz: usize) -> &[f32] {
        let off = self.grid.offset(iz, 0);
        &self.samples[off..off + self.grid.nr * self.grid.nt]
    }

    /// Same samples relabelled with a new kind and provenance.
    pub fn relabel(&self, kind: FieldKind, provenance: impl Into<String>) -> FieldCube {
        FieldCube {
            grid: self.grid,
            kind,
            samples: Arc::clone(&self.samples),
            provenance: provenance.into(),
        }
    }

    /// Build a new sample buffer by mapping every `(iz, ir)` series.
    /// `init` creates per-worker scratch; series are processed in parallel
    /// but each output depends only on its own input, so results are
    /// deterministic.
    pub fn map_series<S, I, F>(&self, init: I, f: F) -> Vec<f32>
    where
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, usize, &[f32], &mut [f32]) + Sync + Send,
    {
        use rayon::prelude::*;
        let nt = self.grid.nt;
        let mut out = vec![0.0_f32; self.samples.len()];
        out.par_chunks_mut(nt)
            .zip(self.samples.par_chunks(nt))
            .enumerate()
            .for_each_init(init, |state, (i, (dst, src))| f(state, i, src, dst));
        out
    }

    pub fn same_grid(&self, other: &FieldCube) -> bool {
        self.grid == other.grid
    }

    pub fn bitwise_eq(&self, other: &FieldCube) -> bool {
        self.grid == other.grid
            && self.samples.len() == other.samples.len()
            && self
                .samples
                .iter()
                .zip(other.samples.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Contiguous copy of one point's time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub dt: f64,
    pub t0: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, dt: f64, t0: f64) -> Self {
        TimeSeries { samples, dt, t0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// `Σ p² dt`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() * self.dt
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Copy out the series at `(iz, ir)`.
pub fn slice_time_series(field: &FieldCube, iz: usize, ir: usize) -> Result<TimeSeries> {
    let g = field.grid();
    if iz >= g.nz || ir >= g.nr {
        return Err(Error::IndexOutOfRange {
            iz,
            ir,
            nz: g.nz,
            nr: g.nr,
        });
    }
    Ok(TimeSeries::new(
        field.series(iz, ir).iter().map(|&v| f64::from(v)).collect(),
        g.dt,
        g.t0,
    ))
}
