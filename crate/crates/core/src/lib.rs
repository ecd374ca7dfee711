//! Simulation and post-processing of dual-frequency (SURF) transmit beams.
//!
//! Two HF imaging pulses co-propagate with LF manipulation pulses of opposite
//! polarity; their difference forms a synthetic transmit beam with reduced
//! near-field amplitude. This crate provides
//!
//! - [`field`], [`grid`] and [`store`]: sampled fields and run directories,
//! - [`propagator`]: one-way axisymmetric propagation of the pulse complex,
//! - [`adjust`]: delay estimation, pure time-shift and Wiener adjustments,
//! - [`metrics`]: gain factor, beam/energy maps, quality ratios and sweeps.

pub mod adjust;
pub mod error;
pub mod field;
pub mod grid;
pub mod medium;
pub mod metrics;
pub mod propagator;
pub mod spectral;
pub mod store;

pub use error::{Error, Result};
pub use field::{slice_time_series, FieldCube, FieldKind, TimeSeries};
pub use grid::{create_grid, Grid, GridConfig};
pub use medium::{Absorption, LfWaveform, MediumSpec, Polarity, PulseComplexSpec};
pub use store::{read_run, write_run, Run, RunManifest};
