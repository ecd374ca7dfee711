//! Sampling grid shared by every field of a run.
//!
//! Depth `z`, radius `r` and retarded time `t' = t - z/c0` are each described
//! by a `(count, step, origin)` triple. The radial axis always starts on the
//! beam axis (`r0 = 0`); the azimuth is implicit by axisymmetry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nz: usize,
    pub dz: f64,
    pub z0: f64,
    pub nr: usize,
    pub dr: f64,
    pub nt: usize,
    pub dt: f64,
    pub t0: f64,
}

/// User-facing grid description; validated into a [`Grid`] by [`create_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nz: usize,
    pub dz: f64,
    #[serde(default)]
    pub z0: f64,
    pub nr: usize,
    pub dr: f64,
    pub nt: usize,
    pub dt: f64,
    /// Start of the time window. `None` centres the window on `t' = 0`.
    #[serde(default)]
    pub t0: Option<f64>,
}

impl Default for GridConfig {
    /// Desk-scale grid covering 0-130 mm in depth and 22 mm radially.
    fn default() -> Self {
        GridConfig {
            nz: 201,
            dz: 0.65e-3,
            z0: 0.0,
            nr: 128,
            dr: 22.0e-3 / 128.0,
            nt: 2048,
            dt: 10e-9,
            t0: None,
        }
    }
}

fn positive_count(field: &'static str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::NonPositive { field, value: 0.0 });
    }
    Ok(())
}

fn positive_step(field: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::NonPositive { field, value: v });
    }
    Ok(())
}

/// Validate a grid configuration against the highest frequency that must be
/// represented.
pub fn create_grid(config: &GridConfig, f_max: f64) -> Result<Grid> {
    positive_count("nz", config.nz)?;
    positive_count("nr", config.nr)?;
    positive_count("nt", config.nt)?;
    positive_step("dz", config.dz)?;
    positive_step("dr", config.dr)?;
    positive_step("dt", config.dt)?;
    positive_step("f_max", f_max)?;
    if !(config.z0.is_finite() && config.z0 >= 0.0) {
        return Err(Error::InvalidParameter {
            field: "z0",
            reason: format!("must be a non-negative depth, got {}", config.z0),
        });
    }
    let limit = 1.0 / (2.0 * f_max);
    if config.dt > limit {
        return Err(Error::UnderSampled { dt: config.dt, limit });
    }
    let t0 = match config.t0 {
        Some(t0) if t0.is_finite() => t0,
        Some(t0) => {
            return Err(Error::InvalidParameter {
                field: "t0",
                reason: format!("must be finite, got {t0}"),
            })
        }
        None => -(config.nt as f64 / 2.0) * config.dt,
    };
    Ok(Grid {
        nz: config.nz,
        dz: config.dz,
        z0: config.z0,
        nr: config.nr,
        dr: config.dr,
        nt: config.nt,
        dt: config.dt,
        t0,
    })
}

impl Grid {
    pub fn z(&self, iz: usize) -> f64 {
        self.z0 + iz as f64 * self.dz
    }

    pub fn r(&self, ir: usize) -> f64 {
        ir as f64 * self.dr
    }

    pub fn t(&self, it: usize) -> f64 {
        self.t0 + it as f64 * self.dt
    }

    pub fn z_axis(&self) -> Vec<f64> {
        (0..self.nz).map(|i| self.z(i)).collect()
    }

    pub fn r_axis(&self) -> Vec<f64> {
        (0..self.nr).map(|i| self.r(i)).collect()
    }

    pub fn t_axis(&self) -> Vec<f64> {
        (0..self.nt).map(|i| self.t(i)).collect()
    }

    pub fn z_max(&self) -> f64 {
        self.z(self.nz - 1)
    }

    /// Outer radius of the radial domain, one step beyond the last sample.
    pub fn radial_extent(&self) -> f64 {
        self.nr as f64 * self.dr
    }

    pub fn len(&self) -> usize {
        self.nz * self.nr * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of the first sample of series `(iz, ir)` in C-order storage.
    pub fn offset(&self, iz: usize, ir: usize) -> usize {
        (iz * self.nr + ir) * self.nt
    }

    /// Index of the depth slice nearest to `z`, clamped to the grid.
    pub fn nearest_z(&self, z: f64) -> usize {
        let k = ((z - self.z0) / self.dz).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.nz - 1)
        }
    }

    /// Re-check the invariants of a grid read back from disk.
    pub fn validate(&self) -> Result<()> {
        let config = GridConfig {
            nz: self.nz,
            dz: self.dz,
            z0: self.z0,
            nr: self.nr,
            dr: self.dr,
            nt: self.nt,
            dt: self.dt,
            t0: Some(self.t0),
        };
        create_grid(&config, 1.0 / (2.0 * self.dt)).map(|_| ())
    }

    pub fn with_nt(&self, nt: usize, dt: f64, t0: f64) -> Grid {
        Grid { nt, dt, t0, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(nt: usize, dt: f64) -> GridConfig {
        GridConfig {
            nz: 4,
            dz: 1e-3,
            z0: 0.0,
            nr: 3,
            dr: 1e-4,
            nt,
            dt,
            t0: None,
        }
    }

    #[test]
    fn accepts_nyquist_sampled_grid() {
        let grid = create_grid(&config(2048, 10e-9), 14e6).unwrap();
        assert_eq!(grid.nt, 2048);
        assert_eq!(grid.t0, -1024.0 * 10e-9);
    }

    #[test]
    fn rejects_under_sampled_dt() {
        let err = create_grid(&config(2048, 40e-9), 14e6).unwrap_err();
        assert_eq!(err.code(), "UNDER_SAMPLED");
    }

    #[test]
    fn rejects_zero_counts() {
        let mut c = config(16, 10e-9);
        c.nz = 0;
        let err = create_grid(&c, 14e6).unwrap_err();
        assert_eq!(err.code(), "NON_POSITIVE_STEP");
        let mut c = config(16, 10e-9);
        c.dr = -1.0;
        assert_eq!(create_grid(&c, 14e6).unwrap_err().code(), "NON_POSITIVE_STEP");
    }

    #[test]
    fn axes_reconstruct_from_triples() {
        let grid = create_grid(&config(8, 10e-9), 14e6).unwrap();
        assert_eq!(grid.z_axis(), vec![0.0, 1e-3, 2e-3, 3e-3]);
        assert_eq!(grid.r(2), 2e-4);
        assert_eq!(grid.t_axis()[4], 0.0);
        assert_eq!(grid.nearest_z(2.4e-3), 2);
        assert_eq!(grid.nearest_z(-1.0), 0);
        assert_eq!(grid.nearest_z(1.0), 3);
    }
}
