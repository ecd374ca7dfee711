#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use surfbeam::commands::{cmd_simulate, SimulateArgs};

/// Small focused run covering 0–130 mm so the default imaging region fits.
pub const SMALL_CONFIG: &str = r#"{
  "grid": {"nz": 66, "dz": 2e-3, "nr": 48, "dr": 0.25e-3, "nt": 1024, "dt": 10e-9},
  "pulse": {"bw_l": 0.5, "a_h": 3e-3, "a_l": 5e-3, "focus_h": 40e-3, "focus_l": 40e-3},
  "propagation": {"dz_step": 0.5e-3}
}"#;

/// Plane-wave oracle run with constant LF pressure, 0–50 mm.
pub const PLANE_CONFIG: &str = r#"{
  "grid": {"nz": 11, "dz": 5e-3, "nr": 1, "dr": 1e-3, "nt": 1024, "dt": 10e-9},
  "pulse": {"p0_l": 0.5e6},
  "propagation": {"mode": "PLANE_WAVE"}
}"#;

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

pub fn simulate(dir: &Path, name: &str, config: &str) -> PathBuf {
    let cfg = write_config(dir, &format!("{name}.json"), config);
    let out = dir.join(name);
    cmd_simulate(&SimulateArgs {
        config: Some(cfg),
        out: Some(out.clone()),
        ..SimulateArgs::default()
    })
    .unwrap();
    out
}

/// Parse a `z_a_mm,adjustment,Q_dB` file into rows.
pub fn q_rows(csv: &str) -> Vec<(f64, String, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let q = match f[2] {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                s => s.parse().unwrap(),
            };
            (f[0].parse().unwrap(), f[1].to_string(), q)
        })
        .collect()
}
