//! Pipeline configuration files.
//!
//! A config is a JSON object whose every key is optional: the user's object
//! is merged over the serialized defaults before typed decoding, so a file
//! may override a single nested value (`{"pulse": {"p0_l": 0}}`). Decoding
//! errors name the offending path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use surfbeam_core::adjust::DEFAULT_EPSILON;
use surfbeam_core::metrics::ImagingRegion;
use surfbeam_core::propagator::{Mode, PropagationConfig};
use surfbeam_core::{GridConfig, LfWaveform, MediumSpec, PulseComplexSpec};

use crate::error::{CliError, CliResult};

/// Region in millimetres, as written in config files and flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionMm {
    pub zn_mm: f64,
    pub zf_mm: f64,
}

impl Default for RegionMm {
    fn default() -> Self {
        let r = ImagingRegion::default();
        RegionMm {
            zn_mm: r.z_n * 1e3,
            zf_mm: r.z_f * 1e3,
        }
    }
}

impl RegionMm {
    pub fn to_region(self) -> ImagingRegion {
        ImagingRegion {
            z_n: self.zn_mm * 1e-3,
            z_f: self.zf_mm * 1e-3,
        }
    }
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// One adjustment to apply right after simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
pub enum AdjustmentRequest {
    /// Fixed delay if `tau_ns` is given, otherwise the delay maximizing
    /// `Q_za` at `za_mm`.
    Delay {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau_ns: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        za_mm: Option<f64>,
    },
    Equalizer {
        za_mm: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Run directory written by `simulate` when `--out` is not given.
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub pulse: PulseComplexSpec,
    pub medium: MediumSpec,
    pub propagation: PropagationConfig,
    pub adjustments: Vec<AdjustmentRequest>,
    pub region: RegionMm,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: GridConfig::default(),
            pulse: PulseComplexSpec::default(),
            medium: MediumSpec::default(),
            propagation: PropagationConfig::default(),
            adjustments: Vec::new(),
            region: RegionMm::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Recursively overlay `patch` onto `base`. Objects merge key by key;
/// anything else (arrays included) replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl PipelineConfig {
    /// Decode a config document merged over the defaults.
    pub fn from_json_str(text: &str) -> CliResult<Self> {
        let patch: Value =
            serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: malformed JSON: {e}")))?;
        Self::from_value(patch)
    }

    pub fn from_value(patch: Value) -> CliResult<Self> {
        if !patch.is_object() {
            return Err(CliError::usage("config: top level must be an object"));
        }
        let plane_wave_oracle = patch
            .pointer("/propagation/mode")
            .and_then(Value::as_str)
            .is_some_and(|m| matches!(m, "PLANE_WAVE" | "plane-wave" | "plane_wave"));
        let waveform_given = patch.pointer("/pulse/lf_waveform").is_some();
        let nr_given = patch.pointer("/grid/nr").is_some();
        let mut value = serde_json::to_value(PipelineConfig::default()).expect("defaults serialize");
        merge(&mut value, patch);
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            CliError::usage(format!("config: field `{path}`: {}", e.inner()))
        })?;
        if plane_wave_oracle {
            cfg.apply_plane_wave(nr_given, waveform_given);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Switch to the plane-wave oracle: one on-axis series and, unless the
    /// config chose otherwise, a quasi-static LF pressure.
    pub fn apply_plane_wave(&mut self, keep_nr: bool, keep_waveform: bool) {
        self.propagation.mode = Mode::PlaneWave;
        if !keep_nr {
            self.grid.nr = 1;
        }
        if !keep_waveform {
            self.pulse.lf_waveform = LfWaveform::Constant;
        }
    }

    pub fn region(&self) -> ImagingRegion {
        self.region.to_region()
    }

    /// Highest frequency the time grid must resolve.
    pub fn f_max(&self) -> f64 {
        self.pulse.f_max()
    }
}
