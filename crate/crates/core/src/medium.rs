//! Medium and transmit pulse-complex descriptions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power-law absorption `alpha0 * f^y`, `alpha0` in dB/(cm MHz^y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Absorption {
    pub alpha0: f64,
    pub y: f64,
}

impl Absorption {
    /// Amplitude attenuation in nepers per metre at frequency `f` (Hz).
    pub fn nepers_per_metre(&self, f: f64) -> f64 {
        let db_per_cm = self.alpha0 * (f.abs() / 1e6).powf(self.y);
        db_per_cm * 100.0 / (20.0 / std::f64::consts::LN_10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    /// Small-signal speed of sound, m/s.
    pub c0: f64,
    /// Nonlinearity parameter.
    pub beta_n: f64,
    /// Compressibility, 1/Pa.
    pub kappa: f64,
    #[serde(default)]
    pub absorption: Option<Absorption>,
}

impl Default for MediumSpec {
    fn default() -> Self {
        MediumSpec {
            c0: 1540.0,
            beta_n: 3.5,
            kappa: 400e-12,
            absorption: None,
        }
    }
}

impl MediumSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::NonPositive {
                field: "medium.c0",
                value: self.c0,
            });
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::NonPositive {
                field: "medium.kappa",
                value: self.kappa,
            });
        }
        if !(self.beta_n >= 0.0 && self.beta_n.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "medium.beta_n",
                reason: format!("must be >= 0, got {}", self.beta_n),
            });
        }
        if let Some(a) = self.absorption {
            if !(a.alpha0 >= 0.0 && a.alpha0.is_finite() && a.y.is_finite()) {
                return Err(Error::InvalidParameter {
                    field: "medium.absorption",
                    reason: "alpha0 must be >= 0 and y finite".into(),
                });
            }
        }
        Ok(())
    }

    /// Absorption model if one is configured with a non-zero coefficient.
    pub fn active_absorption(&self) -> Option<Absorption> {
        self.absorption.filter(|a| a.alpha0 > 0.0)
    }

    /// `βn κ`, the fractional sound-speed change per pascal of LF pressure.
    pub fn speed_coefficient(&self) -> f64 {
        self.beta_n * self.kappa
    }
}

/// Sign of the LF manipulation pulse; `Off` disables LF transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Polarity {
    Positive,
    Negative,
    Off,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
            Polarity::Off => 0.0,
        }
    }

    pub fn flipped(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
            Polarity::Off => Polarity::Off,
        }
    }
}

impl TryFrom<i8> for Polarity {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Polarity::Positive),
            -1 => Ok(Polarity::Negative),
            0 => Ok(Polarity::Off),
            other => Err(format!("polarity must be 1, -1 or 0, got {other}")),
        }
    }
}

impl From<Polarity> for i8 {
    fn from(p: Polarity) -> i8 {
        match p {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
            Polarity::Off => 0,
        }
    }
}

/// Time shape of the LF manipulation pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfWaveform {
    /// Gaussian-envelope tone burst at `f_l`.
    #[default]
    Burst,
    /// Quasi-static LF pressure `polarity * p0_l` over the whole window.
    /// Only meaningful for plane-wave oracle runs.
    Constant,
}

/// Dual-frequency transmit parameters. Defaults reproduce the 3.5 MHz setup
/// (HF 3.5 MHz / 50 %, LF 0.5 MHz / 25 %, both focused at 82 mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseComplexSpec {
    pub f_h: f64,
    /// Fractional -6 dB bandwidth of the HF pulse.
    pub bw_h: f64,
    pub f_l: f64,
    pub bw_l: f64,
    /// HF transmit surface pressure, Pa.
    pub p0_h: f64,
    /// LF transmit surface pressure, Pa.
    pub p0_l: f64,
    /// Outer radius of the HF aperture, m.
    pub a_h: f64,
    /// Outer radius of the LF aperture (includes the HF region), m.
    pub a_l: f64,
    pub focus_h: f64,
    pub focus_l: f64,
    /// Delay between HF and LF pulse centres, s.
    pub tau0: f64,
    pub polarity: Polarity,
    #[serde(default)]
    pub lf_waveform: LfWaveform,
}

impl Default for PulseComplexSpec {
    fn default() -> Self {
        PulseComplexSpec {
            f_h: 3.5e6,
            bw_h: 0.5,
            f_l: 0.5e6,
            bw_l: 0.25,
            p0_h: 3.5e6,
            p0_l: 0.85e6,
            a_h: 7.1e-3,
            a_l: 10e-3,
            focus_h: 82e-3,
            focus_l: 82e-3,
            tau0: -0.2e-6,
            polarity: Polarity::Positive,
            lf_waveform: LfWaveform::Burst,
        }
    }
}

impl PulseComplexSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pulse.f_h", self.f_h),
            ("pulse.f_l", self.f_l),
            ("pulse.a_h", self.a_h),
            ("pulse.a_l", self.a_l),
            ("pulse.focus_h", self.focus_h),
            ("pulse.focus_l", self.focus_l),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositive { field, value });
            }
        }
        if self.f_l >= self.f_h {
            return Err(Error::InvalidParameter {
                field: "pulse.f_l",
                reason: format!("LF frequency {} must be below HF frequency {}", self.f_l, self.f_h),
            });
        }
        if self.a_h > self.a_l {
            return Err(Error::InvalidParameter {
                field: "pulse.a_h",
                reason: "HF aperture must lie inside the LF aperture".into(),
            });
        }
        for (field, bw) in [("pulse.bw_h", self.bw_h), ("pulse.bw_l", self.bw_l)] {
            if !(bw > 0.0 && bw < 2.0) {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("fractional bandwidth must be in (0, 2), got {bw}"),
                });
            }
        }
        for (field, p) in [("pulse.p0_h", self.p0_h), ("pulse.p0_l", self.p0_l)] {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("pressure must be >= 0, got {p}"),
                });
            }
        }
        if !self.tau0.is_finite() {
            return Err(Error::InvalidParameter {
                field: "pulse.tau0",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    /// Highest frequency the time grid must represent.
    pub fn f_max(&self) -> f64 {
        4.0 * self.f_h
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_h
    }

    pub fn with_polarity(&self, polarity: Polarity) -> PulseComplexSpec {
        PulseComplexSpec { polarity, ..*self }
    }
}
