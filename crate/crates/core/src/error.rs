use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time step {dt:e} s under-samples f_max (limit {limit:e} s)")]
    UnderSampled { dt: f64, limit: f64 },
    #[error("`{field}` must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("index ({iz}, {ir}) out of range for grid {nz}x{nr}")]
    IndexOutOfRange { iz: usize, ir: usize, nz: usize, nr: usize },
    #[error("LF aperture radius {radius:e} m needs a radial grid extent of at least twice that, have {extent:e} m")]
    ApertureExceedsGrid { radius: f64, extent: f64 },
    #[error("time warp of {samples:.3} samples per step exceeds 0.5; reduce dz_step")]
    WarpTooLarge { samples: f64 },
    #[error("delay {tau:e} s exceeds the allowed bound {limit:e} s")]
    DelayTooLarge { tau: f64, limit: f64 },
    #[error("equalizer reference series has no energy")]
    SilentReference,
    #[error("field grids do not match")]
    GridMismatch,
    #[error("run is missing a {0} field")]
    MissingField(String),
    #[error("inconsistent manifest: {0}")]
    InconsistentManifest(String),
    #[error("checksum mismatch in {}", .0.display())]
    ChecksumMismatch(PathBuf),
    #[error("unsupported format version {found} (max {supported})")]
    VersionUnsupported { found: u32, supported: u32 },
    #[error("non-finite sample in {0} field")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnderSampled { .. } => "UNDER_SAMPLED",
            Error::NonPositive { .. } => "NON_POSITIVE_STEP",
            Error::InvalidParameter { .. } => "INVALID_PARAMETER",
            Error::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
            Error::ApertureExceedsGrid { .. } => "APERTURE_EXCEEDS_GRID",
            Error::WarpTooLarge { .. } => "WARP_TOO_LARGE",
            Error::DelayTooLarge { .. } => "DELAY_TOO_LARGE",
            Error::SilentReference => "SILENT_REFERENCE",
            Error::GridMismatch => "GRID_MISMATCH",
            Error::MissingField(_) => "MISSING_FIELD",
            Error::InconsistentManifest(_) => "INCONSISTENT_MANIFEST",
            Error::ChecksumMismatch(_) => "CHECKSUM_MISMATCH",
            Error::VersionUnsupported { .. } => "VERSION_UNSUPPORTED",
            Error::NonFinite(_) => "NON_FINITE",
            Error::Io(_) => "IO_FAILURE",
            Error::Json(_) => "IO_FAILURE",
        }
    }

    /// True for errors caused by the caller's inputs rather than data or IO.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::UnderSampled { .. }
                | Error::NonPositive { .. }
                | Error::InvalidParameter { .. }
                | Error::IndexOutOfRange { .. }
                | Error::ApertureExceedsGrid { .. }
                | Error::WarpTooLarge { .. }
                | Error::DelayTooLarge { .. }
        )
    }
}
