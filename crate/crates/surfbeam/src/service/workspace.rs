//! Runs served by one process. Manifests are read at startup; field cubes
//! and derived per-run data load on first use.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use surfbeam_core::adjust::{estimate_shift_map, ShiftMap, DEFAULT_WINDOW};
use surfbeam_core::field::FieldKind;
use surfbeam_core::metrics::SpectralAggregates;
use surfbeam_core::store::{crc32, read_field, read_manifest, MANIFEST_FILE};
use surfbeam_core::{FieldCube, RunManifest};

use super::error::ApiError;
use crate::commands::discover_runs;
use crate::error::CliResult;

type Lazy<T> = OnceLock<Result<Arc<T>, ApiError>>;

pub struct RunData {
    pub plus: FieldCube,
    pub minus: FieldCube,
    pub zero: Option<FieldCube>,
    aggregates: Lazy<SpectralAggregates>,
    shift: Lazy<ShiftMap>,
}

impl RunData {
    pub fn aggregates(&self) -> Result<Arc<SpectralAggregates>, ApiError> {
        self.aggregates
            .get_or_init(|| Ok(Arc::new(SpectralAggregates::new(&self.plus, &self.minus)?)))
            .clone()
    }

    pub fn shift_map(&self) -> Result<Arc<ShiftMap>, ApiError> {
        self.shift
            .get_or_init(|| Ok(Arc::new(estimate_shift_map(&self.plus, &self.minus, DEFAULT_WINDOW)?)))
            .clone()
    }
}

pub struct RunHandle {
    /// CRC-32 of the manifest bytes, hex.
    pub id: String,
    /// Directory name.
    pub name: String,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    data: Lazy<RunData>,
}

impl RunHandle {
    pub fn open(dir: &Path, taken: &mut HashSet<String>) -> CliResult<Self> {
        let bytes = fs::read(dir.join(MANIFEST_FILE))?;
        let manifest = read_manifest(dir)?;
        let base = format!("{:08x}", crc32(&bytes));
        let mut id = base.clone();
        let mut n = 2;
        while !taken.insert(id.clone()) {
            id = format!("{base}-{n}");
            n += 1;
        }
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        Ok(RunHandle {
            id,
            name,
            dir: dir.to_path_buf(),
            manifest,
            data: OnceLock::new(),
        })
    }

    pub fn data(&self) -> Result<Arc<RunData>, ApiError> {
        self.data
            .get_or_init(|| {
                let m = &self.manifest;
                let plus = read_field(&self.dir, m, FieldKind::HfPlus.stem())?;
                let minus = read_field(&self.dir, m, FieldKind::HfMinus.stem())?;
                let zero = match m.field(FieldKind::HfZero.stem()) {
                    Some(_) => Some(read_field(&self.dir, m, FieldKind::HfZero.stem())?),
                    None => None,
                };
                Ok(Arc::new(RunData {
                    plus,
                    minus,
                    zero,
                    aggregates: OnceLock::new(),
                    shift: OnceLock::new(),
                }))
            })
            .clone()
    }
}

pub struct Workspace {
    pub root: PathBuf,
    pub runs: Vec<Arc<RunHandle>>,
}

impl Workspace {
    /// A single run directory, or a directory whose subdirectories are runs.
    pub fn open(path: &Path) -> CliResult<Self> {
        let mut taken = HashSet::new();
        let runs = discover_runs(path)?
            .iter()
            .map(|d| RunHandle::open(d, &mut taken).map(Arc::new))
            .collect::<CliResult<_>>()?;
        Ok(Workspace {
            root: path.to_path_buf(),
            runs,
        })
    }

    pub fn get(&self, id: &str) -> Option<Arc<RunHandle>> {
        self.runs.iter().find(|r| r.id == id).cloned()
    }
}
