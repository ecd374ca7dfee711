//! Run directories: `manifest.json` plus one raw little-endian `f32` array
//! per field, C-order `[z][r][t]`, each guarded by a CRC-32.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldCube, FieldKind};
use crate::grid::Grid;
use crate::medium::{MediumSpec, PulseComplexSpec};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    /// Unique name within the run; also the file stem.
    pub name: String,
    pub kind: FieldKind,
    pub filename: String,
    pub checksum: u32,
    #[serde(default)]
    pub provenance: String,
}

/// Auxiliary structured-text file stored next to the fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    pub filename: String,
    pub checksum: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub grid: Grid,
    pub pulse_spec: PulseComplexSpec,
    pub medium: MediumSpec,
    #[serde(default)]
    pub field_files: Vec<FieldFile>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

impl RunManifest {
    pub fn new(grid: Grid, pulse_spec: PulseComplexSpec, medium: MediumSpec) -> Self {
        RunManifest {
            format_version: FORMAT_VERSION,
            grid,
            pulse_spec,
            medium,
            field_files: Vec::new(),
            attachments: Vec::new(),
        }
    }

    pub fn field(&self, name: &str) -> Option<&FieldFile> {
        self.field_files.iter().find(|f| f.name == name)
    }
}

/// A manifest together with its loaded fields, keyed by field name.
#[derive(Debug, Clone)]
pub struct Run {
    pub manifest: RunManifest,
    pub fields: BTreeMap<String, FieldCube>,
}

impl Run {
    pub fn new(manifest: RunManifest) -> Self {
        Run {
            manifest,
            fields: BTreeMap::new(),
        }
    }

    /// Insert a field under the default name for its kind.
    pub fn with_field(mut self, cube: FieldCube) -> Self {
        self.fields.insert(cube.kind().stem().to_string(), cube);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, cube: FieldCube) {
        self.fields.insert(name.into(), cube);
    }

    pub fn get(&self, name: &str) -> Option<&FieldCube> {
        self.fields.get(name)
    }

    /// Field stored under the default name of `kind`, or `MISSING_FIELD`.
    pub fn require(&self, kind: FieldKind) -> Result<&FieldCube> {
        self.fields
            .get(kind.stem())
            .ok_or_else(|| Error::MissingField(kind.stem().to_string()))
    }
}

fn encode(cube: &FieldCube) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(cube.samples().len() * 4);
    for v in cube.samples() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn decode(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_bytes(&dir.join(MANIFEST_FILE), text.as_bytes())
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::InconsistentManifest(format!("invalid field name `{name}`")))
    }
}

fn field_entry(dir: &Path, name: &str, cube: &FieldCube) -> Result<FieldFile> {
    check_name(name)?;
    let filename = format!("{name}.f32");
    let bytes = encode(cube);
    write_bytes(&dir.join(&filename), &bytes)?;
    Ok(FieldFile {
        name: name.to_string(),
        kind: cube.kind(),
        filename,
        checksum: crc32(&bytes),
        provenance: cube.provenance().to_string(),
    })
}

/// Write a run into `dir`, creating it if needed. The manifest's field list
/// is regenerated from `run.fields`; attachments already listed must exist.
pub fn write_run(run: &Run, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for (name, cube) in &run.fields {
        if *cube.grid() != run.manifest.grid {
            return Err(Error::InconsistentManifest(format!(
                "field `{name}` grid differs from the manifest grid"
            )));
        }
    }
    fs::create_dir_all(dir)?;
    let mut manifest = run.manifest.clone();
    manifest.format_version = FORMAT_VERSION;
    manifest.field_files = run
        .fields
        .iter()
        .map(|(name, cube)| field_entry(dir, name, cube))
        .collect::<Result<_>>()?;
    write_manifest(dir, &manifest)
}

/// Add or replace one field in an existing run directory.
pub fn append_field(dir: impl AsRef<Path>, name: &str, cube: &FieldCube) -> Result<RunManifest> {
    let dir = dir.as_ref();
    let mut manifest = read_manifest(dir)?;
    if *cube.grid() != manifest.grid {
        return Err(Error::InconsistentManifest(format!(
            "field `{name}` grid differs from the manifest grid"
        )));
    }
    let entry = field_entry(dir, name, cube)?;
    manifest.field_files.retain(|f| f.name != name);
    manifest.field_files.push(entry);
    manifest.field_files.sort_by(|a, b| a.name.cmp(&b.name));
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Add or replace a structured-text attachment.
pub fn append_attachment(dir: impl AsRef<Path>, name: &str, contents: &str) -> Result<RunManifest> {
    let dir = dir.as_ref();
    check_name(name)?;
    let mut manifest = read_manifest(dir)?;
    let filename = format!("{name}.json");
    write_bytes(&dir.join(&filename), contents.as_bytes())?;
    manifest.attachments.retain(|a| a.name != name);
    manifest.attachments.push(Attachment {
        name: name.to_string(),
        filename,
        checksum: crc32(contents.as_bytes()),
    });
    manifest.attachments.sort_by(|a, b| a.name.cmp(&b.name));
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Parse and version-check the manifest without loading any field.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<RunManifest> {
    let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::InconsistentManifest("missing format_version".into()))?;
    if found > u64::from(FORMAT_VERSION) {
        return Err(Error::VersionUnsupported {
            found: found.min(u64::from(u32::MAX)) as u32,
            supported: FORMAT_VERSION,
        });
    }
    let manifest: RunManifest = serde_json::from_value(value)?;
    manifest.grid.validate()?;
    Ok(manifest)
}

fn read_checked(dir: &Path, filename: &str, checksum: u32) -> Result<Vec<u8>> {
    let path: PathBuf = dir.join(filename);
    if !path.is_file() {
        return Err(Error::InconsistentManifest(format!(
            "listed file `{filename}` does not exist"
        )));
    }
    let mut bytes = Vec::new();
    File::open(&path)?.read_to_end(&mut bytes)?;
    if crc32(&bytes) != checksum {
        return Err(Error::ChecksumMismatch(path));
    }
    Ok(bytes)
}

/// Load one field by name, verifying size and checksum.
pub fn read_field(dir: impl AsRef<Path>, manifest: &RunManifest, name: &str) -> Result<FieldCube> {
    let entry = manifest
        .field(name)
        .ok_or_else(|| Error::MissingField(name.to_string()))?;
    let bytes = read_checked(dir.as_ref(), &entry.filename, entry.checksum)?;
    if bytes.len() != manifest.grid.len() * 4 {
        return Err(Error::InconsistentManifest(format!(
            "`{}` holds {} bytes, grid expects {}",
            entry.filename,
            bytes.len(),
            manifest.grid.len() * 4
        )));
    }
    FieldCube::new(manifest.grid, entry.kind, decode(&bytes), entry.provenance.clone())
}

/// Read an attachment's text, verifying its checksum.
pub fn read_attachment(dir: impl AsRef<Path>, manifest: &RunManifest, name: &str) -> Result<String> {
    let entry = manifest
        .attachments
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| Error::MissingField(name.to_string()))?;
    let bytes = read_checked(dir.as_ref(), &entry.filename, entry.checksum)?;
    String::from_utf8(bytes).map_err(|e| Error::InconsistentManifest(e.to_string()))
}

/// Load a run directory with every field validated against its checksum.
pub fn read_run(dir: impl AsRef<Path>) -> Result<Run> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mut fields = BTreeMap::new();
    for entry in &manifest.field_files {
        fields.insert(entry.name.clone(), read_field(dir, &manifest, &entry.name)?);
    }
    Ok(Run { manifest, fields })
}
