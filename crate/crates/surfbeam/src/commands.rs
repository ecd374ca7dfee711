//! The batch subcommands: simulate, adjust, quality and sweep.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use surfbeam_core::adjust::{design_equalizer, surf_difference, AdjustmentSpec, GuardBand};
use surfbeam_core::field::FieldKind;
use surfbeam_core::metrics::{
    energy_map, format_db, optimize_tau_fields, quality_general, quality_specific, sweep, write_report_files,
    AdjustmentKind, BeamMode, ImagingRegion, QValue, QualityReport, SweepOptions, TauSearch,
};
use surfbeam_core::propagator::simulate_run;
use surfbeam_core::store::{append_attachment, append_field, read_attachment, read_field, read_manifest, write_run};
use surfbeam_core::{create_grid, slice_time_series, FieldCube, Grid, Run, RunManifest};

use crate::config::{AdjustmentRequest, PipelineConfig, RegionMm};
use crate::error::{CliError, CliResult};

/// Depths used by `quality` when neither flags nor stored adjustments name any, mm.
pub const DEFAULT_QUALITY_DEPTHS_MM: [f64; 6] = [5.0, 10.0, 20.0, 30.0, 40.0, 55.0];

// ---------------------------------------------------------------------------
// flag parsing

fn parse_number(s: &str, what: &str) -> CliResult<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{what}: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::usage(format!("{what}: `{s}` is not finite")));
    }
    Ok(v)
}

/// Comma-separated millimetre list, returned in metres.
pub fn parse_mm_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_number(p, "depth list").map(|v| v * 1e-3))
        .collect()
}

/// `start:stop:step` in millimetres, both ends inclusive, returned in metres.
pub fn parse_mm_range(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::usage(format!("depth range `{s}` must be start:stop:step")));
    }
    let (a, b, step) = (
        parse_number(parts[0], "range start")?,
        parse_number(parts[1], "range stop")?,
        parse_number(parts[2], "range step")?,
    );
    if !(step > 0.0) || b < a {
        return Err(CliError::usage(format!(
            "depth range `{s}` needs start <= stop and step > 0"
        )));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| (a + i as f64 * step) * 1e-3).collect())
}

/// `zn,zf` in millimetres.
pub fn parse_region(s: &str) -> CliResult<RegionMm> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::usage(format!("region `{s}` must be zn,zf in mm")));
    }
    Ok(RegionMm {
        zn_mm: parse_number(parts[0], "region")?,
        zf_mm: parse_number(parts[1], "region")?,
    })
}

pub fn parse_adjustments(s: &str) -> CliResult<Vec<AdjustmentKind>> {
    let mut out = Vec::new();
    for p in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let kind = match p {
            "none" => AdjustmentKind::None,
            "delay" => AdjustmentKind::Delay,
            "equalizer" => AdjustmentKind::Equalizer,
            other => {
                return Err(CliError::usage(format!(
                    "unknown adjustment `{other}` (none, delay, equalizer)"
                )))
            }
        };
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    Ok(out)
}

fn check_depth(grid: &Grid, z: f64, what: &str) -> CliResult<()> {
    let slop = 1e-9 * grid.dz;
    if !(z >= grid.z0 - slop && z <= grid.z_max() + slop) {
        return Err(CliError::usage(format!(
            "INVALID_PARAMETER: {what} {:.3} mm is outside the grid [{:.3}, {:.3}] mm",
            z * 1e3,
            grid.z0 * 1e3,
            grid.z_max() * 1e3
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run access

/// The HF pair (and optional HF⁰ reference) of a run directory.
pub struct LoadedPair {
    pub manifest: RunManifest,
    pub plus: FieldCube,
    pub minus: FieldCube,
    pub zero: Option<FieldCube>,
}

pub fn load_pair(dir: &Path, with_zero: bool) -> CliResult<LoadedPair> {
    let manifest = read_manifest(dir)?;
    let plus = read_field(dir, &manifest, FieldKind::HfPlus.stem())?;
    let minus = read_field(dir, &manifest, FieldKind::HfMinus.stem())?;
    let zero = if with_zero && manifest.field(FieldKind::HfZero.stem()).is_some() {
        Some(read_field(dir, &manifest, FieldKind::HfZero.stem())?)
    } else {
        None
    };
    Ok(LoadedPair {
        manifest,
        plus,
        minus,
        zero,
    })
}

/// Human-readable listing of a manifest.
pub fn manifest_summary(dir: &Path, m: &RunManifest) -> String {
    let g = &m.grid;
    let mut s = String::new();
    let _ = writeln!(s, "run {}", dir.display());
    let _ = writeln!(
        s,
        "  grid  nz={} dz={:.4} mm  nr={} dr={:.4} mm  nt={} dt={:.3} ns  z_max={:.2} mm",
        g.nz,
        g.dz * 1e3,
        g.nr,
        g.dr * 1e3,
        g.nt,
        g.dt * 1e9,
        g.z_max() * 1e3
    );
    let p = &m.pulse_spec;
    let _ = writeln!(
        s,
        "  pulse HF {:.3} MHz / {:.2}, LF {:.3} MHz / {:.2}, p0_H {:.3} MPa, p0_L {:.3} MPa",
        p.f_h * 1e-6,
        p.bw_h,
        p.f_l * 1e-6,
        p.bw_l,
        p.p0_h * 1e-6,
        p.p0_l * 1e-6
    );
    for f in &m.field_files {
        let _ = writeln!(
            s,
            "  field {:<28} {:<10} crc32={:08x}",
            f.filename,
            f.kind.stem(),
            f.checksum
        );
    }
    for a in &m.attachments {
        let _ = writeln!(s, "  attachment {:<23} crc32={:08x}", a.filename, a.checksum);
    }
    s
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// `"FULL"` or `"PLANE_WAVE"` forced from the command line.
    pub mode: Option<String>,
    pub lf: bool,
}

/// Resolve the effective config: file (or `{}`), then flag overrides.
pub fn resolve_config(args: &SimulateArgs) -> CliResult<PipelineConfig> {
    let mut patch: Value = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config: malformed JSON: {e}")))?
        }
        None => Value::Object(Default::default()),
    };
    if let (Some(mode), Some(obj)) = (&args.mode, patch.as_object_mut()) {
        let prop = obj
            .entry("propagation")
            .or_insert_with(|| Value::Object(Default::default()));
        match prop.as_object_mut() {
            Some(p) => {
                p.insert("mode".into(), Value::String(mode.clone()));
            }
            None => return Err(CliError::usage("config: field `propagation`: expected an object")),
        }
    }
    let mut cfg = PipelineConfig::from_value(patch)?;
    if args.lf {
        cfg.propagation.record_lf = true;
    }
    Ok(cfg)
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<String> {
    let cfg = resolve_config(args)?;
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output.run_dir.clone())
        .ok_or_else(|| CliError::usage("simulate needs --out or output.run_dir in the config"))?;
    let grid = create_grid(&cfg.grid, cfg.f_max())?;
    let sim = simulate_run(&cfg.pulse, &cfg.medium, &grid, &cfg.propagation)?;
    let mut run = Run::new(RunManifest::new(grid, cfg.pulse, cfg.medium))
        .with_field(sim.plus.clone())
        .with_field(sim.minus.clone())
        .with_field(sim.zero);
    if let Some(lf) = sim.lf {
        run = run.with_field(lf);
    }
    write_run(&run, &dir)?;
    let text = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    let mut manifest = append_attachment(&dir, "config", &text)?;
    for req in &cfg.adjustments {
        let outcome = adjust_pair(&dir, &manifest, &sim.plus, &sim.minus, req, &cfg.region())?;
        manifest = outcome.manifest;
    }
    Ok(manifest_summary(&dir, &manifest))
}

// ---------------------------------------------------------------------------
// adjust

pub struct AdjustOutcome {
    pub tag: String,
    pub spec: AdjustmentSpec,
    pub manifest: RunManifest,
}

/// Stable name suffix for a stored adjustment.
pub fn adjustment_tag(spec: &AdjustmentSpec) -> String {
    match spec {
        AdjustmentSpec::PureDelay { tau_a, .. } => format!("delay_{:.2}ns", tau_a * 1e9),
        AdjustmentSpec::Equalizer(eq) => format!("equalizer_{:.2}mm", eq.z_a * 1e3),
    }
}

/// Turn a request into a concrete adjustment for the pair.
pub fn resolve_adjustment(
    manifest: &RunManifest,
    plus: &FieldCube,
    minus: &FieldCube,
    req: &AdjustmentRequest,
    region: &ImagingRegion,
) -> CliResult<AdjustmentSpec> {
    let grid = &manifest.grid;
    let spec = match *req {
        AdjustmentRequest::Delay { tau_ns: Some(t), za_mm } => {
            if let Some(z) = za_mm {
                check_depth(grid, z * 1e-3, "za")?;
            }
            AdjustmentSpec::PureDelay {
                tau_a: t * 1e-9,
                z_a: za_mm.map(|z| z * 1e-3),
            }
        }
        AdjustmentRequest::Delay {
            tau_ns: None,
            za_mm: Some(z),
        } => {
            let z_a = z * 1e-3;
            check_depth(grid, z_a, "za")?;
            let best = optimize_tau_fields(plus, minus, z_a, region, &TauSearch::symmetric(manifest.pulse_spec.f_h))?;
            AdjustmentSpec::PureDelay {
                tau_a: best.tau_a,
                z_a: Some(z_a),
            }
        }
        AdjustmentRequest::Delay {
            tau_ns: None,
            za_mm: None,
        } => {
            return Err(CliError::usage("delay adjustment needs --tau-ns or --za-mm"));
        }
        AdjustmentRequest::Equalizer { za_mm, epsilon } => {
            let z_a = za_mm * 1e-3;
            check_depth(grid, z_a, "za")?;
            let iz = grid.nearest_z(z_a);
            AdjustmentSpec::Equalizer(design_equalizer(
                &slice_time_series(plus, iz, 0)?,
                &slice_time_series(minus, iz, 0)?,
                epsilon,
                GuardBand::for_pulse(&manifest.pulse_spec),
                z_a,
            )?)
        }
    };
    spec.validate(manifest.pulse_spec.f_h)?;
    Ok(spec)
}

fn adjust_pair(
    dir: &Path,
    manifest: &RunManifest,
    plus: &FieldCube,
    minus: &FieldCube,
    req: &AdjustmentRequest,
    region: &ImagingRegion,
) -> CliResult<AdjustOutcome> {
    let spec = resolve_adjustment(manifest, plus, minus, req, region)?;
    let tag = adjustment_tag(&spec);
    let adjusted = spec.apply(minus)?;
    let diff = surf_difference(plus, &adjusted)?;
    append_field(dir, &format!("adjusted_{tag}"), &adjusted)?;
    append_field(dir, &format!("difference_{tag}"), &diff)?;
    let text = serde_json::to_string_pretty(&spec).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    let manifest = append_attachment(dir, &format!("adjust_{tag}"), &text)?;
    Ok(AdjustOutcome { tag, spec, manifest })
}

#[derive(Debug, Clone)]
pub struct AdjustArgs {
    pub run: PathBuf,
    pub request: AdjustmentRequest,
    pub region: Option<RegionMm>,
}

pub fn cmd_adjust(args: &AdjustArgs) -> CliResult<AdjustOutcome> {
    let pair = load_pair(&args.run, false)?;
    let region = args.region.unwrap_or_default().to_region();
    adjust_pair(
        &args.run,
        &pair.manifest,
        &pair.plus,
        &pair.minus,
        &args.request,
        &region,
    )
}

// ---------------------------------------------------------------------------
// quality (direct route: materialized difference cubes)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectQualityRow {
    /// `fundamental`, `none` or the stored adjustment tag.
    pub adjustment: String,
    pub z_a_mm: f64,
    pub z_slice_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_ns: Option<f64>,
    pub q_za: QValue,
    pub q: QValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectQualityReport {
    pub region: RegionMm,
    pub z_a_mm: Vec<f64>,
    pub rows: Vec<DirectQualityRow>,
}

impl DirectQualityReport {
    pub fn q_za_csv(&self) -> String {
        let mut s = String::from("z_a_mm,adjustment,Q_dB\n");
        for r in &self.rows {
            let _ = writeln!(s, "{:.4},{},{}", r.z_a_mm, r.adjustment, format_db(&r.q_za));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct QualityArgs {
    pub run: PathBuf,
    pub region: Option<RegionMm>,
    /// Metres.
    pub za_list: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

struct StoredAdjustment {
    tag: String,
    spec: Option<AdjustmentSpec>,
}

fn stored_adjustments(dir: &Path, m: &RunManifest) -> CliResult<Vec<StoredAdjustment>> {
    let mut out = Vec::new();
    for f in m.field_files.iter().filter(|f| f.kind == FieldKind::Difference) {
        let Some(tag) = f.name.strip_prefix("difference_") else {
            continue;
        };
        let name = format!("adjust_{tag}");
        let spec = if m.attachments.iter().any(|a| a.name == name) {
            let text = read_attachment(dir, m, &name)?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Runtime(format!("INCONSISTENT_MANIFEST: {name}: {e}")))?,
            )
        } else {
            None
        };
        out.push(StoredAdjustment {
            tag: tag.to_string(),
            spec,
        });
    }
    Ok(out)
}

fn dedup_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

/// Quality of the unadjusted difference, every stored difference and the
/// fundamental baseline, evaluated on materialized cubes.
pub fn quality_report(dir: &Path, region: RegionMm, za_list: Option<&[f64]>) -> CliResult<DirectQualityReport> {
    let pair = load_pair(dir, true)?;
    let grid = pair.manifest.grid;
    let reg = region.to_region();
    reg.validate(&grid)?;
    let stored = stored_adjustments(dir, &pair.manifest)?;
    let explicit = za_list.is_some();
    let depths = match za_list {
        Some(list) => dedup_sorted(list.to_vec()),
        None => {
            let recorded: Vec<f64> = stored
                .iter()
                .filter_map(|s| s.spec.as_ref().and_then(|a| a.z_a()))
                .collect();
            if recorded.is_empty() {
                DEFAULT_QUALITY_DEPTHS_MM.iter().map(|z| z * 1e-3).collect()
            } else {
                dedup_sorted(recorded)
            }
        }
    };
    for &z in &depths {
        check_depth(&grid, z, "za")?;
    }

    let mut rows = Vec::new();
    let mut push_rows = |name: &str, cube: &FieldCube, at: &[f64], tau_ns: Option<f64>| -> CliResult<()> {
        let e = energy_map(cube);
        let q = quality_general(&e, &reg)?;
        for &z in at {
            rows.push(DirectQualityRow {
                adjustment: name.to_string(),
                z_a_mm: z * 1e3,
                z_slice_mm: grid.z(grid.nearest_z(z)) * 1e3,
                tau_ns,
                q_za: quality_specific(&e, &reg, z)?,
                q,
            });
        }
        Ok(())
    };
    if let Some(zero) = &pair.zero {
        push_rows("fundamental", zero, &depths, None)?;
    }
    push_rows("none", &surf_difference(&pair.plus, &pair.minus)?, &depths, None)?;
    drop(pair);
    for s in &stored {
        let cube = read_field(dir, &read_manifest(dir)?, &format!("difference_{}", s.tag))?;
        let own = s.spec.as_ref().and_then(|a| a.z_a());
        let at = match own {
            Some(z) if !explicit => vec![z],
            _ => depths.clone(),
        };
        let tau_ns = match &s.spec {
            Some(AdjustmentSpec::PureDelay { tau_a, .. }) => Some(tau_a * 1e9),
            _ => None,
        };
        push_rows(&s.tag, &cube, &at, tau_ns)?;
    }
    Ok(DirectQualityReport {
        region,
        z_a_mm: depths.iter().map(|z| z * 1e3).collect(),
        rows,
    })
}

pub fn cmd_quality(args: &QualityArgs) -> CliResult<(DirectQualityReport, PathBuf)> {
    let report = quality_report(&args.run, args.region.unwrap_or_default(), args.za_list.as_deref())?;
    let out = args.out.clone().unwrap_or_else(|| args.run.join("quality"));
    fs::create_dir_all(&out)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    fs::write(out.join("quality.json"), json)?;
    fs::write(out.join("q_za.csv"), report.q_za_csv())?;
    Ok((report, out))
}

// ---------------------------------------------------------------------------
// sweep (spectral fast route)

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub run: PathBuf,
    /// Metres; `None` keeps the 1–55 mm default.
    pub za: Option<Vec<f64>>,
    pub adjustments: Option<Vec<AdjustmentKind>>,
    pub region: Option<RegionMm>,
    /// Metres.
    pub beams: Vec<f64>,
    pub beam_mode: Option<BeamMode>,
    pub epsilon: Option<f64>,
    pub tau_points: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn sweep_options(manifest: &RunManifest, args: &SweepArgs) -> CliResult<SweepOptions> {
    let mut opts = SweepOptions::for_pulse(&manifest.pulse_spec);
    if let Some(z) = &args.za {
        opts.z_a = z.clone();
    }
    if let Some(a) = &args.adjustments {
        opts.adjustments = a.clone();
    }
    if let Some(r) = args.region {
        opts.region = r.to_region();
    }
    if let Some(m) = args.beam_mode {
        opts.beam_mode = m;
    }
    if let Some(e) = args.epsilon {
        opts.epsilon = e;
    }
    if let Some(n) = args.tau_points {
        opts.tau_curve_points = n;
    }
    opts.beam_z_a = args.beams.clone();
    for &z in opts.z_a.iter().chain(&opts.beam_z_a) {
        check_depth(&manifest.grid, z, "za")?;
    }
    Ok(opts)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<(QualityReport, PathBuf)> {
    let pair = load_pair(&args.run, true)?;
    let opts = sweep_options(&pair.manifest, args)?;
    let report = sweep(&pair.plus, &pair.minus, pair.zero.as_ref(), &opts)?;
    let out = args.out.clone().unwrap_or_else(|| args.run.join("sweep"));
    write_report_files(&report, &out)?;
    Ok((report, out))
}

/// One-line-per-depth digest of a sweep for the terminal.
pub fn sweep_summary(report: &QualityReport) -> String {
    let mut s = String::from("z_a_mm  adjustment  Q_za_dB     Q_dB        tau_ns\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:>6.2}  {:<10}  {:>10}  {:>10}  {}",
            r.z_a * 1e3,
            r.adjustment.tag(),
            format_db(&r.q_za),
            format_db(&r.q),
            r.tau_a.map(|t| format!("{:.3}", t * 1e9)).unwrap_or_else(|| "-".into())
        );
    }
    if let Some(f) = &report.fundamental {
        let _ = writeln!(s, "fundamental Q_dB {}", format_db(&f.q));
    }
    s
}

/// Distinct run directories under `path`: itself if it holds a manifest,
/// otherwise its immediate subdirectories that do.
pub fn discover_runs(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.join(surfbeam_core::store::MANIFEST_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| CliError::usage(format!("workspace {}: {e}", path.display())))?;
    let mut dirs = BTreeSet::new();
    for entry in entries {
        let p = entry?.path();
        if p.join(surfbeam_core::store::MANIFEST_FILE).is_file() {
            dirs.insert(p);
        }
    }
    Ok(dirs.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_is_inclusive() {
        let r = parse_mm_range("1:55:1").unwrap();
        assert_eq!(r.len(), 55);
        assert!((r[54] - 55e-3).abs() < 1e-15);
        assert_eq!(parse_mm_range("5:5:1").unwrap().len(), 1);
        assert!(parse_mm_range("5:1:1").is_err());
        assert!(parse_mm_range("1:5").is_err());
    }

    #[test]
    fn list_and_region() {
        assert_eq!(parse_mm_list("5,10,20,30,40,55").unwrap().len(), 6);
        assert!(parse_mm_list("5,x").is_err());
        assert_eq!(
            parse_region("60,130").unwrap(),
            RegionMm {
                zn_mm: 60.0,
                zf_mm: 130.0
            }
        );
    }

    #[test]
    fn adjustment_flags() {
        assert_eq!(parse_adjustments("none").unwrap(), vec![AdjustmentKind::None]);
        assert_eq!(parse_adjustments("delay,delay,equalizer").unwrap().len(), 2);
        assert_eq!(parse_adjustments("wiener").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn tags() {
        let d = AdjustmentSpec::PureDelay {
            tau_a: 7.1e-9,
            z_a: None,
        };
        assert_eq!(adjustment_tag(&d), "delay_7.10ns");
        let d = AdjustmentSpec::PureDelay {
            tau_a: -21e-9,
            z_a: None,
        };
        assert_eq!(adjustment_tag(&d), "delay_-21.00ns");
    }
}
