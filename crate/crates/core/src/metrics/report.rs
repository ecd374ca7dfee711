//! CSV and JSON renderings of a [`QualityReport`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::sweep::{AdjustmentKind, QualityReport};
use super::{BeamMap, QValue};
use crate::error::Result;

/// `Q` in dB with six decimals; sentinels print as `inf`.
pub fn format_db(q: &QValue) -> String {
    if q.db.is_finite() {
        format!("{:.6}", q.db)
    } else if q.db > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn q_za_csv(report: &QualityReport) -> String {
    let mut s = String::from("z_a_mm,adjustment,Q_dB\n");
    if let Some(f) = &report.fundamental {
        for (z, q) in report.z_a.iter().zip(&f.q_za) {
            let _ = writeln!(s, "{:.4},fundamental,{}", z * 1e3, format_db(q));
        }
    }
    for kind in AdjustmentKind::ALL {
        for r in report.rows.iter().filter(|r| r.adjustment == kind) {
            let _ = writeln!(s, "{:.4},{},{}", r.z_a * 1e3, kind.tag(), format_db(&r.q_za));
        }
    }
    s
}

pub fn tau_opt_csv(report: &QualityReport) -> String {
    let mut s = String::from("z_a_mm,tau_ns\n");
    for (z, t) in report.tau_opt() {
        let _ = writeln!(s, "{:.4},{:.6}", z * 1e3, t * 1e9);
    }
    s
}

pub fn q_vs_tau_csv(report: &QualityReport) -> String {
    let mut s = String::from("tau_ns,Q_dB\n");
    for p in &report.q_vs_tau {
        let _ = writeln!(s, "{:.6},{}", p.tau_a * 1e9, format_db(&p.q));
    }
    s
}

pub fn beam_csv(map: &BeamMap) -> String {
    let g = &map.grid;
    let mut s = String::from("z_mm,r_mm,value\n");
    for iz in 0..g.nz {
        for ir in 0..g.nr {
            let _ = writeln!(s, "{:.4},{:.4},{:.9e}", g.z(iz) * 1e3, g.r(ir) * 1e3, map.at(iz, ir));
        }
    }
    s
}

pub fn write_beam_csv(map: &BeamMap, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, beam_csv(map))?)
}

#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub written: Vec<PathBuf>,
}

/// Write `quality.json`, `q_za.csv`, `tau_opt.csv`, `q_vs_tau.csv` and one
/// `beam_<tag>.csv` per beam map into `dir`.
pub fn write_report_files(report: &QualityReport, dir: impl AsRef<Path>) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut files = ReportFiles::default();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        files.written.push(p);
        Ok(())
    };
    put("quality.json".into(), serde_json::to_string_pretty(report)? + "\n")?;
    put("q_za.csv".into(), q_za_csv(report))?;
    put("tau_opt.csv".into(), tau_opt_csv(report))?;
    put("q_vs_tau.csv".into(), q_vs_tau_csv(report))?;
    for b in &report.beams {
        if let Some(map) = &b.map {
            put(format!("beam_{}.csv", b.tag), beam_csv(map))?;
        }
    }
    Ok(files)
}
