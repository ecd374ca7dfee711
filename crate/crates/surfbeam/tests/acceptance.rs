//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p surfbeam --test acceptance`. Every criterion is
//! evaluated even when an earlier one fails. With
//! `SURFBEAM_ACCEPTANCE_STRICT=1` the process exits non-zero if any did.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use surfbeam::config::PipelineConfig;
use surfbeam_core::adjust::{
    delay_series, design_equalizer, equalize_series, estimate_shift_map, GuardBand, DEFAULT_WINDOW,
};
use surfbeam_core::metrics::{
    delay_phase_equiv, difference_beam_map, gain_factor, sweep, Adjust, AdjustmentKind, BeamMode, QualityReport,
    SweepOptions,
};
use surfbeam_core::propagator::{plane_wave_oracle_tau, simulate_run, PropagationConfig, SimulatedRun};
use surfbeam_core::{
    create_grid, read_run, slice_time_series, write_run, FieldCube, Grid, GridConfig, LfWaveform, MediumSpec,
    PulseComplexSpec, Run, RunManifest,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// shared fixtures

fn scratch() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("temp dir")).path()
}

struct Desk {
    config: PipelineConfig,
    sim: SimulatedRun,
    dir: PathBuf,
    simulate_time: Duration,
    report: QualityReport,
    sweep_time: Duration,
}

/// The default (Table-I scale) FULL run, stored once and swept over 1–55 mm.
fn desk() -> &'static Desk {
    static D: OnceLock<Desk> = OnceLock::new();
    D.get_or_init(|| {
        let config = PipelineConfig::default();
        let grid = create_grid(&config.grid, config.f_max()).expect("desk grid");
        let t0 = Instant::now();
        let sim = simulate_run(&config.pulse, &config.medium, &grid, &config.propagation).expect("desk run");
        let simulate_time = t0.elapsed();
        let dir = scratch().join("desk");
        let run = Run::new(RunManifest::new(grid, config.pulse, config.medium))
            .with_field(sim.plus.clone())
            .with_field(sim.minus.clone())
            .with_field(sim.zero.clone());
        write_run(&run, &dir).expect("store desk run");
        let mut opts = SweepOptions::for_pulse(&config.pulse);
        opts.region = config.region();
        let t1 = Instant::now();
        let report = sweep(&sim.plus, &sim.minus, Some(&sim.zero), &opts).expect("desk sweep");
        let sweep_time = t1.elapsed();
        Desk {
            config,
            sim,
            dir,
            simulate_time,
            report,
            sweep_time,
        }
    })
}

fn plane_grid(nz: usize, dz: f64, nt: usize) -> Grid {
    create_grid(
        &GridConfig {
            nz,
            dz,
            z0: 0.0,
            nr: 1,
            dr: 1e-3,
            nt,
            dt: 10e-9,
            t0: None,
        },
        14e6,
    )
    .expect("plane-wave grid")
}

fn plane_spec(p_l: f64, bw_h: f64) -> PulseComplexSpec {
    PulseComplexSpec {
        p0_l: p_l,
        bw_h,
        lf_waveform: LfWaveform::Constant,
        ..PulseComplexSpec::default()
    }
}

fn to64(s: &[f32]) -> Vec<f64> {
    s.iter().map(|&v| f64::from(v)).collect()
}

fn diff_energy(plus: &[f32], minus_adj: &[f64]) -> f64 {
    plus.iter()
        .zip(minus_adj)
        .map(|(&p, &m)| (f64::from(p) - m).powi(2))
        .sum()
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn series_peak(s: impl IntoIterator<Item = f64>) -> f64 {
    s.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

// ---------------------------------------------------------------------------
// criteria

const P_L: f64 = 0.5e6;

fn plane_run() -> &'static (SimulatedRun, Duration) {
    static R: OnceLock<(SimulatedRun, Duration)> = OnceLock::new();
    R.get_or_init(|| {
        let t0 = Instant::now();
        let run = simulate_run(
            &plane_spec(P_L, PulseComplexSpec::default().bw_h),
            &MediumSpec::default(),
            &plane_grid(27, 5e-3, 1024),
            &PropagationConfig::plane_wave(),
        )
        .expect("plane-wave run");
        (run, t0.elapsed())
    })
}

fn c1_plane_wave_oracle() -> Outcome {
    let t0 = Instant::now();
    let (run, _) = plane_run();
    let map = estimate_shift_map(&run.plus, &run.minus, DEFAULT_WINDOW).expect("shift map");
    let elapsed = t0.elapsed();
    let g = *run.plus.grid();
    let medium = MediumSpec::default();
    let mut worst = 0.0_f64;
    let mut at_zero_ok = true;
    for iz in 0..g.nz {
        let want = plane_wave_oracle_tau(g.z(iz), &medium, P_L);
        let got = map.tau_at(iz, 0);
        if want == 0.0 {
            at_zero_ok &= got.abs() < 1e-12;
        } else {
            worst = worst.max((got - want).abs() / want);
        }
    }
    let ok = worst <= 0.01 && at_zero_ok && elapsed < Duration::from_secs(10);
    outcome(
        ok,
        format!(
            "max relative error {:.4}% over {} depths (0-{:.0} mm), tau(z=0) zero: {at_zero_ok}, runtime {:.2} s",
            worst * 100.0,
            g.nz,
            g.z_max() * 1e3,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_gain_factor_law() -> Outcome {
    let spec0 = PulseComplexSpec::default();
    let omega0 = spec0.omega0();
    let half = 1.0 / (2.0 * spec0.f_h);
    let medium = MediumSpec::default();
    let grid = plane_grid(66, 2e-3, 2048);
    // LF level chosen so the accumulated delay spans the whole [0, 1/(2 f_H)]
    let p_l = P_L * half / plane_wave_oracle_tau(grid.z_max(), &medium, P_L) * 1.02;
    let run = match simulate_run(&plane_spec(p_l, 0.1), &medium, &grid, &PropagationConfig::plane_wave()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("narrowband run failed: {e}")),
    };
    let mut worst = 0.0_f64;
    let mut worst_at = 0.0;
    let mut tested = 0;
    let mut zero_ok = true;
    for iz in 0..grid.nz {
        let tau = plane_wave_oracle_tau(grid.z(iz), &medium, p_l);
        if tau > half {
            continue;
        }
        let s0 = series_peak(to64(run.zero.series(iz, 0)));
        let sd = series_peak(
            run.plus
                .series(iz, 0)
                .iter()
                .zip(run.minus.series(iz, 0))
                .map(|(&a, &b)| f64::from(a) - f64::from(b)),
        );
        let measured = sd / s0;
        let predicted = gain_factor(omega0, tau).abs();
        tested += 1;
        if predicted == 0.0 {
            zero_ok &= measured == 0.0;
            continue;
        }
        let err = (measured - predicted).abs() / predicted;
        if err > worst {
            worst = err;
            worst_at = tau;
        }
    }
    // landmarks of the model itself
    let g_max = gain_factor(omega0, PI / omega0);
    let g_min = gain_factor(omega0, 0.0);
    let first_max = (0..=1000).all(|i| gain_factor(omega0, half * i as f64 / 1000.0).abs() <= g_max);
    let ok = worst <= 0.05 && zero_ok && g_max == 2.0 && g_min == 0.0 && first_max && tested > 10;
    outcome(
        ok,
        format!(
            "{tested} depths, tau_tot up to {:.1} ns: max relative deviation {:.2}% (at tau_tot = {:.1} ns); |G| = {g_max} at w0*tau = pi, {g_min} at 0",
            plane_wave_oracle_tau(grid.z_max(), &medium, p_l).min(half) * 1e9,
            worst * 100.0,
            worst_at * 1e9
        ),
    )
}

/// On-axis difference energy at `iz` without and with `τ_a = −τ̂(z)`.
fn null_suppression(plus: &FieldCube, minus: &FieldCube, iz: usize, tau_hat: f64) -> f64 {
    let g = plus.grid();
    let m = to64(minus.series(iz, 0));
    let none = diff_energy(plus.series(iz, 0), &m);
    let adj = diff_energy(plus.series(iz, 0), &delay_series(&m, g.dt, -tau_hat));
    db(none / adj)
}

fn c3_null_condition() -> Outcome {
    let (run, _) = plane_run();
    let g = *run.plus.grid();
    let map = estimate_shift_map(&run.plus, &run.minus, DEFAULT_WINDOW).expect("shift map");
    let plane_worst = [10e-3, 25e-3, 50e-3, 100e-3]
        .iter()
        .map(|&z| {
            let iz = g.nearest_z(z);
            null_suppression(&run.plus, &run.minus, iz, map.tau_at(iz, 0))
        })
        .fold(f64::INFINITY, f64::min);

    let d = desk();
    let dg = *d.sim.plus.grid();
    let dmap = estimate_shift_map(&d.sim.plus, &d.sim.minus, DEFAULT_WINDOW).expect("desk shift map");
    let iz = dg.nearest_z(5e-3);
    let tau = dmap.tau_at(iz, 0);
    let full = null_suppression(&d.sim.plus, &d.sim.minus, iz, tau);
    outcome(
        plane_worst >= 40.0 && full >= 15.0,
        format!(
            "plane-wave min suppression {plane_worst:.1} dB (need 40); FULL at z_a = {:.2} mm: tau = {:.2} ns, suppression {full:.1} dB (need 15)",
            dg.z(iz) * 1e3,
            tau * 1e9
        ),
    )
}

fn c4_equalizer_by_construction() -> Outcome {
    let d = desk();
    let g = *d.sim.plus.grid();
    let band = GuardBand::for_pulse(&d.config.pulse);
    let mut worst_rel = f64::NEG_INFINITY;
    let mut worst_rel_at = 0.0;
    let mut dominance_failures = Vec::new();
    for row in d.report.rows.iter().filter(|r| r.adjustment == AdjustmentKind::Delay) {
        let iz = g.nearest_z(row.z_a);
        let ts_plus = slice_time_series(&d.sim.plus, iz, 0).unwrap();
        let ts_minus = slice_time_series(&d.sim.minus, iz, 0).unwrap();
        let eq = design_equalizer(&ts_plus, &ts_minus, 1e-3, band, row.z_a).expect("equalizer");
        let m = to64(d.sim.minus.series(iz, 0));
        let p = d.sim.plus.series(iz, 0);
        let none = diff_energy(p, &m);
        let e_eq = diff_energy(p, &equalize_series(&m, &eq));
        let e_delay = diff_energy(p, &delay_series(&m, g.dt, row.tau_a.unwrap()));
        let rel = db(e_eq / none);
        if rel > worst_rel {
            worst_rel = rel;
            worst_rel_at = row.z_a;
        }
        if e_eq > e_delay {
            dominance_failures.push(format!("{:.0}", row.z_a * 1e3));
        }
    }
    outcome(
        worst_rel <= -50.0 && dominance_failures.is_empty(),
        format!(
            "worst equalizer residual {worst_rel:.1} dB re non-adjusted (at z_a = {:.0} mm, need <= -50); equalizer above optimal delay at {} of 55 depths{}",
            worst_rel_at * 1e3,
            dominance_failures.len(),
            if dominance_failures.is_empty() { String::new() } else { format!(" [{} mm]", dominance_failures.join(", ")) }
        ),
    )
}

fn c5_tau_trend() -> Outcome {
    let d = desk();
    let taus = d.report.tau_opt();
    let steps: Vec<f64> = taus.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let non_increasing = steps.iter().all(|&s| s <= 0.0);
    let non_decreasing = steps.iter().all(|&s| s >= 0.0);
    let total = d.simulate_time + d.sweep_time;
    let g = d.sim.plus.grid();
    outcome(
        taus.len() == 55 && (non_increasing || non_decreasing) && total < Duration::from_secs(15 * 60),
        format!(
            "tau_a* from {:.2} ns (1 mm) to {:.2} ns (55 mm), {}; grid {}x{}x{}, simulate {:.1} s + sweep {:.1} s",
            taus.first().map_or(f64::NAN, |t| t.1 * 1e9),
            taus.last().map_or(f64::NAN, |t| t.1 * 1e9),
            if non_increasing {
                "non-increasing"
            } else if non_decreasing {
                "non-decreasing"
            } else {
                "NOT monotone"
            },
            g.nz,
            g.nr,
            g.nt,
            d.simulate_time.as_secs_f64(),
            d.sweep_time.as_secs_f64()
        ),
    )
}

fn c6_quality_ordering() -> Outcome {
    let d = desk();
    let r = &d.report;
    let q = |z: f64, k: AdjustmentKind| r.row(z, k).map(|row| row.q_za.db).unwrap_or(f64::NAN);
    let depths: Vec<f64> = r.z_a.clone();
    let mut order_failures = Vec::new();
    for &z in depths.iter().filter(|&&z| z <= 20e-3 + 1e-12) {
        let (e, dl, n) = (
            q(z, AdjustmentKind::Equalizer),
            q(z, AdjustmentKind::Delay),
            q(z, AdjustmentKind::None),
        );
        if !(e >= dl - 1.0 && dl >= n - 1.0) {
            order_failures.push(format!("{:.0}", z * 1e3));
        }
    }
    let mut trend = Vec::new();
    for k in AdjustmentKind::ALL {
        let curve: Vec<f64> = depths
            .iter()
            .filter(|&&z| z <= 30e-3 + 1e-12)
            .map(|&z| q(z, k))
            .collect();
        let rises = curve.windows(2).filter(|w| !(w[1] <= w[0])).count();
        trend.push((
            k,
            rises,
            curve.first().copied().unwrap_or(f64::NAN),
            curve.last().copied().unwrap_or(f64::NAN),
        ));
    }
    let ok = order_failures.is_empty() && trend.iter().all(|t| t.1 == 0);
    let trend_text: Vec<String> = trend
        .iter()
        .map(|(k, rises, a, b)| format!("{} {a:.1}->{b:.1} dB ({rises} rises)", k.tag()))
        .collect();
    outcome(
        ok,
        format!(
            "ordering violated at {} depths <= 20 mm{}; 1-30 mm: {}",
            order_failures.len(),
            if order_failures.is_empty() {
                String::new()
            } else {
                format!(" [{} mm]", order_failures.join(", "))
            },
            trend_text.join(", ")
        ),
    )
}

fn c7_q_versus_tau() -> Outcome {
    let d = desk();
    let curve = &d.report.q_vs_tau;
    if curve.len() < 3 {
        return outcome(false, "no Q(tau_a) curve");
    }
    let (imax, best) =
        curve
            .iter()
            .enumerate()
            .filter(|(_, p)| p.q.db.is_finite())
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, p)| if p.q.db > acc.1 { (i, p.q.db) } else { acc },
            );
    let q0 = d
        .report
        .row(d.report.z_a[0], AdjustmentKind::None)
        .map(|r| r.q.db)
        .unwrap_or(f64::NAN);
    let interior = imax > 0 && imax + 1 < curve.len();
    let gain = best - q0;
    outcome(
        interior && gain > 0.0,
        format!(
            "maximum Q = {best:.2} dB at tau_a = {:.1} ns (sample {imax} of {}), Q(0) = {q0:.2} dB, gain {gain:.2} dB",
            curve[imax].tau_a * 1e9,
            curve.len()
        ),
    )
}

fn c8_suppression_sequence() -> Outcome {
    let d = desk();
    let g = *d.sim.plus.grid();
    let none = difference_beam_map(&d.sim.plus, &d.sim.minus, Adjust::None, BeamMode::Max)
        .unwrap()
        .normalized_peak();
    let none_db = none.db(-200.0);
    let mut seq = Vec::new();
    for z in [5e-3, 10e-3, 20e-3, 30e-3] {
        let tau = d
            .report
            .row(z, AdjustmentKind::Delay)
            .and_then(|r| r.tau_a)
            .expect("delay row");
        let adj = difference_beam_map(&d.sim.plus, &d.sim.minus, Adjust::Delay(tau), BeamMode::Max)
            .unwrap()
            .normalized_peak();
        let iz = g.nearest_z(z);
        let at = iz * g.nr;
        seq.push((z, none_db[at] - adj.db(-200.0)[at]));
    }
    let decreasing = seq.windows(2).all(|w| w[1].1 < w[0].1);
    let text: Vec<String> = seq
        .iter()
        .map(|(z, s)| format!("{:.0} mm: {s:.1} dB", z * 1e3))
        .collect();
    outcome(decreasing, format!("on-axis suppression {}", text.join(", ")))
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn c9_infrastructure() -> Outcome {
    let d = desk();
    // persistence
    let back = read_run(&d.dir).expect("read desk run");
    let persisted = [&d.sim.plus, &d.sim.minus, &d.sim.zero]
        .iter()
        .all(|c| back.fields.get(c.kind().stem()).is_some_and(|b| b.bitwise_eq(c)));
    let again = scratch().join("desk_copy");
    write_run(&back, &again).expect("rewrite");
    let rewritten = read_dir_bytes(&d.dir) == read_dir_bytes(&again);

    // CLI determinism
    let bin = env!("CARGO_BIN_EXE_surfbeam");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = scratch().join(format!("sweep{i}"));
        let status = Command::new(bin)
            .args([
                "sweep",
                d.dir.to_str().unwrap(),
                "--beams",
                "5,30",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .expect("run cli");
        if !status.status.success() {
            return outcome(
                false,
                format!("cli sweep failed: {}", String::from_utf8_lossy(&status.stderr)),
            );
        }
        outputs.push(read_dir_bytes(&out));
    }
    let csvs = outputs[0].iter().filter(|(n, _)| n.ends_with(".csv")).count();
    let deterministic = outputs[0] == outputs[1] && csvs >= 5;

    // delay / phase equivalents at f_H
    let f_h = d.config.pulse.f_h;
    let pairs = [(-21e-9, -27.0), (7.1e-9, 9.0), (54e-9, 69.0)];
    let phase_err = pairs
        .iter()
        .map(|&(tau, deg)| (delay_phase_equiv(tau, f_h) - deg).abs())
        .fold(0.0, f64::max);
    let computed: Vec<String> = pairs
        .iter()
        .map(|&(t, _)| format!("{:.1}", delay_phase_equiv(t, f_h)))
        .collect();
    outcome(
        persisted && rewritten && deterministic && phase_err <= 1.0,
        format!(
            "persistence bit-exact: {}, rewrite byte-identical: {rewritten}, {csvs} CSVs identical across reruns: {deterministic}, phases [{}] deg (max error {phase_err:.2})",
            persisted,
            computed.join(", ")
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("plane-wave delay oracle", c1_plane_wave_oracle),
        ("gain-factor law", c2_gain_factor_law),
        ("null condition", c3_null_condition),
        ("equalizer by construction", c4_equalizer_by_construction),
        ("optimal delay trend", c5_tau_trend),
        ("Q_za ordering and trend", c6_quality_ordering),
        ("Q versus delay", c7_q_versus_tau),
        ("suppression sequence", c8_suppression_sequence),
        ("infrastructure", c9_infrastructure),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    // Failing criteria are reported above; they only fail the process on
    // request so the rest of the workspace suite still runs.
    if failed > 0 && std::env::var_os("SURFBEAM_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
