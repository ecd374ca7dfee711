use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use surfbeam::commands::{self, AdjustArgs, QualityArgs, SimulateArgs, SweepArgs};
use surfbeam::config::AdjustmentRequest;
use surfbeam::{CliError, CliResult};
use surfbeam_core::adjust::DEFAULT_EPSILON;
use surfbeam_core::metrics::BeamMode;

#[derive(Parser)]
#[command(
    name = "surfbeam",
    version,
    about = "Dual-frequency transmit beam simulation and post-processing adjustment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    PlaneWave,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Delay,
    Equalizer,
}

#[derive(Clone, Copy, ValueEnum)]
enum BeamModeArg {
    Rms,
    Max,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the HF+/HF-/HF0 transmissions and write a run directory.
    Simulate {
        /// JSON pipeline config; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Also store the LF field.
        #[arg(long)]
        lf: bool,
    },
    /// Adjust HF- and append the adjusted and difference cubes to the run.
    Adjust {
        run: PathBuf,
        #[arg(long, value_enum)]
        variant: Variant,
        /// Fixed delay applied to HF-, ns.
        #[arg(long, allow_hyphen_values = true)]
        tau_ns: Option<f64>,
        /// Reference depth, mm. For a delay without --tau-ns the delay maximizing Q_za here is used.
        #[arg(long)]
        za_mm: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Imaging region `zn,zf` in mm used when optimizing a delay.
        #[arg(long)]
        region: Option<String>,
    },
    /// Q_za and Q of the stored difference cubes.
    Quality {
        run: PathBuf,
        #[arg(long)]
        region: Option<String>,
        /// Reference depths, mm, comma-separated.
        #[arg(long)]
        za_list: Option<String>,
        /// Report directory (default `<run>/quality`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quality sweep over reference depths and adjustment variants.
    Sweep {
        run: PathBuf,
        #[arg(long, conflicts_with = "za_range")]
        za_list: Option<String>,
        /// `start:stop:step` in mm, inclusive.
        #[arg(long)]
        za_range: Option<String>,
        /// Comma-separated subset of none,delay,equalizer.
        #[arg(long)]
        adjustments: Option<String>,
        #[arg(long)]
        region: Option<String>,
        /// Reference depths (mm) at which beam maps are written.
        #[arg(long)]
        beams: Option<String>,
        #[arg(long, value_enum)]
        beam_mode: Option<BeamModeArg>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Samples of the Q(tau_a) curve.
        #[arg(long)]
        tau_points: Option<usize>,
        /// Report directory (default `<run>/sweep`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a run directory or a directory of runs over HTTP.
    Serve {
        path: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Response cache budget, MiB.
        #[arg(long, default_value_t = 256)]
        cache_mb: usize,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SURFBEAM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("SURFBEAM_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let region = |s: Option<String>| s.as_deref().map(commands::parse_region).transpose();
    match cli.command {
        Command::Simulate { config, out, mode, lf } => {
            let summary = commands::cmd_simulate(&SimulateArgs {
                config,
                out,
                mode: mode.map(|m| match m {
                    ModeArg::Full => "FULL".to_string(),
                    ModeArg::PlaneWave => "PLANE_WAVE".to_string(),
                }),
                lf,
            })?;
            print!("{summary}");
        }
        Command::Adjust {
            run,
            variant,
            tau_ns,
            za_mm,
            epsilon,
            region: r,
        } => {
            let request = match variant {
                Variant::Delay => AdjustmentRequest::Delay { tau_ns, za_mm },
                Variant::Equalizer => AdjustmentRequest::Equalizer {
                    za_mm: za_mm.ok_or_else(|| CliError::usage("--variant equalizer needs --za-mm"))?,
                    epsilon,
                },
            };
            let outcome = commands::cmd_adjust(&AdjustArgs {
                run: run.clone(),
                request,
                region: region(r)?,
            })?;
            println!("appended adjusted_{0}, difference_{0}, adjust_{0}", outcome.tag);
            print!("{}", commands::manifest_summary(&run, &outcome.manifest));
        }
        Command::Quality {
            run,
            region: r,
            za_list,
            out,
        } => {
            let (report, dir) = commands::cmd_quality(&QualityArgs {
                run,
                region: region(r)?,
                za_list: za_list.as_deref().map(commands::parse_mm_list).transpose()?,
                out,
            })?;
            print!("{}", report.q_za_csv());
            println!("wrote {}", dir.display());
        }
        Command::Sweep {
            run,
            za_list,
            za_range,
            adjustments,
            region: r,
            beams,
            beam_mode,
            epsilon,
            tau_points,
            out,
        } => {
            let za = match (za_list, za_range) {
                (Some(l), _) => Some(commands::parse_mm_list(&l)?),
                (None, Some(r)) => Some(commands::parse_mm_range(&r)?),
                (None, None) => None,
            };
            let (report, dir) = commands::cmd_sweep(&SweepArgs {
                run,
                za,
                adjustments: adjustments.as_deref().map(commands::parse_adjustments).transpose()?,
                region: region(r)?,
                beams: beams
                    .as_deref()
                    .map(commands::parse_mm_list)
                    .transpose()?
                    .unwrap_or_default(),
                beam_mode: beam_mode.map(|m| match m {
                    BeamModeArg::Rms => BeamMode::Rms,
                    BeamModeArg::Max => BeamMode::Max,
                }),
                epsilon,
                tau_points,
                out,
            })?;
            print!("{}", commands::sweep_summary(&report));
            println!("wrote {}", dir.display());
        }
        Command::Serve {
            path,
            port,
            host,
            cache_mb,
        } => surfbeam::cmd_serve(&path, &host, port, cache_mb, |addr| {
            println!("listening on http://{addr}");
            let _ = std::io::stdout().flush();
        })?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
