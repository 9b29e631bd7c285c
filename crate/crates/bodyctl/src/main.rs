use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bodyctl::analyze;
use bodyctl::config::{load_config, parse_config, EngineConfig};
use bodyctl::control::calibrate_outputs;
use bodyctl::replay::{replay_file, replay_with, SinkSpec};
use bodyctl::server::{self, ServerOptions};
use bodyctl::sink::CaptureSink;
use bodyctl::ReplayMode;
use bodyctl_core::mapping::{JndParams, DEFAULT_GRID_POINTS};
use clap::{Parser, Subcommand, ValueEnum};

/// Gestural instrument engine: pose keypoints in, OSC out.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the live engine until interrupted.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Also append every received frame to this session file.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Feed a recorded session through the pipeline.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// udp | capture:<file> | csv:<file>
        #[arg(long)]
        sink: String,
        /// Don't wait between frames.
        #[arg(long)]
        fast: bool,
    },
    /// Record incoming frames to a session file without processing them.
    Record {
        #[arg(long, default_value = bodyctl::config::DEFAULT_LISTEN)]
        listen: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print a mapping curve or JND table as CSV.
    Analyze {
        kind: AnalyzeKind,
        /// linear | exp_db | exp_norm | pitch_exp
        #[arg(long, default_value = "exp_db")]
        function: String,
        /// Function parameters, e.g. "db_floor=-60,gate=0.02".
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        /// Input Weber fraction (jnd only).
        #[arg(long, default_value_t = 0.1)]
        w_in: f64,
        /// Output JND in dB (jnd only).
        #[arg(long, default_value_t = 1.0)]
        l_jnd: f64,
    },
    /// Compute a full-scale speed from a recorded session.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 95.0)]
        percentile: f64,
        /// Engine config whose speed mappings define the sampled points;
        /// both wrists under the default body-scaled strategy otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalyzeKind {
    Curve,
    Jnd,
}

const CALIBRATION_CONFIG: &str = r#"
[[mappings]]
id = "right"
source = { point = "right_wrist", feature = "speed" }
function = { kind = "linear" }
out_address = "/right"

[[mappings]]
id = "left"
source = { point = "left_wrist", feature = "speed" }
function = { kind = "linear" }
out_address = "/left"
"#;

fn config(path: &PathBuf) -> Result<EngineConfig> {
    Ok(load_config(path)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // most causes already quote their source; don't print them twice
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run { config: path, record } => {
            let cfg = config(&path)?;
            let handle = server::start(cfg, ServerOptions { record, sink: None })?;
            eprintln!("bodyctl listening on ws://{}", handle.local_addr());
            if let Some(report) = handle.wait() {
                report.context("recording")?;
            }
        }
        Command::Replay {
            config: path,
            input,
            sink,
            fast,
        } => {
            let cfg = config(&path)?;
            let sink: SinkSpec = sink.parse()?;
            let mode = if fast { ReplayMode::Fast } else { ReplayMode::Realtime };
            let r = replay_file(&cfg, &input, &sink, mode).with_context(|| format!("replaying {}", input.display()))?;
            eprintln!(
                "{} frames ({} rejected, {} stall ticks), {} updates, {} send errors, median {:.4} ms/frame",
                r.frames,
                r.frame_errors,
                r.stall_ticks,
                r.updates,
                r.send_errors,
                r.median_latency_ms().unwrap_or(0.0)
            );
        }
        Command::Record { listen, output } => {
            let handle = server::start_recording(&listen, output)?;
            eprintln!("bodyctl recording on ws://{}", handle.local_addr());
            if let Some(report) = handle.wait() {
                report.context("recording")?;
            }
        }
        Command::Analyze {
            kind,
            function,
            params,
            points,
            w_in,
            l_jnd,
        } => {
            if points == 0 {
                bail!("--points must be positive");
            }
            let f = analyze::parse_function(&function, &params)?;
            let mut out = io::stdout().lock();
            match kind {
                AnalyzeKind::Curve => analyze::write_curve(&mut out, &f, points)?,
                AnalyzeKind::Jnd => analyze::write_jnd(
                    &mut out,
                    &f,
                    JndParams {
                        w_in,
                        l_jnd,
                        grid_points: points,
                    },
                )?,
            }
            out.flush()?;
        }
        Command::Calibrate {
            input,
            percentile,
            config: path,
        } => {
            let cfg = match path {
                Some(p) => config(&p)?,
                None => parse_config(CALIBRATION_CONFIG)?,
            };
            let file = std::fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let mut outputs = Vec::new();
            let mut discard = CaptureSink::new(io::sink());
            replay_with(&cfg, BufReader::new(file), &mut discard, ReplayMode::Fast, |o| {
                outputs.push(o.clone())
            })?;
            let s_max = calibrate_outputs(&outputs, percentile)?;
            let mut line = String::new();
            bodyctl::wire::write_number(&mut line, s_max);
            println!("{line}");
        }
    }
    Ok(())
}
