//! Session replay through the live pipeline, on a virtual clock.

use std::io::{self, BufRead};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use bodyctl_core::{osc, FrameOutput, ParamUpdate, Pipeline, PipelineError};

use crate::config::EngineConfig;
use crate::session::{Pacer, ReplayMode};
use crate::sink::{CaptureSink, CsvSink, UdpSink, UpdateSink};
use crate::wire::{parse_frame, WireError};

/// How long past the hold time a silent stream waits before the first
/// synthetic tick, and the spacing of later ticks, ms.
pub const STALL_GRACE_MS: f64 = 50.0;
pub const STALL_TICK_MS: f64 = 100.0;

/// Schedule of synthetic ticks that advance a stalled stream.
///
/// After a frame at `t`, ticks fall at `t + t_hold + STALL_GRACE_MS` and then
/// every `STALL_TICK_MS`, until a tick leaves every output unchanged (by then
/// all points have gone invalid and the outputs sit at their fallbacks). The
/// live engine runs it against wall-clock silence and replay against gaps in
/// the recording, so a recorded stall replays like the original.
#[derive(Debug, Clone, Default)]
pub struct StallTicker {
    next: Option<f64>,
    prev: Option<Vec<Option<f64>>>,
}

impl StallTicker {
    pub fn on_frame(&mut self, t: f64, t_hold_ms: f64) {
        self.next = Some(t + t_hold_ms + STALL_GRACE_MS);
        self.prev = None;
    }

    /// The next tick time if it falls strictly before `until`.
    pub fn due(&self, until: f64) -> Option<f64> {
        self.next.filter(|&t| t < until)
    }

    pub fn ticked(&mut self, out: &FrameOutput) {
        if self.prev.as_ref() == Some(&out.outputs) {
            self.next = None;
        } else {
            self.prev = Some(out.outputs.clone());
            self.next = self.next.map(|t| t + STALL_TICK_MS);
        }
    }

    /// True once at least one tick has fired since the last frame.
    pub fn stalled(&self) -> bool {
        self.prev.is_some()
    }

    /// Forget the stream entirely (new connection, reset pipeline).
    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("session line {line}: {source}")]
    Parse { line: usize, source: WireError },
    #[error("reading session: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("bad sink `{0}`: expected udp, capture:<file> or csv:<file>")]
    BadSink(String),
}

/// `udp`, `capture:<file>` or `csv:<file>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkSpec {
    Udp,
    Capture(PathBuf),
    Csv(PathBuf),
}

impl FromStr for SinkSpec {
    type Err = ReplayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "udp" => Ok(SinkSpec::Udp),
            Some(("capture", p)) if !p.is_empty() => Ok(SinkSpec::Capture(p.into())),
            Some(("csv", p)) if !p.is_empty() => Ok(SinkSpec::Csv(p.into())),
            _ => Err(ReplayError::BadSink(s.into())),
        }
    }
}

impl SinkSpec {
    /// Opens the sink; `udp` sends to the configured `osc_out`.
    pub fn open(&self, config: &EngineConfig) -> io::Result<Box<dyn UpdateSink>> {
        Ok(match self {
            SinkSpec::Udp => Box::new(UdpSink::new(&config.osc_out)?),
            SinkSpec::Capture(p) => Box::new(CaptureSink::create(p)?),
            SinkSpec::Csv(p) => Box::new(CsvSink::create(p)?),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub frames: usize,
    /// Frames rejected by the pipeline (e.g. repeated timestamps).
    pub frame_errors: usize,
    pub stall_ticks: usize,
    pub updates: usize,
    pub send_errors: usize,
    /// Per-frame processing time, parse through OSC encoding, seconds.
    pub latencies: Vec<f64>,
}

impl ReplayReport {
    /// Median per-frame processing time in ms, if any frame was processed.
    pub fn median_latency_ms(&self) -> Option<f64> {
        if self.latencies.is_empty() {
            return None;
        }
        let mut l = self.latencies.clone();
        l.sort_by(f64::total_cmp);
        let n = l.len();
        let mid = if n % 2 == 1 {
            l[n / 2]
        } else {
            (l[n / 2 - 1] + l[n / 2]) / 2.0
        };
        Some(mid * 1000.0)
    }
}

/// Replays a session into `sink`. Fast mode never consults the wall clock
/// for anything that reaches the sink; realtime mode only adds sleeps.
pub fn replay<R: BufRead>(
    config: &EngineConfig,
    source: R,
    sink: &mut dyn UpdateSink,
    mode: ReplayMode,
) -> Result<ReplayReport, ReplayError> {
    replay_with(config, source, sink, mode, |_| {})
}

/// As [`replay`], handing every pipeline output (frames and stall ticks) to
/// `observe`.
pub fn replay_with<R: BufRead>(
    config: &EngineConfig,
    source: R,
    sink: &mut dyn UpdateSink,
    mode: ReplayMode,
    mut observe: impl FnMut(&FrameOutput),
) -> Result<ReplayReport, ReplayError> {
    let mut pipeline = Pipeline::new(config.pipeline_config())?;
    let t_hold = config.smoother.t_hold_ms;
    let mut pacer = Pacer::new(mode);
    let mut ticker = StallTicker::default();
    let mut report = ReplayReport::default();
    let mut grams: Vec<Vec<u8>> = Vec::new();

    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let started = Instant::now();
        let frame = parse_frame(&line).map_err(|source| ReplayError::Parse { line: i + 1, source })?;
        report.frames += 1;
        let parse_time = started.elapsed();

        // a gap in the recording stands for a stalled stream
        while let Some(t) = ticker.due(frame.t) {
            let out = pipeline.tick(t)?;
            ticker.ticked(&out);
            report.stall_ticks += 1;
            observe(&out);
            encode_all(&out.updates, &mut grams);
            deliver(&out.updates, &grams, sink, &mut report);
        }

        let started = Instant::now();
        let out = match pipeline.process(&frame) {
            Ok(out) => out,
            Err(e) => {
                log::debug!("session line {}: {e}", i + 1);
                report.frame_errors += 1;
                continue;
            }
        };
        encode_all(&out.updates, &mut grams);
        ticker.on_frame(frame.t, t_hold);
        report.latencies.push((parse_time + started.elapsed()).as_secs_f64());
        observe(&out);

        pacer.pace(frame.t);
        deliver(&out.updates, &grams, sink, &mut report);
    }
    sink.flush()?;
    Ok(report)
}

fn encode_all(updates: &[ParamUpdate], grams: &mut Vec<Vec<u8>>) {
    grams.resize_with(updates.len(), Vec::new);
    for (u, buf) in updates.iter().zip(grams.iter_mut()) {
        buf.clear();
        osc::encode_into(buf, &u.address, u.value as f32).expect("addresses validated at load");
    }
}

fn deliver(updates: &[ParamUpdate], grams: &[Vec<u8>], sink: &mut dyn UpdateSink, report: &mut ReplayReport) {
    for (u, g) in updates.iter().zip(grams) {
        match sink.deliver(u, g) {
            Ok(()) => report.updates += 1,
            Err(e) => {
                report.send_errors += 1;
                log::debug!("send to {} failed: {e}", u.address);
            }
        }
    }
}

/// Opens `input` and replays it into the sink named by `sink`.
pub fn replay_file(
    config: &EngineConfig,
    input: &Path,
    sink: &SinkSpec,
    mode: ReplayMode,
) -> Result<ReplayReport, ReplayError> {
    let file = std::fs::File::open(input)?;
    let mut sink = sink.open(config)?;
    replay(config, io::BufReader::new(file), sink.as_mut(), mode)
}
