//! Session files: one canonical wire record per line (`.jsonl`).

use std::io::{self, BufRead, Write};
use std::thread;
use std::time::{Duration, Instant};

use bodyctl_core::PoseFrame;

use crate::wire::{parse_frame, serialize_frame, WireError};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: WireError,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecordReport {
    pub written: usize,
    /// Frames dropped because their timestamp went backwards.
    pub regressions: usize,
}

/// Appends frames to a sink, rejecting timestamp regressions.
pub struct Recorder<W: Write> {
    sink: W,
    last_t: Option<f64>,
    report: RecordReport,
}

impl<W: Write> Recorder<W> {
    pub fn new(sink: W) -> Self {
        Self {
            sink,
            last_t: None,
            report: RecordReport::default(),
        }
    }

    /// Writes `frame` unless it is older than the last one written.
    pub fn push(&mut self, frame: &PoseFrame) -> io::Result<bool> {
        if let Some(last) = self.last_t {
            if frame.t < last {
                self.report.regressions += 1;
                log::warn!("dropping frame at t={} ms: earlier than {} ms", frame.t, last);
                return Ok(false);
            }
        }
        let mut line = serialize_frame(frame);
        line.push('\n');
        self.sink.write_all(line.as_bytes())?;
        self.last_t = Some(frame.t);
        self.report.written += 1;
        Ok(true)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.sink.flush()
    }

    pub fn report(&self) -> RecordReport {
        self.report
    }

    pub fn finish(mut self) -> io::Result<RecordReport> {
        self.sink.flush()?;
        Ok(self.report)
    }
}

pub fn record_session<W: Write>(
    frames: impl IntoIterator<Item = PoseFrame>,
    sink: W,
) -> Result<RecordReport, SessionError> {
    let mut rec = Recorder::new(sink);
    for f in frames {
        rec.push(&f)?;
    }
    Ok(rec.finish()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Sleep so frames come out spaced by their timestamp deltas.
    Realtime,
    /// Emit as fast as the consumer pulls.
    Fast,
}

/// Frames from a session in file order. The first unparsable line ends the
/// replay with an error naming it.
pub struct Replay<R> {
    lines: io::Lines<R>,
    pacer: Pacer,
    line_no: usize,
    done: bool,
}

pub fn replay_session<R: BufRead>(source: R, mode: ReplayMode) -> Replay<R> {
    Replay {
        lines: source.lines(),
        pacer: Pacer::new(mode),
        line_no: 0,
        done: false,
    }
}

/// Holds frames back until their timestamp is due, relative to the first.
#[derive(Debug, Clone)]
pub struct Pacer {
    mode: ReplayMode,
    origin: Option<(Instant, f64)>,
}

impl Pacer {
    pub fn new(mode: ReplayMode) -> Self {
        Self { mode, origin: None }
    }

    pub fn pace(&mut self, t: f64) {
        if self.mode == ReplayMode::Fast {
            return;
        }
        let (start, t0) = *self.origin.get_or_insert_with(|| (Instant::now(), t));
        let due = start + Duration::from_secs_f64(((t - t0) / 1000.0).max(0.0));
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
    }
}

impl<R: BufRead> Iterator for Replay<R> {
    type Item = Result<PoseFrame, SessionError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(match parse_frame(&line) {
                Ok(frame) => {
                    self.pacer.pace(frame.t);
                    Ok(frame)
                }
                Err(source) => {
                    self.done = true;
                    Err(SessionError::Parse {
                        line: self.line_no,
                        source,
                    })
                }
            });
        }
    }
}
