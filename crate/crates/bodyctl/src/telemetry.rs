//! Periodic state reports for the capture UI.

use std::collections::{BTreeMap, VecDeque};

use bodyctl_core::{FrameOutput, MappingSpec};
use serde::Serialize;

use crate::control::EngineState;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct PointTelemetry {
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq, Default)]
pub struct DropCounters {
    pub frames: u64,
    pub updates: u64,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq, Default)]
pub struct ErrorCounters {
    pub send: u64,
    pub frames: u64,
}

/// `{"t":..., "points":{...}, "outputs":{...}, ...}`
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Telemetry {
    pub t: f64,
    #[serde(flatten)]
    pub state: EngineState,
    pub points: BTreeMap<&'static str, PointTelemetry>,
    /// Current value per mapping id; `null` while a mapping is skipped.
    pub outputs: BTreeMap<String, Option<f64>>,
    pub refs_valid: bool,
    pub fps: f64,
    pub drops: DropCounters,
    pub errors: ErrorCounters,
}

impl Telemetry {
    pub fn from_output(
        out: &FrameOutput,
        mappings: &[MappingSpec],
        state: &EngineState,
        fps: f64,
        drops: DropCounters,
        errors: ErrorCounters,
    ) -> Self {
        Telemetry {
            t: out.t,
            state: state.clone(),
            points: out
                .points
                .iter()
                .map(|p| {
                    (
                        p.name.as_str(),
                        PointTelemetry {
                            valid: p.valid,
                            u: p.position.map(|n| n.u),
                            v: p.position.map(|n| n.v),
                        },
                    )
                })
                .collect(),
            outputs: mappings
                .iter()
                .zip(&out.outputs)
                .map(|(m, v)| (m.id.clone(), *v))
                .collect(),
            refs_valid: out.refs.valid,
            fps,
            drops,
            errors,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("telemetry serializes")
    }
}

/// Admits at most `rate` events in any one-second window of the supplied
/// clock. A sliding window rather than a fixed interval, so a stream at
/// exactly the rate is not halved by arrival jitter.
#[derive(Debug, Clone)]
pub struct RateLimiter {
    rate: usize,
    admitted: VecDeque<f64>,
}

impl RateLimiter {
    pub fn new(rate_hz: f64) -> Self {
        let rate = rate_hz.floor().max(1.0) as usize;
        Self {
            rate,
            admitted: VecDeque::with_capacity(rate),
        }
    }

    pub fn admit(&mut self, now_ms: f64) -> bool {
        while self.admitted.front().is_some_and(|&t| now_ms - t >= 1000.0) {
            self.admitted.pop_front();
        }
        if self.admitted.len() >= self.rate {
            return false;
        }
        self.admitted.push_back(now_ms);
        true
    }
}

/// Frames per second over a sliding one-second window.
#[derive(Debug, Clone, Default)]
pub struct FpsMeter {
    arrivals: VecDeque<f64>,
}

impl FpsMeter {
    pub fn record(&mut self, now_ms: f64) {
        self.arrivals.push_back(now_ms);
        while self.arrivals.front().is_some_and(|&t| now_ms - t > 1000.0) {
            self.arrivals.pop_front();
        }
    }

    pub fn fps(&self, now_ms: f64) -> f64 {
        self.arrivals.iter().filter(|&&t| now_ms - t <= 1000.0).count() as f64
    }
}
