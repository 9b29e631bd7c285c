//! Engine side of the bodyctl gestural instrument.
//!
//! Keypoint frames arrive as line-delimited JSON (over a WebSocket or from a
//! session file), run through [`bodyctl_core::Pipeline`], and leave as OSC
//! messages over UDP or into a capture/CSV sink. Telemetry and control
//! records share the ingestion socket with the browser capture UI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod config;
pub mod control;
pub mod queue;
pub mod replay;
pub mod server;
pub mod session;
pub mod sink;
pub mod synth;
pub mod telemetry;
pub mod wire;

pub use config::{load_config, parse_config, EngineConfig};
pub use session::{record_session, replay_session, ReplayMode};
pub use wire::{parse_frame, serialize_frame};
