//! `{"cmd": ...}` control records from the capture UI and their acks.
//!
//! Commands are applied on the pipeline thread between frames, so a frame is
//! always processed under one consistent configuration. Every command gets an
//! ack carrying the engine state after it was applied; the UI shows that, not
//! what it asked for.

use bodyctl_core::mapping::{self, CalibrationMethod};
use bodyctl_core::{FrameOutput, Pipeline};
use serde::{Deserialize, Serialize};

use crate::config::{EngineConfig, StrategyConfig};

pub const DEFAULT_CALIBRATION_MS: f64 = 10_000.0;
pub const DEFAULT_PERCENTILE: f64 = 95.0;

fn d_duration() -> f64 {
    DEFAULT_CALIBRATION_MS
}
fn d_percentile() -> f64 {
    DEFAULT_PERCENTILE
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlCommand {
    /// The strategy's `tau_ref` is ignored here; reference smoothing is fixed
    /// at startup.
    SetStrategy { strategy: StrategyConfig },
    SelectPreset { name: String },
    StartCalibration {
        #[serde(default = "d_duration")]
        duration_ms: f64,
        #[serde(default = "d_percentile")]
        percentile: f64,
    },
    SetThreshold { value: f64 },
}

impl ControlCommand {
    pub fn name(&self) -> &'static str {
        match self {
            ControlCommand::SetStrategy { .. } => "set_strategy",
            ControlCommand::SelectPreset { .. } => "select_preset",
            ControlCommand::StartCalibration { .. } => "start_calibration",
            ControlCommand::SetThreshold { .. } => "set_threshold",
        }
    }
}

/// True if `text` is a JSON object with a `cmd` member, i.e. meant as a
/// control record rather than a frame.
pub fn is_control(text: &str) -> bool {
    #[derive(Deserialize)]
    struct Probe {
        cmd: Option<serde::de::IgnoredAny>,
    }
    serde_json::from_str::<Probe>(text).is_ok_and(|p| p.cmd.is_some())
}

/// Parses a control record; the error text is what the ack reports.
pub fn parse_command(text: &str) -> Result<ControlCommand, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

/// Engine settings the UI can change and must mirror.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineState {
    pub strategy: &'static str,
    pub preset: Option<String>,
    pub c_min: f64,
    pub s_max: f64,
    pub calibrating: bool,
}

impl EngineState {
    pub fn of(pipeline: &Pipeline) -> Self {
        let cfg = pipeline.config();
        EngineState {
            strategy: cfg.strategy.name(),
            preset: None,
            c_min: cfg.smoother.c_min,
            s_max: cfg.calibration.s_max,
            calibrating: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ack {
    /// Command name, or `calibration` for the end of a calibration run.
    pub ack: &'static str,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
    pub state: EngineState,
}

impl Ack {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ack serializes")
    }

    /// Ack for a record that could not be parsed as a command.
    pub fn rejected(error: String, state: EngineState) -> Self {
        Ack {
            ack: "invalid",
            ok: false,
            error: Some(error),
            s_max: None,
            state,
        }
    }
}

#[derive(Debug, Clone)]
struct CalibrationRun {
    duration_ms: f64,
    percentile: f64,
    start_t: Option<f64>,
    samples: Vec<f64>,
}

/// Applies commands to a pipeline and runs calibration sessions, which are
/// timed by frame timestamps rather than the wall clock.
#[derive(Debug, Clone)]
pub struct Controller {
    presets: Vec<crate::config::Preset>,
    state: EngineState,
    calibration: Option<CalibrationRun>,
}

impl Controller {
    pub fn new(config: &EngineConfig, pipeline: &Pipeline) -> Self {
        Controller {
            presets: config.presets.clone(),
            state: EngineState::of(pipeline),
            calibration: None,
        }
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn apply(&mut self, cmd: &ControlCommand, pipeline: &mut Pipeline) -> Ack {
        let result = match cmd {
            ControlCommand::SetStrategy { strategy } => strategy
                .build()
                .and_then(|s| pipeline.set_strategy(s).map_err(|e| e.to_string())),
            ControlCommand::SelectPreset { name } => match self.presets.iter().find(|p| &p.name == name) {
                None => Err(format!("unknown preset `{name}`")),
                Some(p) => pipeline
                    .set_mappings(p.mappings.clone())
                    .map(|()| self.state.preset = Some(name.clone()))
                    .map_err(|e| e.to_string()),
            },
            ControlCommand::StartCalibration {
                duration_ms,
                percentile,
            } => {
                if !(*duration_ms > 0.0 && duration_ms.is_finite()) {
                    Err("duration_ms must be positive".into())
                } else if !(*percentile > 0.0 && *percentile <= 100.0) {
                    Err(format!("percentile must be in (0, 100], got {percentile}"))
                } else {
                    self.calibration = Some(CalibrationRun {
                        duration_ms: *duration_ms,
                        percentile: *percentile,
                        start_t: None,
                        samples: Vec::new(),
                    });
                    Ok(())
                }
            }
            ControlCommand::SetThreshold { value } => pipeline
                .set_confidence_threshold(*value)
                .map_err(|e| e.to_string()),
        };
        self.sync(pipeline);
        Ack {
            ack: cmd.name(),
            ok: result.is_ok(),
            error: result.err(),
            s_max: None,
            state: self.state.clone(),
        }
    }

    /// Feeds one processed frame to a running calibration. Returns the final
    /// ack once the run has covered its duration.
    pub fn observe(&mut self, out: &FrameOutput, pipeline: &mut Pipeline) -> Option<Ack> {
        let run = self.calibration.as_mut()?;
        let start = *run.start_t.get_or_insert(out.t);
        run.samples.extend(out.speed_samples.iter().copied());
        if out.t - start < run.duration_ms {
            return None;
        }
        let run = self.calibration.take()?;
        let result = mapping::calibrate(&run.samples, run.percentile)
            .map_err(|e| e.to_string())
            .and_then(|cal| {
                pipeline.set_calibration(cal).map_err(|e| e.to_string())?;
                Ok(cal.s_max)
            });
        self.sync(pipeline);
        Some(Ack {
            ack: "calibration",
            ok: result.is_ok(),
            s_max: result.as_ref().ok().copied(),
            error: result.err(),
            state: self.state.clone(),
        })
    }

    fn sync(&mut self, pipeline: &Pipeline) {
        let cfg = pipeline.config();
        self.state.strategy = cfg.strategy.name();
        self.state.c_min = cfg.smoother.c_min;
        self.state.s_max = cfg.calibration.s_max;
        self.state.calibrating = self.calibration.is_some();
    }
}

/// Full-scale speed from every speed sample of a session, as the `calibrate`
/// command computes it.
pub fn calibrate_outputs<'a>(
    outputs: impl IntoIterator<Item = &'a FrameOutput>,
    percentile: f64,
) -> Result<f64, mapping::MappingError> {
    let samples: Vec<f64> = outputs
        .into_iter()
        .flat_map(|o| o.speed_samples.iter().copied())
        .collect();
    let cal = mapping::calibrate(&samples, percentile)?;
    debug_assert!(matches!(cal.method, CalibrationMethod::Percentile(_)));
    Ok(cal.s_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use bodyctl_core::PoseFrame;
    use bodyctl_core::KeypointName as K;

    const CONFIG: &str = r#"
        [[mappings]]
        id = "amp"
        source = { point = "right_wrist", feature = "speed" }
        function = { kind = "exp_db" }
        out_address = "/amp"

        [[presets]]
        name = "pitch"
        [[presets.mappings]]
        id = "pitch"
        source = { point = "right_wrist", feature = "pos_u" }
        function = { kind = "pitch_exp" }
        out_address = "/pitch"
        out_range = [220, 880]
    "#;

    fn setup() -> (Controller, Pipeline) {
        let cfg = parse_config(CONFIG).unwrap();
        let p = Pipeline::new(cfg.pipeline_config()).unwrap();
        (Controller::new(&cfg, &p), p)
    }

    fn frame(t: f64, wrist_x: f64) -> PoseFrame {
        PoseFrame::new(t)
            .and_then(|f| f.with(K::RightShoulder, 0.6, 0.4, 0.9))
            .and_then(|f| f.with(K::LeftShoulder, 0.4, 0.4, 0.9))
            .and_then(|f| f.with(K::RightHip, 0.58, 0.7, 0.9))
            .and_then(|f| f.with(K::LeftHip, 0.42, 0.7, 0.9))
            .and_then(|f| f.with(K::RightWrist, wrist_x, 0.5, 0.9))
            .unwrap()
    }

    #[test]
    fn classifies_records() {
        assert!(is_control(r#"{"cmd":"set_threshold","value":0.5}"#));
        assert!(is_control(r#"{"cmd":"bogus"}"#));
        assert!(!is_control(r#"{"t":0,"kp":{}}"#));
        assert!(!is_control("not json"));
    }

    #[test]
    fn parses_commands_with_defaults() {
        assert_eq!(
            parse_command(r#"{"cmd":"start_calibration"}"#).unwrap(),
            ControlCommand::StartCalibration {
                duration_ms: 10_000.0,
                percentile: 95.0
            }
        );
        let c = parse_command(r#"{"cmd":"set_strategy","strategy":{"kind":"camera_center"}}"#).unwrap();
        assert!(matches!(c, ControlCommand::SetStrategy { .. }));
        assert!(parse_command(r#"{"cmd":"set_threshold"}"#).is_err());
        assert!(parse_command(r#"{"cmd":"set_threshold","value":0.5,"x":1}"#).is_err());
    }

    #[test]
    fn strategy_ack_reflects_engine() {
        let (mut c, mut p) = setup();
        assert_eq!(c.state().strategy, "body_scaled");
        let ack = c.apply(
            &parse_command(r#"{"cmd":"set_strategy","strategy":{"kind":"camera_center"}}"#).unwrap(),
            &mut p,
        );
        assert!(ack.ok);
        assert_eq!(ack.state.strategy, "camera_center");
        let bad = c.apply(
            &parse_command(r#"{"cmd":"set_strategy","strategy":{"kind":"shoulder_anchor"}}"#).unwrap(),
            &mut p,
        );
        assert!(!bad.ok);
        assert!(bad.error.unwrap().contains("arm_length"));
        assert_eq!(bad.state.strategy, "camera_center");
    }

    #[test]
    fn threshold_gates_subsequent_frames() {
        let (mut c, mut p) = setup();
        let ack = c.apply(&ControlCommand::SetThreshold { value: 0.95 }, &mut p);
        assert!(ack.ok);
        assert_eq!(ack.state.c_min, 0.95);
        let out = p.process(&frame(0.0, 0.7)).unwrap();
        let wrist = out.points.iter().find(|s| s.name == K::RightWrist).unwrap();
        assert!(!wrist.valid);
        assert!(!c.apply(&ControlCommand::SetThreshold { value: 1.5 }, &mut p).ok);
    }

    #[test]
    fn preset_swaps_mappings() {
        let (mut c, mut p) = setup();
        let ack = c.apply(&ControlCommand::SelectPreset { name: "pitch".into() }, &mut p);
        assert!(ack.ok, "{ack:?}");
        assert_eq!(ack.state.preset.as_deref(), Some("pitch"));
        assert_eq!(&*p.mappings()[0].address, "/pitch");
        let ack = c.apply(&ControlCommand::SelectPreset { name: "nope".into() }, &mut p);
        assert!(!ack.ok);
        assert_eq!(ack.state.preset.as_deref(), Some("pitch"));
    }

    #[test]
    fn calibration_runs_on_frame_time() {
        let (mut c, mut p) = setup();
        let ack = c.apply(
            &ControlCommand::StartCalibration {
                duration_ms: 2000.0,
                percentile: 95.0,
            },
            &mut p,
        );
        assert!(ack.ok && ack.state.calibrating);
        let mut done = None;
        for i in 0..=90 {
            let t = i as f64 * 1000.0 / 30.0;
            let x = 0.7 + 0.1 * (t / 1000.0 * std::f64::consts::PI).sin();
            let out = p.process(&frame(t, x)).unwrap();
            if let Some(a) = c.observe(&out, &mut p) {
                done = Some((i, a));
                break;
            }
        }
        let (i, ack) = done.expect("calibration finished");
        assert_eq!(i, 60);
        assert!(ack.ok, "{ack:?}");
        let s_max = ack.s_max.unwrap();
        assert!(s_max > 0.0);
        assert_eq!(ack.state.s_max, s_max);
        assert!(!ack.state.calibrating);
        assert_eq!(p.config().calibration.s_max, s_max);
    }

    #[test]
    fn calibration_without_motion_fails_cleanly() {
        let (mut c, mut p) = setup();
        c.apply(
            &ControlCommand::StartCalibration {
                duration_ms: 100.0,
                percentile: 95.0,
            },
            &mut p,
        );
        let mut ack = None;
        for i in 0..10 {
            let out = p.process(&frame(i as f64 * 33.0, 0.7)).unwrap();
            ack = ack.or(c.observe(&out, &mut p));
        }
        let ack = ack.unwrap();
        assert!(!ack.ok);
        assert_eq!(ack.state.s_max, 6.0);
        let json = ack.to_json();
        assert!(json.starts_with(r#"{"ack":"calibration","ok":false,"error":"#), "{json}");
    }
}
