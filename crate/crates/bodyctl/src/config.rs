//! Engine configuration (TOML).
//!
//! ```toml
//! listen = "127.0.0.1:9000"
//! osc_out = "127.0.0.1:57120"
//!
//! [strategy]
//! kind = "body_scaled"      # camera_center | shoulder_anchor | body_scaled
//!
//! [[mappings]]
//! id = "amp"
//! source = { point = "right_wrist", feature = "speed" }
//! function = { kind = "exp_db", db_floor = -60.0 }
//! out_address = "/amp"
//! ```
//!
//! Everything except `mappings` has a default. Errors carry a path into the
//! document, e.g. `mappings[0].source.point`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use bodyctl_core::body_frame::{BodyScaledParams, RefTracker};
use bodyctl_core::mapping::CalibrationMethod;
use bodyctl_core::route::default_on_invalid;
use bodyctl_core::{
    Feature, KeypointName, MappingFn, MappingSpec, OnInvalid, PipelineConfig, ReferenceStrategy, SmootherConfig,
    SpeedCalibration,
};
use serde::{Deserialize, Deserializer};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:9000";
pub const DEFAULT_OSC_OUT: &str = "127.0.0.1:57120";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

/// Keypoint name as written in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Kp(pub KeypointName);

impl<'de> Deserialize<'de> for Kp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        KeypointName::from_str(&s).map(Kp).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    CameraCenter,
    ShoulderAnchor,
    BodyScaled,
}

fn d_out_mult() -> f64 {
    2.0
}
fn d_in_mult() -> f64 {
    1.5
}
fn d_v_mult() -> f64 {
    1.5
}
fn d_tau_ref() -> f64 {
    RefTracker::DEFAULT_TAU_MS
}

/// `[strategy]` table; also the payload of the `set_strategy` control command.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default)]
    pub arm_length: Option<f64>,
    #[serde(default = "d_out_mult")]
    pub out_mult: f64,
    #[serde(default = "d_in_mult")]
    pub in_mult: f64,
    #[serde(default = "d_v_mult")]
    pub v_up_mult: f64,
    #[serde(default = "d_v_mult")]
    pub v_down_mult: f64,
    /// Smoothing of the reference distances, ms. Only read at engine level.
    #[serde(default = "d_tau_ref")]
    pub tau_ref: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::BodyScaled,
            arm_length: None,
            out_mult: d_out_mult(),
            in_mult: d_in_mult(),
            v_up_mult: d_v_mult(),
            v_down_mult: d_v_mult(),
            tau_ref: d_tau_ref(),
        }
    }
}

impl StrategyConfig {
    pub fn build(&self) -> Result<ReferenceStrategy, String> {
        let s = match self.kind {
            StrategyKind::CameraCenter => ReferenceStrategy::CameraCenter,
            StrategyKind::ShoulderAnchor => ReferenceStrategy::ShoulderAnchor {
                arm_length: self
                    .arm_length
                    .ok_or("shoulder_anchor requires arm_length")?,
            },
            StrategyKind::BodyScaled => ReferenceStrategy::BodyScaled(BodyScaledParams {
                out_mult: self.out_mult,
                in_mult: self.in_mult,
                v_up_mult: self.v_up_mult,
                v_down_mult: self.v_down_mult,
            }),
        };
        s.validate().map_err(|e| e.to_string())?;
        if !(self.tau_ref >= 0.0 && self.tau_ref.is_finite()) {
            return Err("tau_ref must be non-negative".into());
        }
        Ok(s)
    }
}

fn d_tau() -> f64 {
    80.0
}
fn d_c_min() -> f64 {
    0.3
}
fn d_t_hold() -> f64 {
    300.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSmoother {
    #[serde(default = "d_tau")]
    tau: f64,
    #[serde(default = "d_c_min")]
    c_min: f64,
    #[serde(default = "d_t_hold")]
    t_hold: f64,
}

impl Default for RawSmoother {
    fn default() -> Self {
        Self {
            tau: d_tau(),
            c_min: d_c_min(),
            t_hold: d_t_hold(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum RawCalMethod {
    #[default]
    Fixed,
    Percentile,
}

fn d_s_max() -> f64 {
    6.0
}
fn d_p() -> f64 {
    95.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibration {
    #[serde(default = "d_s_max")]
    s_max: f64,
    #[serde(default)]
    method: RawCalMethod,
    #[serde(default = "d_p")]
    p: f64,
}

impl Default for RawCalibration {
    fn default() -> Self {
        Self {
            s_max: d_s_max(),
            method: RawCalMethod::Fixed,
            p: d_p(),
        }
    }
}

fn d_epsilon() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOnlyOnChange {
    #[serde(default)]
    enabled: bool,
    #[serde(default = "d_epsilon")]
    epsilon: f64,
}

impl Default for RawOnlyOnChange {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon: d_epsilon(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum FeatureKind {
    Speed,
    PosU,
    PosV,
    RelSpeed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    point: Kp,
    feature: FeatureKind,
    #[serde(default)]
    pair: Option<Kp>,
}

fn d_db_floor() -> f64 {
    MappingFn::DEFAULT_DB_FLOOR
}
fn d_gate() -> f64 {
    MappingFn::DEFAULT_GATE
}
fn d_k() -> f64 {
    MappingFn::DEFAULT_K
}
fn d_f0() -> f64 {
    MappingFn::DEFAULT_F0
}
fn d_octaves() -> f64 {
    MappingFn::DEFAULT_OCTAVES
}

/// Mapping function with its parameters; defaults fill anything omitted.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionConfig {
    Linear,
    ExpDb {
        #[serde(default = "d_db_floor")]
        db_floor: f64,
        #[serde(default = "d_gate")]
        gate: f64,
    },
    ExpNorm {
        #[serde(default = "d_k")]
        k: f64,
    },
    PitchExp {
        #[serde(default = "d_f0")]
        f0: f64,
        #[serde(default = "d_octaves")]
        octaves: f64,
    },
}

impl From<FunctionConfig> for MappingFn {
    fn from(f: FunctionConfig) -> Self {
        match f {
            FunctionConfig::Linear => MappingFn::Linear,
            FunctionConfig::ExpDb { db_floor, gate } => MappingFn::ExpDb { db_floor, gate },
            FunctionConfig::ExpNorm { k } => MappingFn::ExpNorm { k },
            FunctionConfig::PitchExp { f0, octaves } => MappingFn::PitchExp { f0, octaves },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum RawInvalid {
    Value(f64),
    None,
}

impl<'de> Deserialize<'de> for RawInvalid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(RawInvalid::Value(v)),
            Repr::Word(w) if w == "none" => Ok(RawInvalid::None),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a number or \"none\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMapping {
    id: String,
    source: RawSource,
    #[serde(default)]
    strategy: Option<StrategyConfig>,
    function: FunctionConfig,
    out_address: String,
    #[serde(default)]
    out_range: Option<[f64; 2]>,
    #[serde(default)]
    send_on_invalid: Option<RawInvalid>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPreset {
    name: String,
    mappings: Vec<RawMapping>,
}

fn d_listen() -> String {
    DEFAULT_LISTEN.into()
}
fn d_osc_out() -> String {
    DEFAULT_OSC_OUT.into()
}
fn d_rate() -> f64 {
    30.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "d_listen")]
    listen: String,
    #[serde(default = "d_osc_out")]
    osc_out: String,
    #[serde(default)]
    strategy: StrategyConfig,
    #[serde(default)]
    smoother: RawSmoother,
    #[serde(default)]
    calibration: RawCalibration,
    mappings: Vec<RawMapping>,
    #[serde(default = "d_rate")]
    telemetry_rate: f64,
    #[serde(default)]
    only_on_change: RawOnlyOnChange,
    #[serde(default)]
    pairs: Option<Vec<[Kp; 2]>>,
    #[serde(default)]
    presets: Vec<RawPreset>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub mappings: Vec<MappingSpec>,
}

/// Fully validated engine configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub listen: String,
    pub osc_out: String,
    pub strategy: ReferenceStrategy,
    pub tau_ref_ms: f64,
    pub smoother: SmootherConfig,
    pub calibration: SpeedCalibration,
    pub mappings: Vec<MappingSpec>,
    pub telemetry_rate: f64,
    pub only_on_change: Option<f64>,
    pub pairs: Vec<(KeypointName, KeypointName)>,
    pub presets: Vec<Preset>,
}

impl EngineConfig {
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            smoother: self.smoother,
            tau_ref_ms: self.tau_ref_ms,
            strategy: self.strategy,
            calibration: self.calibration,
            mappings: self.mappings.clone(),
            pairs: self.pairs.clone(),
            only_on_change: self.only_on_change,
        }
    }

    pub fn preset(&self, name: &str) -> Option<&Preset> {
        self.presets.iter().find(|p| p.name == name)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<EngineConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<EngineConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::at("<document>", e.message()))?;
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::at(if path == "." { "<document>".into() } else { path }, e.into_inner().message())
    })?;
    build(raw)
}

fn build_mapping(raw: &RawMapping, path: &str) -> Result<MappingSpec, ConfigError> {
    let feature = match (raw.source.feature, raw.source.pair) {
        (FeatureKind::RelSpeed, Some(Kp(other))) => Feature::RelSpeed(other),
        (FeatureKind::RelSpeed, None) => {
            return Err(ConfigError::at(
                format!("{path}.source.pair"),
                format!("mapping `{}`: rel_speed requires a pair point", raw.id),
            ))
        }
        (_, Some(_)) => {
            return Err(ConfigError::at(
                format!("{path}.source.pair"),
                format!("mapping `{}`: pair only applies to rel_speed", raw.id),
            ))
        }
        (FeatureKind::Speed, None) => Feature::Speed,
        (FeatureKind::PosU, None) => Feature::PosU,
        (FeatureKind::PosV, None) => Feature::PosV,
    };
    let function = MappingFn::from(raw.function);
    let mut spec = MappingSpec::new(raw.id.clone(), raw.source.point.0, feature, function, &raw.out_address);
    if let Some([lo, hi]) = raw.out_range {
        spec.out_range = (lo, hi);
        spec.on_invalid = default_on_invalid(&function, spec.out_range);
    }
    match raw.send_on_invalid {
        Some(RawInvalid::Value(v)) => spec.on_invalid = OnInvalid::Value(v),
        Some(RawInvalid::None) => spec.on_invalid = OnInvalid::Skip,
        None => {}
    }
    if let Some(s) = &raw.strategy {
        spec.strategy = Some(
            s.build()
                .map_err(|m| ConfigError::at(format!("{path}.strategy"), format!("mapping `{}`: {m}", raw.id)))?,
        );
    }
    spec.validate().map_err(|e| ConfigError::at(path, e))?;
    Ok(spec)
}

fn build_mappings(raw: &[RawMapping], path: &str) -> Result<Vec<MappingSpec>, ConfigError> {
    if raw.is_empty() {
        return Err(ConfigError::at(path, "at least one mapping is required"));
    }
    let mut out: Vec<MappingSpec> = Vec::with_capacity(raw.len());
    for (i, m) in raw.iter().enumerate() {
        let p = format!("{path}[{i}]");
        if out.iter().any(|o| o.id == m.id) {
            return Err(ConfigError::at(format!("{p}.id"), format!("duplicate mapping id `{}`", m.id)));
        }
        out.push(build_mapping(m, &p)?);
    }
    Ok(out)
}

fn build(raw: RawConfig) -> Result<EngineConfig, ConfigError> {
    let strategy = raw.strategy.build().map_err(|m| ConfigError::at("strategy", m))?;
    let smoother = SmootherConfig {
        tau_ms: raw.smoother.tau,
        c_min: raw.smoother.c_min,
        t_hold_ms: raw.smoother.t_hold,
    };
    smoother.validate().map_err(|e| ConfigError::at("smoother", e))?;
    let calibration = SpeedCalibration {
        s_max: raw.calibration.s_max,
        method: match raw.calibration.method {
            RawCalMethod::Fixed => CalibrationMethod::Fixed,
            RawCalMethod::Percentile => CalibrationMethod::Percentile(raw.calibration.p),
        },
    };
    calibration.validate().map_err(|e| ConfigError::at("calibration", e))?;
    if !(1.0..=60.0).contains(&raw.telemetry_rate) {
        return Err(ConfigError::at(
            "telemetry_rate",
            format!("must lie in [1, 60] Hz, got {}", raw.telemetry_rate),
        ));
    }
    if !(raw.only_on_change.epsilon >= 0.0) {
        return Err(ConfigError::at("only_on_change.epsilon", "must be non-negative"));
    }
    let mappings = build_mappings(&raw.mappings, "mappings")?;
    let mut presets = Vec::with_capacity(raw.presets.len());
    for (i, p) in raw.presets.iter().enumerate() {
        presets.push(Preset {
            name: p.name.clone(),
            mappings: build_mappings(&p.mappings, &format!("presets[{i}].mappings"))?,
        });
    }
    let pairs = match raw.pairs {
        Some(pairs) => {
            for (i, [a, b]) in pairs.iter().enumerate() {
                if a == b {
                    return Err(ConfigError::at(format!("pairs[{i}]"), "a pair needs two distinct points"));
                }
            }
            pairs.into_iter().map(|[a, b]| (a.0, b.0)).collect()
        }
        None => bodyctl_core::kinematics::DEFAULT_PAIRS.to_vec(),
    };
    for (field, value) in [("listen", &raw.listen), ("osc_out", &raw.osc_out)] {
        if value.rsplit_once(':').and_then(|(_, p)| p.parse::<u16>().ok()).is_none() {
            return Err(ConfigError::at(field, format!("expected host:port, got `{value}`")));
        }
    }
    Ok(EngineConfig {
        listen: raw.listen,
        osc_out: raw.osc_out,
        strategy,
        tau_ref_ms: raw.strategy.tau_ref,
        smoother,
        calibration,
        mappings,
        telemetry_rate: raw.telemetry_rate,
        only_on_change: raw.only_on_change.enabled.then_some(raw.only_on_change.epsilon),
        pairs,
        presets,
    })
}
