//! The per-frame chain: smooth → features → refs → normalize → map → route.

use alloc::vec::Vec;

use crate::body_frame::{self, BodyRefs, NormalizedPosition, RefTracker, ReferenceStrategy};
use crate::keypoint::{KeypointName, PoseFrame};
use crate::kinematics::{KinematicFeatures, Kinematics, KinematicsError, SmootherConfig, DEFAULT_PAIRS};
use crate::mapping::SpeedCalibration;
use crate::route::{self, ChangeFilter, Feature, FrameContext, MappingSpec, ParamUpdate, SpecError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("reference strategy parameters must be positive")]
    Strategy,
    #[error("at least one mapping is required")]
    NoMappings,
    #[error("calibration: {0}")]
    Calibration(#[from] crate::mapping::MappingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub smoother: SmootherConfig,
    /// Smoothing time constant of the reference distances, ms.
    pub tau_ref_ms: f64,
    pub strategy: ReferenceStrategy,
    pub calibration: SpeedCalibration,
    pub mappings: Vec<MappingSpec>,
    /// Extra relative-velocity pairs beyond those the mappings reference.
    pub pairs: Vec<(KeypointName, KeypointName)>,
    /// Epsilon of the only-on-change filter; `None` sends every frame.
    pub only_on_change: Option<f64>,
}

impl PipelineConfig {
    pub fn new(mappings: Vec<MappingSpec>) -> Self {
        Self {
            smoother: SmootherConfig::default(),
            tau_ref_ms: RefTracker::DEFAULT_TAU_MS,
            strategy: ReferenceStrategy::default(),
            calibration: SpeedCalibration::default(),
            mappings,
            pairs: DEFAULT_PAIRS.to_vec(),
            only_on_change: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.smoother.validate()?;
        self.strategy.validate().map_err(|_| PipelineError::Strategy)?;
        self.calibration.validate()?;
        if self.mappings.is_empty() {
            return Err(PipelineError::NoMappings);
        }
        for m in &self.mappings {
            m.validate()?;
        }
        Ok(())
    }
}

/// Monitoring state of one control point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSnapshot {
    pub name: KeypointName,
    pub valid: bool,
    pub position: Option<NormalizedPosition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub t: f64,
    /// Updates to send, after the only-on-change filter.
    pub updates: Vec<ParamUpdate>,
    /// Current value of each mapping, in mapping order; `None` while skipped.
    pub outputs: Vec<Option<f64>>,
    pub points: Vec<PointSnapshot>,
    pub refs: BodyRefs,
    /// Scaled speeds of the points driving speed mappings, for calibration.
    pub speed_samples: Vec<f64>,
}

const DEFAULT_CONTROL_POINTS: [KeypointName; 4] = [
    KeypointName::LeftWrist,
    KeypointName::RightWrist,
    KeypointName::LeftAnkle,
    KeypointName::RightAnkle,
];

/// Engine state for one performer stream.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    kinematics: Kinematics,
    refs: RefTracker,
    pairs: Vec<(KeypointName, KeypointName)>,
    control_points: Vec<KeypointName>,
    change_filter: Option<ChangeFilter>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let kinematics = Kinematics::new(cfg.smoother)?;
        let mut p = Self {
            kinematics,
            refs: RefTracker::new(cfg.tau_ref_ms),
            pairs: Vec::new(),
            control_points: Vec::new(),
            change_filter: cfg.only_on_change.map(ChangeFilter::new),
            cfg,
        };
        p.rebuild_bindings();
        Ok(p)
    }

    fn rebuild_bindings(&mut self) {
        let mut pairs = self.cfg.pairs.clone();
        let mut points: Vec<KeypointName> = DEFAULT_CONTROL_POINTS.to_vec();
        for m in &self.cfg.mappings {
            if let Feature::RelSpeed(other) = m.feature {
                if !pairs.iter().any(|&(a, b)| (a, b) == (m.point, other) || (b, a) == (m.point, other)) {
                    pairs.push((m.point, other));
                }
            }
            if !points.contains(&m.point) {
                points.push(m.point);
            }
        }
        points.sort();
        self.pairs = pairs;
        self.control_points = points;
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn mappings(&self) -> &[MappingSpec] {
        &self.cfg.mappings
    }

    pub fn set_strategy(&mut self, strategy: ReferenceStrategy) -> Result<(), PipelineError> {
        strategy.validate().map_err(|_| PipelineError::Strategy)?;
        self.cfg.strategy = strategy;
        Ok(())
    }

    pub fn set_confidence_threshold(&mut self, c_min: f64) -> Result<(), PipelineError> {
        self.kinematics.set_confidence_threshold(c_min)?;
        self.cfg.smoother.c_min = c_min;
        Ok(())
    }

    pub fn set_calibration(&mut self, calibration: SpeedCalibration) -> Result<(), PipelineError> {
        calibration.validate()?;
        self.cfg.calibration = calibration;
        Ok(())
    }

    /// Swaps the mapping set; filter state for the old addresses is dropped.
    pub fn set_mappings(&mut self, mappings: Vec<MappingSpec>) -> Result<(), PipelineError> {
        if mappings.is_empty() {
            return Err(PipelineError::NoMappings);
        }
        for m in &mappings {
            m.validate()?;
        }
        self.cfg.mappings = mappings;
        self.change_filter = self.cfg.only_on_change.map(ChangeFilter::new);
        self.rebuild_bindings();
        Ok(())
    }

    pub fn last_t(&self) -> Option<f64> {
        self.kinematics.last_t()
    }

    /// Forgets all tracking state, keeping the configuration. Used when a
    /// stream restarts with a new time base.
    pub fn reset(&mut self) {
        self.kinematics = Kinematics::new(self.cfg.smoother).expect("validated smoother");
        self.refs = RefTracker::new(self.cfg.tau_ref_ms);
        self.change_filter = self.cfg.only_on_change.map(ChangeFilter::new);
    }

    /// Runs one frame through the whole chain.
    pub fn process(&mut self, frame: &PoseFrame) -> Result<FrameOutput, PipelineError> {
        self.kinematics.update(frame)?;
        Ok(self.emit())
    }

    /// Advances time without a frame (e.g. the performer's stream stalled).
    pub fn tick(&mut self, t: f64) -> Result<FrameOutput, PipelineError> {
        self.kinematics.tick(t)?;
        Ok(self.emit())
    }

    pub fn features(&self) -> KinematicFeatures {
        self.kinematics.features(&self.pairs)
    }

    fn emit(&mut self) -> FrameOutput {
        let features = self.kinematics.features(&self.pairs);
        let refs = self.refs.update(&features);
        let ctx = FrameContext {
            features: &features,
            refs: &refs,
            calibration: &self.cfg.calibration,
            strategy: &self.cfg.strategy,
        };
        let outputs = route::route_values(&ctx, &self.cfg.mappings);
        let mut updates: Vec<ParamUpdate> = self
            .cfg
            .mappings
            .iter()
            .zip(&outputs)
            .filter_map(|(m, v)| {
                Some(ParamUpdate {
                    t: features.t,
                    address: m.address.clone(),
                    value: (*v)?,
                })
            })
            .collect();
        if let Some(filter) = &mut self.change_filter {
            filter.retain(&mut updates);
        }

        let points = self
            .control_points
            .iter()
            .map(|&name| {
                let pf = features.point(name);
                PointSnapshot {
                    name,
                    valid: pf.valid,
                    position: pf
                        .valid
                        .then(|| body_frame::normalize(name, pf.position, &refs, &self.cfg.strategy).ok())
                        .flatten(),
                }
            })
            .collect();

        let speed_samples = self
            .cfg
            .mappings
            .iter()
            .filter(|m| m.feature == Feature::Speed)
            .filter_map(|m| {
                let pf = features.point(m.point);
                let strategy = m.strategy.as_ref().unwrap_or(&self.cfg.strategy);
                pf.valid
                    .then(|| body_frame::scaled_speed(pf.speed, &refs, strategy).ok())
                    .flatten()
            })
            .collect();

        FrameOutput {
            t: features.t,
            updates,
            outputs,
            points,
            refs,
            speed_samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::MappingFn;
    use alloc::vec;
    use KeypointName::*;

    fn body(t: f64, wrist_x: f64) -> PoseFrame {
        PoseFrame::new(t)
            .unwrap()
            .with(LeftShoulder, 0.40, 0.40, 0.9)
            .unwrap()
            .with(RightShoulder, 0.60, 0.40, 0.9)
            .unwrap()
            .with(LeftHip, 0.42, 0.70, 0.9)
            .unwrap()
            .with(RightHip, 0.58, 0.70, 0.9)
            .unwrap()
            .with(RightWrist, wrist_x, 0.40, 0.9)
            .unwrap()
    }

    fn amp_pipeline() -> Pipeline {
        Pipeline::new(PipelineConfig::new(vec![MappingSpec::new(
            "amp",
            RightWrist,
            Feature::Speed,
            MappingFn::exp_db(),
            "/amp",
        )]))
        .unwrap()
    }

    #[test]
    fn still_performer_is_silent() {
        let mut p = amp_pipeline();
        for i in 0..30 {
            let out = p.process(&body(i as f64 * 33.0, 0.7)).unwrap();
            assert_eq!(out.updates.len(), 1);
            assert_eq!(out.updates[0].value, 0.0);
        }
    }

    #[test]
    fn moving_wrist_is_audible() {
        let mut p = amp_pipeline();
        let mut last = 0.0;
        for i in 0..30 {
            let x = 0.6 + 0.01 * i as f64;
            last = p.process(&body(i as f64 * 33.0, x)).unwrap().updates[0].value;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn stalled_stream_fails_to_silence() {
        let mut p = amp_pipeline();
        for i in 0..10 {
            p.process(&body(i as f64 * 33.0, 0.6 + 0.02 * i as f64)).unwrap();
        }
        let out = p.tick(297.0 + 350.0).unwrap();
        assert_eq!(out.updates[0].value, 0.0);
        assert!(out.points.iter().all(|s| !s.valid));
    }

    #[test]
    fn regressing_timestamp_is_an_error() {
        let mut p = amp_pipeline();
        p.process(&body(100.0, 0.7)).unwrap();
        assert!(matches!(
            p.process(&body(50.0, 0.7)),
            Err(PipelineError::Kinematics(KinematicsError::NonIncreasing { .. }))
        ));
    }

    #[test]
    fn only_on_change_suppresses_repeats() {
        let mut cfg = amp_pipeline().config().clone();
        cfg.only_on_change = Some(1e-4);
        let mut p = Pipeline::new(cfg).unwrap();
        assert_eq!(p.process(&body(0.0, 0.7)).unwrap().updates.len(), 1);
        assert_eq!(p.process(&body(33.0, 0.7)).unwrap().updates.len(), 0);
    }

    #[test]
    fn reset_accepts_an_earlier_time_base() {
        let mut p = amp_pipeline();
        p.process(&body(5000.0, 0.7)).unwrap();
        p.reset();
        assert_eq!(p.last_t(), None);
        assert!(p.process(&body(10.0, 0.7)).is_ok());
    }

    #[test]
    fn empty_mapping_set_rejected() {
        assert_eq!(
            Pipeline::new(PipelineConfig::new(vec![])).unwrap_err(),
            PipelineError::NoMappings
        );
    }
}
