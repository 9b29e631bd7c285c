//! Binding of kinematic features to mapping functions and output addresses.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::body_frame::{self, BodyRefs, ReferenceStrategy};
use crate::keypoint::KeypointName;
use crate::kinematics::KinematicFeatures;
use crate::mapping::{normalize_speed, MappingError, MappingFn, SpeedCalibration};
use crate::osc::{self, OscError};

/// Which feature of a point drives a mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    /// Speed, scaled to the strategy's length unit and normalized by the calibration.
    Speed,
    /// Horizontal body-relative position.
    PosU,
    /// Vertical body-relative position.
    PosV,
    /// Magnitude of the velocity relative to another point, scaled like `Speed`.
    RelSpeed(KeypointName),
}

/// What to emit while the source feature is unavailable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OnInvalid {
    Value(f64),
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingSpec {
    pub id: String,
    pub point: KeypointName,
    pub feature: Feature,
    /// Overrides the engine-wide strategy for this mapping.
    pub strategy: Option<ReferenceStrategy>,
    pub function: MappingFn,
    pub address: Arc<str>,
    pub out_range: (f64, f64),
    pub on_invalid: OnInvalid,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("mapping `{id}`: {source}")]
    Address {
        id: String,
        #[source]
        source: OscError,
    },
    #[error("mapping `{id}`: out_range [{lo}, {hi}] must satisfy lo < hi")]
    EmptyRange { id: String, lo: f64, hi: f64 },
    #[error("mapping `{id}`: pitch mappings must declare out_range [{lo}, {hi}]")]
    PitchRange { id: String, lo: f64, hi: f64 },
    #[error("mapping `{id}`: send_on_invalid {value} lies outside out_range")]
    InvalidValue { id: String, value: f64 },
    #[error("mapping `{id}`: {source}")]
    Function {
        id: String,
        #[source]
        source: MappingError,
    },
    #[error("mapping `{id}`: reference strategy parameters must be positive")]
    Strategy { id: String },
    #[error("mapping `{id}`: relative speed needs two distinct points")]
    SelfPair { id: String },
}

impl MappingSpec {
    /// A spec with the conventional range and invalid behaviour for `function`.
    pub fn new(
        id: impl Into<String>,
        point: KeypointName,
        feature: Feature,
        function: MappingFn,
        address: &str,
    ) -> Self {
        let out_range = function.output_range();
        Self {
            id: id.into(),
            point,
            feature,
            strategy: None,
            function,
            address: Arc::from(address),
            out_range,
            on_invalid: default_on_invalid(&function, out_range),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let id = || self.id.clone();
        osc::validate_address(&self.address).map_err(|source| SpecError::Address { id: id(), source })?;
        self.function
            .validate()
            .map_err(|source| SpecError::Function { id: id(), source })?;
        let (lo, hi) = self.out_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(SpecError::EmptyRange { id: id(), lo, hi });
        }
        if self.function.is_pitch() {
            let (f_lo, f_hi) = self.function.output_range();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
            if !(close(lo, f_lo) && close(hi, f_hi)) {
                return Err(SpecError::PitchRange {
                    id: id(),
                    lo: f_lo,
                    hi: f_hi,
                });
            }
        }
        if let OnInvalid::Value(value) = self.on_invalid {
            if !(lo..=hi).contains(&value) {
                return Err(SpecError::InvalidValue { id: id(), value });
            }
        }
        if let Some(s) = &self.strategy {
            s.validate().map_err(|_| SpecError::Strategy { id: id() })?;
        }
        if self.feature == Feature::RelSpeed(self.point) {
            return Err(SpecError::SelfPair { id: id() });
        }
        Ok(())
    }
}

/// Amplitude-like outputs fall silent (`lo`); pitch-like outputs go quiet by not sending.
pub fn default_on_invalid(function: &MappingFn, out_range: (f64, f64)) -> OnInvalid {
    if function.is_pitch() {
        OnInvalid::Skip
    } else {
        OnInvalid::Value(out_range.0)
    }
}

/// A value bound for one output address.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamUpdate {
    /// Frame time in milliseconds.
    pub t: f64,
    pub address: Arc<str>,
    pub value: f64,
}

/// Everything a mapping may read for one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext<'a> {
    pub features: &'a KinematicFeatures,
    pub refs: &'a BodyRefs,
    pub calibration: &'a SpeedCalibration,
    pub strategy: &'a ReferenceStrategy,
}

impl FrameContext<'_> {
    /// Control value in `[0, 1]` for `spec`, or `None` while its source is invalid.
    pub fn control_value(&self, spec: &MappingSpec) -> Option<f64> {
        let strategy = spec.strategy.as_ref().unwrap_or(self.strategy);
        let point = self.features.point(spec.point);
        if !point.valid {
            return None;
        }
        match spec.feature {
            Feature::Speed => {
                let s = body_frame::scaled_speed(point.speed, self.refs, strategy).ok()?;
                Some(normalize_speed(s, self.calibration))
            }
            Feature::RelSpeed(other) => {
                let other_f = self.features.point(other);
                if !other_f.valid {
                    return None;
                }
                let rel = self
                    .features
                    .relative(spec.point, other)
                    .map(|r| r.r)
                    .unwrap_or(point.velocity - other_f.velocity);
                let s = body_frame::scaled_speed(rel.norm(), self.refs, strategy).ok()?;
                Some(normalize_speed(s, self.calibration))
            }
            Feature::PosU | Feature::PosV => {
                let n = body_frame::normalize(spec.point, point.position, self.refs, strategy).ok()?;
                Some(if spec.feature == Feature::PosU { n.u } else { n.v })
            }
        }
    }
}

/// Output value of `spec` for a control value; `None` means nothing is sent.
pub fn output_value(spec: &MappingSpec, control: Option<f64>) -> Option<f64> {
    let (lo, hi) = spec.out_range;
    let value = match control {
        None => match spec.on_invalid {
            OnInvalid::Value(v) => v,
            OnInvalid::Skip => return None,
        },
        Some(c) if spec.function.is_pitch() => spec.function.apply(c),
        Some(c) => lo + spec.function.apply(c) * (hi - lo),
    };
    Some(value.clamp(lo, hi))
}

/// Per-spec output values for one frame, in spec order.
pub fn route_values(ctx: &FrameContext<'_>, specs: &[MappingSpec]) -> Vec<Option<f64>> {
    specs
        .iter()
        .map(|spec| output_value(spec, ctx.control_value(spec)))
        .collect()
}

/// One update per spec (unless it is skipped while invalid), in spec order.
pub fn route(ctx: &FrameContext<'_>, specs: &[MappingSpec]) -> Vec<ParamUpdate> {
    let t = ctx.features.t;
    specs
        .iter()
        .zip(route_values(ctx, specs))
        .filter_map(|(spec, value)| {
            Some(ParamUpdate {
                t,
                address: spec.address.clone(),
                value: value?,
            })
        })
        .collect()
}

/// Suppresses updates that moved less than `epsilon` since the last one sent
/// to the same address.
#[derive(Debug, Clone, Default)]
pub struct ChangeFilter {
    epsilon: f64,
    last: Vec<(Arc<str>, f64)>,
}

impl ChangeFilter {
    pub const DEFAULT_EPSILON: f64 = 1e-4;

    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            last: Vec::new(),
        }
    }

    pub fn retain(&mut self, updates: &mut Vec<ParamUpdate>) {
        updates.retain(|u| match self.last.iter_mut().find(|(a, _)| *a == u.address) {
            Some((_, prev)) if (u.value - *prev).abs() < self.epsilon => false,
            Some((_, prev)) => {
                *prev = u.value;
                true
            }
            None => {
                self.last.push((u.address.clone(), u.value));
                true
            }
        });
    }
}
