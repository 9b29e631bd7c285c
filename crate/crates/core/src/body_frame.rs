//! Body-relative coordinates.
//!
//! Three reference strategies are available:
//!
//! * [`ReferenceStrategy::CameraCenter`]: the image itself is the frame; the
//!   horizontal centre of the view is the reference.
//! * [`ReferenceStrategy::ShoulderAnchor`]: offsets from the same-side
//!   shoulder divided by a fixed arm length. Only valid while the performer
//!   keeps the distance to the camera the arm length was measured at.
//! * [`ReferenceStrategy::BodyScaled`]: offsets from the same-side shoulder
//!   divided by the shoulder-to-shoulder distance horizontally and the
//!   shoulder-to-hip distance vertically. Both scales shrink and grow with
//!   the performer's image, so the result does not depend on how far they
//!   stand from the camera.
//!
//! "Outward" always means away from the body midline, resolved through the
//! facing sign so mirrored and unmirrored cameras behave the same.

use crate::geom::Vec2;
use crate::keypoint::{KeypointName, Laterality};
use crate::kinematics::KinematicFeatures;

/// Shoulder distances below this are treated as a sideways-on performer.
pub const MIN_REFERENCE_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum BodyFrameError {
    #[error("body reference distances are not available for this frame")]
    InvalidRefs,
    #[error("reference strategy parameters must be finite and strictly positive")]
    BadParameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyScaledParams {
    /// Outward reach in shoulder widths mapped to `u = 1`.
    pub out_mult: f64,
    /// Inward reach (across the body) in shoulder widths mapped to `u = 0`.
    pub in_mult: f64,
    /// Height above the anchor, in torso lengths, mapped to `v = 1`.
    pub v_up_mult: f64,
    /// Depth below the anchor, in torso lengths, mapped to `v = 0`.
    pub v_down_mult: f64,
}

impl Default for BodyScaledParams {
    fn default() -> Self {
        Self {
            out_mult: 2.0,
            in_mult: 1.5,
            v_up_mult: 1.5,
            v_down_mult: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceStrategy {
    CameraCenter,
    ShoulderAnchor { arm_length: f64 },
    BodyScaled(BodyScaledParams),
}

impl Default for ReferenceStrategy {
    fn default() -> Self {
        ReferenceStrategy::BodyScaled(BodyScaledParams::default())
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl ReferenceStrategy {
    pub fn validate(&self) -> Result<(), BodyFrameError> {
        let ok = match *self {
            ReferenceStrategy::CameraCenter => true,
            ReferenceStrategy::ShoulderAnchor { arm_length } => positive(arm_length),
            ReferenceStrategy::BodyScaled(p) => {
                positive(p.out_mult)
                    && positive(p.in_mult)
                    && positive(p.v_up_mult)
                    && positive(p.v_down_mult)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(BodyFrameError::BadParameters)
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReferenceStrategy::CameraCenter => "camera_center",
            ReferenceStrategy::ShoulderAnchor { .. } => "shoulder_anchor",
            ReferenceStrategy::BodyScaled(_) => "body_scaled",
        }
    }

    /// Whether this strategy needs shoulder/hip references at all.
    pub fn needs_refs(&self) -> bool {
        !matches!(self, ReferenceStrategy::CameraCenter)
    }
}

/// Reference geometry of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyRefs {
    pub t: f64,
    /// Shoulder-to-shoulder distance, smoothed.
    pub d_ss: f64,
    /// Same-side shoulder-to-hip distances, smoothed; `None` when that side is missing.
    pub d_sh_left: Option<f64>,
    pub d_sh_right: Option<f64>,
    pub left_shoulder: Vec2,
    pub right_shoulder: Vec2,
    pub left_hip: Option<Vec2>,
    pub right_hip: Option<Vec2>,
    /// `sign(x_right_shoulder - x_left_shoulder)`, always ±1.
    pub facing: f64,
    pub valid: bool,
}

impl BodyRefs {
    pub fn invalid(t: f64) -> Self {
        Self {
            t,
            d_ss: 0.0,
            d_sh_left: None,
            d_sh_right: None,
            left_shoulder: Vec2::ZERO,
            right_shoulder: Vec2::ZERO,
            left_hip: None,
            right_hip: None,
            facing: 1.0,
            valid: false,
        }
    }

    pub fn shoulder(&self, side: Side) -> Vec2 {
        match side {
            Side::Left => self.left_shoulder,
            Side::Right => self.right_shoulder,
        }
    }

    pub fn hip(&self, side: Side) -> Option<Vec2> {
        match side {
            Side::Left => self.left_hip,
            Side::Right => self.right_hip,
        }
    }

    pub fn d_sh(&self, side: Side) -> Option<f64> {
        match side {
            Side::Left => self.d_sh_left,
            Side::Right => self.d_sh_right,
        }
    }

    /// Sign turning an image-x offset into an outward offset for `side`.
    pub fn outward_sign(&self, side: Side) -> f64 {
        match side {
            Side::Right => self.facing,
            Side::Left => -self.facing,
        }
    }
}

fn smoothing_alpha(dt_ms: f64, tau_ms: f64) -> f64 {
    if tau_ms <= 0.0 {
        1.0
    } else {
        1.0 - libm::exp(-dt_ms / tau_ms)
    }
}

fn smooth(prev: Option<f64>, raw: f64, alpha: f64) -> f64 {
    match prev {
        Some(p) => alpha * raw + (1.0 - alpha) * p,
        None => raw,
    }
}

/// Reference distances for the current frame, smoothed against `prev` with
/// time constant `tau_ref_ms` (zero disables smoothing).
pub fn compute_refs(features: &KinematicFeatures, prev: Option<&BodyRefs>, tau_ref_ms: f64) -> BodyRefs {
    let t = features.t;
    let ls = features.point(KeypointName::LeftShoulder);
    let rs = features.point(KeypointName::RightShoulder);
    if !(ls.valid && rs.valid) {
        return BodyRefs::invalid(t);
    }
    let raw_ss = ls.position.distance(rs.position);
    if !(raw_ss >= MIN_REFERENCE_DISTANCE) {
        return BodyRefs::invalid(t);
    }

    let prev = prev.filter(|p| p.valid && p.t < t);
    let alpha = prev.map_or(1.0, |p| smoothing_alpha(t - p.t, tau_ref_ms));

    let hip = |name: KeypointName| {
        let h = features.point(name);
        h.valid.then_some(h.position)
    };
    let left_hip = hip(KeypointName::LeftHip);
    let right_hip = hip(KeypointName::RightHip);
    let side_distance = |shoulder: Vec2, hip: Option<Vec2>, prev: Option<f64>| {
        let raw = shoulder.distance(hip?);
        (raw >= MIN_REFERENCE_DISTANCE).then(|| smooth(prev, raw, alpha))
    };

    let dx = rs.position.x - ls.position.x;
    BodyRefs {
        t,
        d_ss: smooth(prev.map(|p| p.d_ss), raw_ss, alpha),
        d_sh_left: side_distance(ls.position, left_hip, prev.and_then(|p| p.d_sh_left)),
        d_sh_right: side_distance(rs.position, right_hip, prev.and_then(|p| p.d_sh_right)),
        left_shoulder: ls.position,
        right_shoulder: rs.position,
        left_hip,
        right_hip,
        facing: if dx < 0.0 { -1.0 } else { 1.0 },
        valid: true,
    }
}

/// Smoothed reference state for one performer stream.
#[derive(Debug, Clone)]
pub struct RefTracker {
    tau_ref_ms: f64,
    prev: Option<BodyRefs>,
}

impl RefTracker {
    pub const DEFAULT_TAU_MS: f64 = 500.0;

    pub fn new(tau_ref_ms: f64) -> Self {
        Self {
            tau_ref_ms,
            prev: None,
        }
    }

    pub fn update(&mut self, features: &KinematicFeatures) -> BodyRefs {
        let refs = compute_refs(features, self.prev.as_ref(), self.tau_ref_ms);
        self.prev = Some(refs);
        refs
    }
}

/// Control-point position in `[0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPosition {
    /// Horizontal ratio, 1 = outward limit.
    pub u: f64,
    /// Vertical ratio, 1 = upper limit.
    pub v: f64,
    /// Horizontal offset in reference units before clamping.
    pub raw_u: f64,
    /// Vertical offset in reference units before clamping.
    pub raw_v: f64,
}

/// Maps `raw` from `[-low, high]` onto `[0, 1]`, clamping outside.
fn ratio(raw: f64, low: f64, high: f64) -> f64 {
    unit_clamp((raw.clamp(-low, high) + low) / (low + high))
}

fn unit_clamp(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Which landmark a control point is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Shoulder(Side),
    Hip(Side),
    ShoulderMidpoint,
}

impl Anchor {
    /// Wrists, elbows and the head hang off the shoulders; knees and ankles off the hips.
    pub fn for_point(name: KeypointName) -> Anchor {
        let side = match name.laterality() {
            Laterality::Left => Side::Left,
            Laterality::Right => Side::Right,
            Laterality::Midline => return Anchor::ShoulderMidpoint,
        };
        if name.is_lower_body() {
            Anchor::Hip(side)
        } else {
            Anchor::Shoulder(side)
        }
    }

    fn side(self) -> Side {
        match self {
            Anchor::Shoulder(s) | Anchor::Hip(s) => s,
            Anchor::ShoulderMidpoint => Side::Right,
        }
    }

    fn origin(self, refs: &BodyRefs) -> Option<Vec2> {
        match self {
            Anchor::Shoulder(s) => Some(refs.shoulder(s)),
            Anchor::Hip(s) => refs.hip(s),
            Anchor::ShoulderMidpoint => Some((refs.left_shoulder + refs.right_shoulder).scale(0.5)),
        }
    }

    fn vertical_scale(self, refs: &BodyRefs) -> Option<f64> {
        match self {
            Anchor::Shoulder(s) | Anchor::Hip(s) => refs.d_sh(s),
            Anchor::ShoulderMidpoint => refs.d_sh_right.or(refs.d_sh_left),
        }
    }
}

/// Body-scaled normalization about the same-side shoulder (hip for the lower body).
///
/// For the upper body the horizontal scale is the shoulder width and the
/// vertical scale the same-side torso length; the lower body uses the torso
/// length on both axes.
pub fn normalize_body_scaled(
    point: Vec2,
    anchor: Anchor,
    refs: &BodyRefs,
    params: &BodyScaledParams,
) -> Result<NormalizedPosition, BodyFrameError> {
    if !refs.valid {
        return Err(BodyFrameError::InvalidRefs);
    }
    let origin = anchor.origin(refs).ok_or(BodyFrameError::InvalidRefs)?;
    let d_sh = anchor.vertical_scale(refs).ok_or(BodyFrameError::InvalidRefs)?;
    let d_h = match anchor {
        Anchor::Hip(_) => d_sh,
        _ => refs.d_ss,
    };
    let raw_u = refs.outward_sign(anchor.side()) * (point.x - origin.x) / d_h;
    let raw_v = (origin.y - point.y) / d_sh;
    Ok(NormalizedPosition {
        u: ratio(raw_u, params.in_mult, params.out_mult),
        v: ratio(raw_v, params.v_down_mult, params.v_up_mult),
        raw_u,
        raw_v,
    })
}

/// Offsets from the same-side anchor divided by a fixed arm length, clamped to ±1.
pub fn normalize_shoulder_anchor(
    point: Vec2,
    anchor: Anchor,
    refs: &BodyRefs,
    arm_length: f64,
) -> Result<NormalizedPosition, BodyFrameError> {
    if !refs.valid {
        return Err(BodyFrameError::InvalidRefs);
    }
    let origin = anchor.origin(refs).ok_or(BodyFrameError::InvalidRefs)?;
    let raw_u = refs.outward_sign(anchor.side()) * (point.x - origin.x) / arm_length;
    let raw_v = (origin.y - point.y) / arm_length;
    Ok(NormalizedPosition {
        u: ratio(raw_u, 1.0, 1.0),
        v: ratio(raw_v, 1.0, 1.0),
        raw_u,
        raw_v,
    })
}

/// The image is the frame: `u = x`, `v = 1 - y`.
pub fn normalize_camera_center(point: Vec2) -> NormalizedPosition {
    let raw_u = point.x;
    let raw_v = 1.0 - point.y;
    NormalizedPosition {
        u: unit_clamp(raw_u),
        v: unit_clamp(raw_v),
        raw_u,
        raw_v,
    }
}

/// Normalizes `name` at `point` under `strategy`.
pub fn normalize(
    name: KeypointName,
    point: Vec2,
    refs: &BodyRefs,
    strategy: &ReferenceStrategy,
) -> Result<NormalizedPosition, BodyFrameError> {
    let anchor = Anchor::for_point(name);
    match strategy {
        ReferenceStrategy::CameraCenter => Ok(normalize_camera_center(point)),
        ReferenceStrategy::ShoulderAnchor { arm_length } => {
            normalize_shoulder_anchor(point, anchor, refs, *arm_length)
        }
        ReferenceStrategy::BodyScaled(p) => normalize_body_scaled(point, anchor, refs, p),
    }
}

/// Speed in body lengths (shoulder widths) per second.
pub fn body_speed(s_abs: f64, refs: &BodyRefs) -> Result<f64, BodyFrameError> {
    if !refs.valid || !(refs.d_ss >= MIN_REFERENCE_DISTANCE) {
        return Err(BodyFrameError::InvalidRefs);
    }
    Ok(s_abs / refs.d_ss)
}

/// Speed in the length unit of `strategy`: image widths for the camera,
/// arm lengths for the shoulder anchor and shoulder widths when body-scaled.
pub fn scaled_speed(s_abs: f64, refs: &BodyRefs, strategy: &ReferenceStrategy) -> Result<f64, BodyFrameError> {
    match strategy {
        ReferenceStrategy::CameraCenter => Ok(s_abs),
        ReferenceStrategy::ShoulderAnchor { arm_length } => {
            if refs.valid {
                Ok(s_abs / arm_length)
            } else {
                Err(BodyFrameError::InvalidRefs)
            }
        }
        ReferenceStrategy::BodyScaled(_) => body_speed(s_abs, refs),
    }
}
