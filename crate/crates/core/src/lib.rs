//! Allocation-only core of a gestural music controller.
//!
//! The crate turns streamed 2D body keypoints into sound-control values:
//!
//! * [`keypoint`]: the 17 named keypoints and the per-frame container.
//! * [`kinematics`]: confidence-gated smoothing, velocity, speed and
//!   relative velocity per point.
//! * [`body_frame`]: camera-centred, shoulder-anchored and body-scaled
//!   reference strategies producing `(u, v)` in `[0, 1]²`.
//! * [`mapping`]: linear, dB-affine and normalized exponential amplitude
//!   curves, exponential pitch, speed calibration and JND analysis.
//! * [`route`] and [`osc`]: binding features to output parameters and the
//!   OSC 1.0 wire encoding.
//! * [`pipeline`]: the per-frame chain tying all of the above together.
//!
//! Nothing here touches IO, clocks or threads, so the whole crate builds
//! with `#![no_std]` and `alloc`.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x >= lo)` is how NaN gets rejected along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod body_frame;
pub mod geom;
pub mod keypoint;
pub mod kinematics;
pub mod mapping;
pub mod osc;
pub mod pipeline;
pub mod route;

pub use body_frame::{BodyRefs, NormalizedPosition, ReferenceStrategy, Side};
pub use geom::Vec2;
pub use keypoint::{KeypointName, PoseFrame, RawKeypoint};
pub use kinematics::{KinematicFeatures, Kinematics, PointState, SmootherConfig};
pub use mapping::{JndReport, MappingFn, SpeedCalibration};
pub use pipeline::{FrameOutput, Pipeline, PipelineConfig, PipelineError};
pub use route::{Feature, MappingSpec, OnInvalid, ParamUpdate};
