//! Deterministic synthetic performer for tests, demos and benchmarks.

use std::f64::consts::TAU;

use bodyctl_core::{KeypointName as K, PoseFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub duration_ms: f64,
    pub fps: f64,
    /// Left-wrist occlusion window `[start, end)` in ms, if any.
    pub dropout: Option<(f64, f64)>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            duration_ms: 10_000.0,
            fps: 30.0,
            dropout: Some((4000.0, 4600.0)),
        }
    }
}

fn round_to(x: f64, places: i32) -> f64 {
    let k = 10f64.powi(places);
    (x * k).round() / k
}

/// Pose at `t_ms`: a performer swaying and slowly approaching the camera,
/// right wrist circling with a growing radius, left wrist oscillating, right
/// ankle stepping.
pub fn synth_frame(t_ms: f64, params: &SynthParams) -> PoseFrame {
    let s = t_ms / 1000.0;
    let cx = 0.5 + 0.03 * (TAU * 0.2 * s).sin();
    let cy = 0.5;
    let k = 1.0 + 0.1 * (TAU * 0.1 * s).sin();

    let envelope = 0.5 - 0.5 * (TAU * 0.1 * s).cos();
    let rw = (
        0.25 + 0.12 * envelope * (TAU * 0.5 * s).sin(),
        -0.1 + 0.12 * envelope * (TAU * 0.5 * s).cos(),
    );
    let lw = (-0.2 - 0.08 * (TAU * 0.8 * s).sin(), 0.05 * (TAU * 0.3 * s).sin());
    let rs = (0.1, -0.1);
    let ls = (-0.1, -0.1);
    let step = 0.03 * (TAU * 0.7 * s).sin().max(0.0);

    let body: [(K, (f64, f64)); 17] = [
        (K::Nose, (0.0, -0.22)),
        (K::LeftEye, (-0.03, -0.25)),
        (K::RightEye, (0.03, -0.25)),
        (K::LeftEar, (-0.06, -0.24)),
        (K::RightEar, (0.06, -0.24)),
        (K::LeftShoulder, ls),
        (K::RightShoulder, rs),
        (K::LeftElbow, ((ls.0 + lw.0) / 2.0, (ls.1 + lw.1) / 2.0)),
        (K::RightElbow, ((rs.0 + rw.0) / 2.0, (rs.1 + rw.1) / 2.0)),
        (K::LeftWrist, lw),
        (K::RightWrist, rw),
        (K::LeftHip, (-0.08, 0.2)),
        (K::RightHip, (0.08, 0.2)),
        (K::LeftKnee, (-0.08, 0.32)),
        (K::RightKnee, (0.08, 0.32 - step / 2.0)),
        (K::LeftAnkle, (-0.08, 0.44)),
        (K::RightAnkle, (0.08, 0.44 - step)),
    ];

    let mut frame = PoseFrame::new(t_ms).expect("finite time");
    for (i, (name, (dx, dy))) in body.into_iter().enumerate() {
        let occluded = name == K::LeftWrist
            && params.dropout.is_some_and(|(a, b)| (a..b).contains(&t_ms));
        let c = if occluded {
            0.1
        } else {
            0.9 + 0.05 * (s + i as f64).sin()
        };
        frame = frame
            .with(
                name,
                round_to(cx + k * dx, 4),
                round_to(cy + k * dy, 4),
                round_to(c, 2),
            )
            .expect("synthetic pose stays in the unit square");
    }
    frame
}

/// Every frame of a synthetic session, timestamps rounded to microseconds.
pub fn synth_session(params: &SynthParams) -> Vec<PoseFrame> {
    let n = (params.duration_ms / 1000.0 * params.fps).round() as usize;
    (0..n)
        .map(|i| synth_frame(round_to(i as f64 * 1000.0 / params.fps, 3), params))
        .collect()
}
