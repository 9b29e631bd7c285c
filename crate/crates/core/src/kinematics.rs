//! Per-point smoothing and the kinematic feature set: position, velocity,
//! speed and pairwise relative velocity.
//!
//! Positions are smoothed with a time-corrected exponential filter,
//! `alpha = 1 - exp(-dt / tau)`, so irregular frame intervals weight each
//! observation consistently. Velocity is a one-sided (causal) second-order
//! difference of the smoothed positions, falling back to the first-order
//! backward difference when only one earlier sample exists.
//!
//! Missing or low-confidence observations hold the position and decay the
//! velocity by `exp(-dt / tau)`. A point that has not been seen for longer
//! than `t_hold` becomes invalid; the next accepted observation restarts it
//! with zero velocity.

use alloc::vec::Vec;

use crate::geom::Vec2;
use crate::keypoint::{KeypointName, PoseFrame, RawKeypoint, KEYPOINT_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("timestamp {t} ms does not advance past {last} ms")]
    NonIncreasing { t: f64, last: f64 },
    #[error("invalid smoother configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    /// Smoothing time constant in milliseconds. Zero disables smoothing (`alpha = 1`).
    pub tau_ms: f64,
    /// Observations below this confidence are treated as missing.
    pub c_min: f64,
    /// How long a point may go unseen before it is invalidated, in milliseconds.
    pub t_hold_ms: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            tau_ms: 80.0,
            c_min: 0.3,
            t_hold_ms: 300.0,
        }
    }
}

impl SmootherConfig {
    /// Raw positions, no smoothing.
    pub fn unsmoothed() -> Self {
        Self {
            tau_ms: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.tau_ms >= 0.0 && self.tau_ms.is_finite()) {
            return Err(KinematicsError::Config("tau must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.c_min) {
            return Err(KinematicsError::Config("c_min must lie in [0, 1]"));
        }
        if !(self.t_hold_ms >= 0.0) {
            return Err(KinematicsError::Config("t_hold must be non-negative"));
        }
        Ok(())
    }

    /// Weight of a new observation arriving `dt_ms` after the previous one.
    pub fn alpha(&self, dt_ms: f64) -> f64 {
        if self.tau_ms == 0.0 {
            1.0
        } else {
            1.0 - libm::exp(-dt_ms / self.tau_ms)
        }
    }

    fn decay(&self, dt_ms: f64) -> f64 {
        if self.tau_ms == 0.0 {
            0.0
        } else {
            libm::exp(-dt_ms / self.tau_ms)
        }
    }
}

/// Filter state of one keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointState {
    /// Smoothed position, normalized image units.
    pub p_hat: Vec2,
    /// Velocity, normalized image units per second.
    pub v: Vec2,
    /// Time of the last accepted observation, ms.
    pub last_seen_t: f64,
    pub valid: bool,
    last_update_t: Option<f64>,
    // smoothed sample preceding the one at last_seen_t
    prev_sample: Option<(f64, Vec2)>,
}

impl PointState {
    pub fn last_update_t(&self) -> Option<f64> {
        self.last_update_t
    }

    /// Advances the filter to time `t` with an optional observation.
    pub fn update(
        &self,
        obs: Option<&RawKeypoint>,
        t: f64,
        cfg: &SmootherConfig,
    ) -> Result<PointState, KinematicsError> {
        if let Some(last) = self.last_update_t {
            if !(t > last) {
                return Err(KinematicsError::NonIncreasing { t, last });
            }
        }
        let mut next = *self;
        next.last_update_t = Some(t);

        match obs.filter(|o| o.confidence >= cfg.c_min) {
            Some(o) if self.valid => {
                let p = o.position();
                let dt = t - self.last_seen_t;
                let p_hat = self.p_hat.lerp(p, cfg.alpha(dt));
                next.v = match self.prev_sample {
                    Some((t0, p0)) => {
                        second_order_velocity((t0, p0), (self.last_seen_t, self.p_hat), (t, p_hat))
                    }
                    None => (p_hat - self.p_hat).scale(1000.0 / dt),
                };
                next.prev_sample = Some((self.last_seen_t, self.p_hat));
                next.p_hat = p_hat;
                next.last_seen_t = t;
            }
            Some(o) => {
                next.p_hat = o.position();
                next.v = Vec2::ZERO;
                next.last_seen_t = t;
                next.valid = true;
                next.prev_sample = None;
            }
            None if self.valid => {
                let dt = t - self.last_update_t.unwrap_or(t);
                next.v = self.v.scale(cfg.decay(dt));
                if t - self.last_seen_t > cfg.t_hold_ms {
                    next.valid = false;
                    next.v = Vec2::ZERO;
                    next.prev_sample = None;
                }
            }
            None => {}
        }
        Ok(next)
    }
}

/// Derivative at the newest of three samples from the quadratic through
/// them. Times in ms, result in units per second.
fn second_order_velocity(s0: (f64, Vec2), s1: (f64, Vec2), s2: (f64, Vec2)) -> Vec2 {
    let h1 = s1.0 - s0.0;
    let h2 = s2.0 - s1.0;
    // weights sum to zero; expanding around the middle sample keeps
    // constant input at exactly zero velocity
    let c0 = h2 / (h1 * (h1 + h2));
    let c2 = (2.0 * h2 + h1) / (h2 * (h1 + h2));
    ((s0.1 - s1.1) * c0 + (s2.1 - s1.1) * c2).scale(1000.0)
}

/// Features of one tracked point at a frame time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointFeatures {
    pub position: Vec2,
    pub velocity: Vec2,
    /// `|velocity|`, units per second.
    pub speed: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeVelocity {
    pub a: KeypointName,
    pub b: KeypointName,
    /// `v_a - v_b`.
    pub r: Vec2,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicFeatures {
    pub t: f64,
    pub points: [PointFeatures; KEYPOINT_COUNT],
    pub relative: Vec<RelativeVelocity>,
}

impl KinematicFeatures {
    pub fn point(&self, name: KeypointName) -> &PointFeatures {
        &self.points[name.index()]
    }

    /// Relative velocity of `a` with respect to `b`, in either stored orientation.
    pub fn relative(&self, a: KeypointName, b: KeypointName) -> Option<RelativeVelocity> {
        self.relative.iter().find_map(|rv| {
            if rv.a == a && rv.b == b {
                Some(*rv)
            } else if rv.a == b && rv.b == a {
                Some(RelativeVelocity {
                    a,
                    b,
                    r: -rv.r,
                    valid: rv.valid,
                })
            } else {
                None
            }
        })
    }
}

/// Relative velocities `r(i, j) = v_i - v_j` are computed for these pairs by default.
pub const DEFAULT_PAIRS: [(KeypointName, KeypointName); 2] = [
    (KeypointName::RightWrist, KeypointName::LeftWrist),
    (KeypointName::RightAnkle, KeypointName::LeftAnkle),
];

/// Computes speed for every point and relative velocity for each pair.
pub fn features(
    t: f64,
    states: &[PointState; KEYPOINT_COUNT],
    pairs: &[(KeypointName, KeypointName)],
) -> KinematicFeatures {
    let mut points = [PointFeatures::default(); KEYPOINT_COUNT];
    for (pf, st) in points.iter_mut().zip(states) {
        *pf = PointFeatures {
            position: st.p_hat,
            velocity: st.v,
            speed: st.v.norm(),
            valid: st.valid,
        };
    }
    let relative = pairs
        .iter()
        .map(|&(a, b)| {
            let (sa, sb) = (&states[a.index()], &states[b.index()]);
            RelativeVelocity {
                a,
                b,
                r: sa.v - sb.v,
                valid: sa.valid && sb.valid,
            }
        })
        .collect();
    KinematicFeatures {
        t,
        points,
        relative,
    }
}

/// One smoothing state machine per performer stream.
#[derive(Debug, Clone)]
pub struct Kinematics {
    cfg: SmootherConfig,
    states: [PointState; KEYPOINT_COUNT],
    last_t: Option<f64>,
}

impl Kinematics {
    pub fn new(cfg: SmootherConfig) -> Result<Self, KinematicsError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            states: [PointState::default(); KEYPOINT_COUNT],
            last_t: None,
        })
    }

    pub fn config(&self) -> &SmootherConfig {
        &self.cfg
    }

    /// Changes the confidence gate from the next frame on.
    pub fn set_confidence_threshold(&mut self, c_min: f64) -> Result<(), KinematicsError> {
        let cfg = SmootherConfig { c_min, ..self.cfg };
        cfg.validate()?;
        self.cfg = cfg;
        Ok(())
    }

    pub fn states(&self) -> &[PointState; KEYPOINT_COUNT] {
        &self.states
    }

    pub fn last_t(&self) -> Option<f64> {
        self.last_t
    }

    /// Feeds one frame; every point advances, observed or not.
    pub fn update(&mut self, frame: &PoseFrame) -> Result<(), KinematicsError> {
        self.advance(frame.t, |name| frame.get(name))
    }

    /// Advances time with no observations, letting held points decay and expire.
    pub fn tick(&mut self, t: f64) -> Result<(), KinematicsError> {
        self.advance(t, |_| None)
    }

    fn advance<'a>(
        &mut self,
        t: f64,
        obs: impl Fn(KeypointName) -> Option<&'a RawKeypoint>,
    ) -> Result<(), KinematicsError> {
        if let Some(last) = self.last_t {
            if !(t > last) {
                return Err(KinematicsError::NonIncreasing { t, last });
            }
        }
        let mut next = self.states;
        for name in KeypointName::ALL {
            next[name.index()] = self.states[name.index()].update(obs(name), t, &self.cfg)?;
        }
        self.states = next;
        self.last_t = Some(t);
        Ok(())
    }

    pub fn features(&self, pairs: &[(KeypointName, KeypointName)]) -> KinematicFeatures {
        features(self.last_t.unwrap_or(0.0), &self.states, pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use KeypointName::*;

    fn kp(x: f64, y: f64, c: f64) -> RawKeypoint {
        RawKeypoint::new(RightWrist, x, y, c).unwrap()
    }

    #[test]
    fn constant_observation_is_a_fixed_point() {
        let cfg = SmootherConfig::default();
        let mut st = PointState::default();
        for i in 0..90 {
            let t = i as f64 * 1000.0 / 30.0;
            st = st.update(Some(&kp(0.5, 0.5, 0.9)), t, &cfg).unwrap();
            assert_eq!(st.p_hat, Vec2::new(0.5, 0.5));
            assert_eq!(st.v, Vec2::ZERO);
        }
    }

    #[test]
    fn converges_from_a_step() {
        let cfg = SmootherConfig::default();
        let mut st = PointState::default();
        st = st.update(Some(&kp(0.2, 0.2, 0.9)), 0.0, &cfg).unwrap();
        for i in 1..90 {
            let t = i as f64 * 1000.0 / 30.0;
            st = st.update(Some(&kp(0.5, 0.5, 0.9)), t, &cfg).unwrap();
        }
        assert!((st.p_hat.x - 0.5).abs() < 1e-9);
        assert!(st.v.norm() < 1e-6);
    }

    #[test]
    fn linear_ramp_velocity_is_its_slope() {
        let cfg = SmootherConfig::unsmoothed();
        let mut st = PointState::default();
        for i in 0..60 {
            let t = i as f64 * 1000.0 / 30.0;
            st = st.update(Some(&kp(0.1 * t / 1000.0, 0.5, 1.0)), t, &cfg).unwrap();
            if i == 0 {
                assert_eq!(st.v, Vec2::ZERO);
            } else {
                assert!((st.v.x - 0.1).abs() < 1e-12, "frame {i}: {}", st.v.x);
                assert!(st.v.y.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn second_order_difference_is_exact_on_quadratics_with_uneven_steps() {
        // x(t) = 3 t^2 + t (t in seconds); dx/dt at t = 2 t * 3 + 1.
        let x = |ms: f64| {
            let s = ms / 1000.0;
            3.0 * s * s + s
        };
        let (t0, t1, t2) = (100.0, 130.0, 180.0);
        let v = second_order_velocity(
            (t0, Vec2::new(x(t0), 0.0)),
            (t1, Vec2::new(x(t1), 0.0)),
            (t2, Vec2::new(x(t2), 0.0)),
        );
        assert!((v.x - (6.0 * 0.18 + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn low_confidence_holds_and_decays() {
        let cfg = SmootherConfig::unsmoothed();
        let smooth = SmootherConfig::default();
        let mut st = PointState::default();
        st = st.update(Some(&kp(0.1, 0.5, 1.0)), 0.0, &cfg).unwrap();
        st = st.update(Some(&kp(0.2, 0.5, 1.0)), 100.0, &cfg).unwrap();
        assert!((st.v.x - 1.0).abs() < 1e-12);
        let held = st.update(Some(&kp(0.9, 0.9, 0.1)), 180.0, &smooth).unwrap();
        assert_eq!(held.p_hat, st.p_hat);
        assert!(held.valid);
        assert!((held.v.x - libm::exp(-1.0)).abs() < 1e-12);
    }

    #[test]
    fn unseen_point_is_invalidated_after_hold() {
        let cfg = SmootherConfig::default();
        let mut st = PointState::default();
        st = st.update(Some(&kp(0.5, 0.5, 1.0)), 0.0, &cfg).unwrap();
        st = st.update(None, 300.0, &cfg).unwrap();
        assert!(st.valid, "exactly t_hold is still held");
        st = st.update(None, 350.0, &cfg).unwrap();
        assert!(!st.valid);
        assert_eq!(st.v, Vec2::ZERO);
        // reappearing restarts with zero velocity
        st = st.update(Some(&kp(0.8, 0.5, 1.0)), 400.0, &cfg).unwrap();
        assert!(st.valid);
        assert_eq!(st.v, Vec2::ZERO);
        assert_eq!(st.p_hat, Vec2::new(0.8, 0.5));
    }

    #[test]
    fn timestamps_must_increase() {
        let cfg = SmootherConfig::default();
        let st = PointState::default()
            .update(Some(&kp(0.5, 0.5, 1.0)), 10.0, &cfg)
            .unwrap();
        assert_eq!(
            st.update(None, 10.0, &cfg),
            Err(KinematicsError::NonIncreasing { t: 10.0, last: 10.0 })
        );
    }

    #[test]
    fn config_validation() {
        assert!(SmootherConfig::default().validate().is_ok());
        assert!(SmootherConfig { tau_ms: -1.0, ..Default::default() }.validate().is_err());
        assert!(SmootherConfig { c_min: 1.5, ..Default::default() }.validate().is_err());
        assert!(SmootherConfig { t_hold_ms: -1.0, ..Default::default() }.validate().is_err());
    }

    fn state_with_velocity(v: Vec2) -> PointState {
        PointState {
            v,
            valid: true,
            ..Default::default()
        }
    }

    #[test]
    fn speed_and_relative_velocity() {
        let mut states = [PointState::default(); KEYPOINT_COUNT];
        states[RightWrist.index()] = state_with_velocity(Vec2::new(0.3, 0.4));
        states[LeftWrist.index()] = state_with_velocity(Vec2::new(-0.1, 0.0));
        let f = features(0.0, &states, &[(RightWrist, LeftWrist)]);
        assert!((f.point(RightWrist).speed - 0.5).abs() < 1e-15);

        states[RightWrist.index()] = state_with_velocity(Vec2::new(0.2, 0.0));
        let f = features(0.0, &states, &[(RightWrist, LeftWrist)]);
        let rij = f.relative(RightWrist, LeftWrist).unwrap();
        let rji = f.relative(LeftWrist, RightWrist).unwrap();
        assert!((rij.r.x - 0.3).abs() < 1e-15 && rij.r.y == 0.0);
        assert_eq!(rji.r, -rij.r);
        assert!(rij.valid);
    }

    #[test]
    fn static_points_have_zero_features() {
        let mut states = [PointState::default(); KEYPOINT_COUNT];
        for s in states.iter_mut() {
            s.valid = true;
        }
        let f = features(0.0, &states, &DEFAULT_PAIRS);
        assert!(f.points.iter().all(|p| p.speed == 0.0));
        assert!(f.relative.iter().all(|r| r.r == Vec2::ZERO));
    }

    #[test]
    fn pairs_with_invalid_points_are_invalid() {
        let mut states = [PointState::default(); KEYPOINT_COUNT];
        states[RightWrist.index()].valid = true;
        let f = features(0.0, &states, &[(RightWrist, LeftWrist)]);
        assert!(!f.relative[0].valid);
    }
}
