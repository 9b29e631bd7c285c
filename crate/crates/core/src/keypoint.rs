//! The 17 body keypoints (COCO order) and the per-frame container.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::geom::Vec2;

/// One of the 17 named body landmarks, in canonical wire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeypointName {
    Nose,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

pub const KEYPOINT_COUNT: usize = 17;

/// Which half of the body a keypoint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Laterality {
    Left,
    Right,
    Midline,
}

impl KeypointName {
    pub const ALL: [KeypointName; KEYPOINT_COUNT] = [
        KeypointName::Nose,
        KeypointName::LeftEye,
        KeypointName::RightEye,
        KeypointName::LeftEar,
        KeypointName::RightEar,
        KeypointName::LeftShoulder,
        KeypointName::RightShoulder,
        KeypointName::LeftElbow,
        KeypointName::RightElbow,
        KeypointName::LeftWrist,
        KeypointName::RightWrist,
        KeypointName::LeftHip,
        KeypointName::RightHip,
        KeypointName::LeftKnee,
        KeypointName::RightKnee,
        KeypointName::LeftAnkle,
        KeypointName::RightAnkle,
    ];

    /// Position in the canonical order.
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            KeypointName::Nose => "nose",
            KeypointName::LeftEye => "left_eye",
            KeypointName::RightEye => "right_eye",
            KeypointName::LeftEar => "left_ear",
            KeypointName::RightEar => "right_ear",
            KeypointName::LeftShoulder => "left_shoulder",
            KeypointName::RightShoulder => "right_shoulder",
            KeypointName::LeftElbow => "left_elbow",
            KeypointName::RightElbow => "right_elbow",
            KeypointName::LeftWrist => "left_wrist",
            KeypointName::RightWrist => "right_wrist",
            KeypointName::LeftHip => "left_hip",
            KeypointName::RightHip => "right_hip",
            KeypointName::LeftKnee => "left_knee",
            KeypointName::RightKnee => "right_knee",
            KeypointName::LeftAnkle => "left_ankle",
            KeypointName::RightAnkle => "right_ankle",
        }
    }

    pub fn laterality(self) -> Laterality {
        match self {
            KeypointName::Nose => Laterality::Midline,
            KeypointName::LeftEye
            | KeypointName::LeftEar
            | KeypointName::LeftShoulder
            | KeypointName::LeftElbow
            | KeypointName::LeftWrist
            | KeypointName::LeftHip
            | KeypointName::LeftKnee
            | KeypointName::LeftAnkle => Laterality::Left,
            _ => Laterality::Right,
        }
    }

    /// The same landmark on the other side of the body.
    pub fn mirrored(self) -> KeypointName {
        use KeypointName::*;
        match self {
            Nose => Nose,
            LeftEye => RightEye,
            RightEye => LeftEye,
            LeftEar => RightEar,
            RightEar => LeftEar,
            LeftShoulder => RightShoulder,
            RightShoulder => LeftShoulder,
            LeftElbow => RightElbow,
            RightElbow => LeftElbow,
            LeftWrist => RightWrist,
            RightWrist => LeftWrist,
            LeftHip => RightHip,
            RightHip => LeftHip,
            LeftKnee => RightKnee,
            RightKnee => LeftKnee,
            LeftAnkle => RightAnkle,
            RightAnkle => LeftAnkle,
        }
    }

    /// Points below the hips are measured against the hip, the rest against the shoulder.
    pub fn is_lower_body(self) -> bool {
        matches!(
            self,
            KeypointName::LeftKnee
                | KeypointName::RightKnee
                | KeypointName::LeftAnkle
                | KeypointName::RightAnkle
        )
    }
}

impl fmt::Display for KeypointName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown keypoint name `{0}`")]
pub struct UnknownKeypoint(pub String);

impl FromStr for KeypointName {
    type Err = UnknownKeypoint;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KeypointName::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKeypoint(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrameError {
    #[error(transparent)]
    UnknownKeypoint(#[from] UnknownKeypoint),
    #[error("{name}: {field} = {value} is outside [0, 1]")]
    OutOfRange {
        name: KeypointName,
        field: &'static str,
        value: f64,
    },
    #[error("duplicate keypoint `{0}`")]
    Duplicate(KeypointName),
    #[error("timestamp must be a finite number, got {0}")]
    BadTimestamp(f64),
}

/// A detected keypoint in normalized image space (origin top-left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawKeypoint {
    pub name: KeypointName,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl RawKeypoint {
    /// Builds a keypoint, rejecting any coordinate or confidence outside `[0, 1]`.
    pub fn new(name: KeypointName, x: f64, y: f64, confidence: f64) -> Result<Self, FrameError> {
        for (field, value) in [("x", x), ("y", y), ("confidence", confidence)] {
            // NaN fails the range check as well.
            if !(0.0..=1.0).contains(&value) {
                return Err(FrameError::OutOfRange { name, field, value });
            }
        }
        Ok(Self {
            name,
            x,
            y,
            confidence,
        })
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// A timestamped set of keypoints, at most one per name.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    /// Milliseconds since the start of the session.
    pub t: f64,
    slots: [Option<RawKeypoint>; KEYPOINT_COUNT],
}

impl PoseFrame {
    pub fn new(t: f64) -> Result<Self, FrameError> {
        if !t.is_finite() {
            return Err(FrameError::BadTimestamp(t));
        }
        Ok(Self {
            t,
            slots: [None; KEYPOINT_COUNT],
        })
    }

    /// Adds a keypoint; a second keypoint with the same name is rejected.
    pub fn insert(&mut self, kp: RawKeypoint) -> Result<(), FrameError> {
        let slot = &mut self.slots[kp.name.index()];
        if slot.is_some() {
            return Err(FrameError::Duplicate(kp.name));
        }
        *slot = Some(kp);
        Ok(())
    }

    /// Builder-style insert for tests and synthetic streams.
    pub fn with(mut self, name: KeypointName, x: f64, y: f64, c: f64) -> Result<Self, FrameError> {
        self.insert(RawKeypoint::new(name, x, y, c)?)?;
        Ok(self)
    }

    pub fn get(&self, name: KeypointName) -> Option<&RawKeypoint> {
        self.slots[name.index()].as_ref()
    }

    pub fn remove(&mut self, name: KeypointName) -> Option<RawKeypoint> {
        self.slots[name.index()].take()
    }

    /// Present keypoints in canonical order.
    pub fn keypoints(&self) -> impl Iterator<Item = &RawKeypoint> {
        self.slots.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_and_are_distinct() {
        for (i, k) in KeypointName::ALL.iter().enumerate() {
            assert_eq!(k.index(), i);
            assert_eq!(k.as_str().parse::<KeypointName>().unwrap(), *k);
            assert_eq!(k.mirrored().mirrored(), *k);
        }
        let mut names: alloc::vec::Vec<_> = KeypointName::ALL.iter().map(|k| k.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 17);
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert_eq!(
            "rt_wrist".parse::<KeypointName>(),
            Err(UnknownKeypoint("rt_wrist".into()))
        );
        assert!("right_hand".parse::<KeypointName>().is_err());
    }

    #[test]
    fn range_checks() {
        assert!(RawKeypoint::new(KeypointName::Nose, 1.0, 0.0, 0.5).is_ok());
        assert!(matches!(
            RawKeypoint::new(KeypointName::Nose, 1.01, 0.0, 0.5),
            Err(FrameError::OutOfRange { field: "x", .. })
        ));
        assert!(RawKeypoint::new(KeypointName::Nose, 0.5, f64::NAN, 0.5).is_err());
        assert!(RawKeypoint::new(KeypointName::Nose, 0.5, 0.5, -0.1).is_err());
    }

    #[test]
    fn duplicates_rejected() {
        let f = PoseFrame::new(0.0)
            .unwrap()
            .with(KeypointName::Nose, 0.5, 0.5, 0.9)
            .unwrap();
        assert_eq!(
            f.with(KeypointName::Nose, 0.4, 0.5, 0.9),
            Err(FrameError::Duplicate(KeypointName::Nose))
        );
    }

    #[test]
    fn iteration_is_canonical() {
        let f = PoseFrame::new(1.0)
            .unwrap()
            .with(KeypointName::LeftShoulder, 0.4, 0.4, 1.0)
            .unwrap()
            .with(KeypointName::Nose, 0.5, 0.2, 1.0)
            .unwrap();
        let order: alloc::vec::Vec<_> = f.keypoints().map(|k| k.name).collect();
        assert_eq!(order, [KeypointName::Nose, KeypointName::LeftShoulder]);
    }
}
