//! Line-delimited keypoint records.
//!
//! ```text
//! {"t":100,"kp":{"right_wrist":[0.61,0.42,0.93]}}
//! ```
//!
//! `t` is milliseconds; each keypoint is `[x, y, confidence]` in normalized
//! image space (origin top-left). Serialization is canonical: keypoints in
//! the fixed 17-name order, numbers in shortest round-trip form.

use std::fmt::{self, Write as _};

use bodyctl_core::keypoint::{FrameError, KeypointName, PoseFrame, RawKeypoint};
use serde::de::{self, MapAccess, Visitor};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("malformed record: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    t: f64,
    kp: Entries,
}

/// Keypoint entries in document order; duplicates are kept so they can be rejected.
struct Entries(Vec<(String, [f64; 3])>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: de::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object of keypoint name to [x, y, confidence]")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut out = Vec::with_capacity(map.size_hint().unwrap_or(4));
                while let Some(entry) = map.next_entry::<String, [f64; 3]>()? {
                    out.push(entry);
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V)
    }
}

/// Parses one wire record.
pub fn parse_frame(text: &str) -> Result<PoseFrame, WireError> {
    let rec: Record = serde_json::from_str(text)?;
    let mut frame = PoseFrame::new(rec.t)?;
    for (name, [x, y, c]) in rec.kp.0 {
        let name: KeypointName = name.parse().map_err(FrameError::from)?;
        frame.insert(RawKeypoint::new(name, x, y, c)?)?;
    }
    Ok(frame)
}

/// Shortest decimal that parses back to the same `f64`; integral values
/// are written without a fractional part.
pub fn write_number(out: &mut String, x: f64) {
    let mut buf = ryu::Buffer::new();
    let s = buf.format(x);
    out.push_str(s.strip_suffix(".0").unwrap_or(s));
}

/// Canonical wire record for `frame`.
pub fn serialize_frame(frame: &PoseFrame) -> String {
    let mut out = String::with_capacity(24 + 40 * frame.len());
    out.push_str("{\"t\":");
    write_number(&mut out, frame.t);
    out.push_str(",\"kp\":{");
    for (i, kp) in frame.keypoints().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "\"{}\":[", kp.name.as_str());
        write_number(&mut out, kp.x);
        out.push(',');
        write_number(&mut out, kp.y);
        out.push(',');
        write_number(&mut out, kp.confidence);
        out.push(']');
    }
    out.push_str("}}");
    out
}
