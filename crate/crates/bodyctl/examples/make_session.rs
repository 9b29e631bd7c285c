//! Regenerates the bundled synthetic session:
//!
//!     cargo run -p bodyctl --example make_session -- crates/bodyctl/tests/data/synthetic_10s.jsonl

use std::fs::File;
use std::io::BufWriter;

use bodyctl::record_session;
use bodyctl::synth::{synth_session, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic_10s.jsonl".into());
    let frames = synth_session(&SynthParams::default());
    let report = record_session(frames, BufWriter::new(File::create(&path)?))?;
    eprintln!("wrote {} frames to {path}", report.written);
    Ok(())
}
