use std::io::BufRead;
use std::time::{Duration, Instant};

use bodyctl::config::load_config;
use bodyctl::replay::{replay, replay_file, SinkSpec};
use bodyctl::sink::{read_capture, CaptureSink, UpdateSink};
use bodyctl::ReplayMode;
use bodyctl_core::ParamUpdate;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");

fn config() -> bodyctl::EngineConfig {
    load_config(format!("{DATA}/four_mappings.toml")).unwrap()
}

fn session() -> std::path::PathBuf {
    format!("{DATA}/synthetic_10s.jsonl").into()
}

#[test]
fn fast_replays_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("run{run}.bin"));
        let r = replay_file(&cfg, &session(), &SinkSpec::Capture(path.clone()), ReplayMode::Fast).unwrap();
        assert_eq!(r.frames, 300);
        outputs.push(std::fs::read(path).unwrap());
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
    let grams = read_capture(&outputs[0]).unwrap();
    assert!(grams.iter().all(|g| g.len() % 4 == 0));
}

#[test]
fn csv_sink_lists_every_update() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let r = replay_file(&config(), &session(), &SinkSpec::Csv(path.clone()), ReplayMode::Fast).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t_ms,address,value"));
    assert_eq!(lines.count(), r.updates);
}

/// Sink that notes when each delivery happened.
struct Timed(Vec<(Instant, Vec<u8>)>);

impl UpdateSink for Timed {
    fn deliver(&mut self, _: &ParamUpdate, datagram: &[u8]) -> std::io::Result<()> {
        self.0.push((Instant::now(), datagram.to_vec()));
        Ok(())
    }
}

fn first_second() -> String {
    let file = std::fs::File::open(session()).unwrap();
    std::io::BufReader::new(file)
        .lines()
        .take(31)
        .map(|l| l.unwrap() + "\n")
        .collect()
}

#[test]
fn realtime_paces_frames_and_matches_fast() {
    let cfg = config();
    let text = first_second();

    let mut timed = Timed(Vec::new());
    let start = Instant::now();
    let r = replay(&cfg, text.as_bytes(), &mut timed, ReplayMode::Realtime).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(r.frames, 31);
    // 30 intervals of 33.3 ms
    assert!(elapsed >= Duration::from_millis(995), "{elapsed:?}");
    assert!(elapsed < Duration::from_millis(1400), "{elapsed:?}");
    let per_frame = 4;
    let firsts: Vec<Instant> = timed.0.iter().step_by(per_frame).map(|(t, _)| *t).collect();
    let gaps: Vec<f64> = firsts.windows(2).map(|w| (w[1] - w[0]).as_secs_f64() * 1000.0).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!((mean - 33.33).abs() < 3.0, "mean spacing {mean} ms");

    let mut fast = CaptureSink::new(Vec::new());
    replay(&cfg, text.as_bytes(), &mut fast, ReplayMode::Fast).unwrap();
    let realtime_bytes: Vec<Vec<u8>> = timed.0.into_iter().map(|(_, g)| g).collect();
    assert_eq!(read_capture(&fast.into_inner()).unwrap(), realtime_bytes);
}

#[test]
fn empty_session_gives_empty_capture() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    std::fs::write(&input, "").unwrap();
    let out = dir.path().join("out.bin");
    let r = replay_file(&config(), &input, &SinkSpec::Capture(out.clone()), ReplayMode::Fast).unwrap();
    assert_eq!(r.updates, 0);
    assert_eq!(std::fs::read(out).unwrap(), Vec::<u8>::new());
}

#[test]
fn unparsable_session_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.jsonl");
    std::fs::write(&input, "{\"t\":0,\"kp\":{}}\n{\"t\":\n").unwrap();
    let err = replay_file(&config(), &input, &SinkSpec::Capture(dir.path().join("o.bin")), ReplayMode::Fast)
        .unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
}
