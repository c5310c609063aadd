use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use svcforge::audio::write_wav;
use svcforge::{synth, SpeakerF0Stats};

fn svcforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svcforge"))
        .args(args)
        .env_remove("SVCFORGE_JOBS")
        .output()
        .expect("spawn svcforge")
}

fn summary(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_stats(path: &Path, id: &str, mean_hz: f64) {
    let s = SpeakerF0Stats {
        speaker_id: id.into(),
        mean_log_f0: mean_hz.ln(),
        std_log_f0: 0.1,
        n_voiced_frames: 500,
    };
    std::fs::write(path, serde_json::to_vec(&s).unwrap()).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(svcforge(&["--help"]).status.code(), Some(0));
    assert_eq!(svcforge(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(svcforge(&[]).status.code(), Some(1));
    assert_eq!(svcforge(&["extract", "--bogus"]).status.code(), Some(1));
    assert_eq!(svcforge(&["convert-pitch", "--policy", "sideways"]).status.code(), Some(1));
    // The material flag has no default.
    let out = svcforge(&["f0-stats", "--in", "x.wav", "--speaker", "s", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.wav");
    let out = svcforge(&["extract", "--in", p(&missing), "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let out = svcforge(&["manifest", "compose", "--spec", "v9_unknown"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    let cases: &[(&[&str], &[&str])] = &[
        (&["--help"], &["--jobs"]),
        (
            &["extract", "--help"],
            &["--in", "--out-dir", "--hop", "--win-length", "--fft-size", "--n-mels", "--fmin", "--fmax", "--f0-floor", "--f0-ceil", "--seed"],
        ),
        (&["f0-stats", "--help"], &["--in", "--speaker", "--material", "--out"]),
        (
            &["convert-pitch", "--help"],
            &["--in", "--source-stats", "--target-stats", "--policy", "--scale-sigma", "--quantize-cents", "--offset-semitones", "--out-dir"],
        ),
        (&["perturb", "--help"], &["--in", "--out-dir", "--seed"]),
        (&["segment", "--help"], &["--in", "--out-dir", "--mode", "--notes", "--write-clips"]),
        (&["manifest", "compose", "--help"], &["--spec", "--spec-file", "--manifest", "--out"]),
        (
            &["ddpm", "train", "--help"],
            &["--data", "--out-dir", "--seed", "--steps", "--diffusion-steps", "--hidden", "--lr", "--batch-size", "--p-uncond", "--beta-start", "--beta-end"],
        ),
        (
            &["ddpm", "finetune", "--help"],
            &["--model", "--data", "--out-dir", "--seed", "--speaker-seed", "--iterations"],
        ),
        (
            &["ddpm", "sample", "--help"],
            &["--model", "--cond", "--speaker-seed", "--guidance-scale", "--steps", "--count", "--seed", "--out"],
        ),
        (&["eval", "cossim", "--help"], &["--a", "--b"]),
        (&["eval", "f0", "--help"], &["--a", "--b"]),
    ];
    for (args, flags) in cases {
        let out = svcforge(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in *flags {
            assert!(text.contains(flag), "{args:?} help lacks {flag}");
        }
    }
}

#[test]
fn cross_domain_policy_shifts_up_six_semitones() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("src.wav");
    write_wav(&synth::sawtooth(196.0, 0.5, 24_000, 1.0), &wav).unwrap();
    let (sx, sy) = (dir.path().join("x.json"), dir.path().join("y.json"));
    write_stats(&sx, "singer", 196.0);
    write_stats(&sy, "talker", 196.0);
    let conv = dir.path().join("conv");
    let s = summary(&svcforge(&[
        "convert-pitch",
        "--in",
        p(&wav),
        "--source-stats",
        p(&sx),
        "--target-stats",
        p(&sy),
        "--policy",
        "cross-domain",
        "--out-dir",
        p(&conv),
    ]));
    let shift = s["files"][0]["median_shift_cents"].as_f64().unwrap();
    assert!((shift - 600.0).abs() < 1e-6, "{shift}");
    assert!(conv.join("src.f0.svcf").exists());

    let s = summary(&svcforge(&[
        "convert-pitch",
        "--in",
        p(&wav),
        "--source-stats",
        p(&sx),
        "--target-stats",
        p(&sy),
        "--out-dir",
        p(&conv),
    ]));
    let shift = s["files"][0]["median_shift_cents"].as_f64().unwrap();
    assert!(shift.abs() < 1e-6, "in-domain with matched stats shifted {shift}");
}

#[test]
fn manifest_compose_reports_final_hours() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("final.jsonl");
    let s = summary(&svcforge(&["manifest", "compose", "--spec", "final", "--out", p(&out)]));
    assert_eq!(s["hours"].as_f64().unwrap(), 750.14);
    let lines = std::fs::read_to_string(&out).unwrap().lines().count();
    assert_eq!(lines as u64, s["entries"].as_u64().unwrap());

    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"name":"ja","include":[{"language":"ja"}]}"#).unwrap();
    let s = summary(&svcforge(&["manifest", "compose", "--spec-file", p(&spec)]));
    assert!(s["hours"].as_f64().unwrap() > 0.0);
}

#[test]
fn failure_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.wav");
    write_wav(&synth::sine(220.0, 0.5, 24_000, 0.5), &good).unwrap();
    let bad = dir.path().join("bad.wav");
    std::fs::write(&bad, b"RIFF garbage").unwrap();
    let out_dir = dir.path().join("out");
    for cmd in [["extract", "--seed", "1"], ["perturb", "--seed", "1"]] {
        let out = svcforge(&[cmd[0], "--in", p(&good), p(&bad), "--out-dir", p(&out_dir), cmd[1], cmd[2]]);
        assert_eq!(out.status.code(), Some(2), "{}", cmd[0]);
        let leftovers = std::fs::read_dir(&out_dir).map(|d| d.count()).unwrap_or(0);
        assert_eq!(leftovers, 0, "{} left files behind", cmd[0]);
    }
}

#[test]
fn config_show_prints_defaults() {
    let s = summary(&svcforge(&["config", "show"]));
    assert!(s.is_object());
}
