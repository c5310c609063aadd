use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::json;
use svcforge::pitch::{cents_between, estimate_f0, F0Config};
use svcforge::pitchconv::{compute_f0_stats, convert_logf0};
use svcforge::{ConversionPolicy, F0Track, FrameConfig, SpeakerF0Stats, Tensor};

use crate::util::{json_bytes, load_audio, par_map, read_json, stem, CliResult, Outputs};

/// WAV files are tracked with default settings; `.svcf` files are read as
/// stored `[T, 2]` tracks.
fn load_track(path: &Path) -> CliResult<F0Track> {
    if path.extension().is_some_and(|e| e == "svcf") {
        Ok(F0Track::from_tensor(&Tensor::read(path)?)?)
    } else {
        let clip = load_audio(path)?;
        Ok(estimate_f0(&clip, &FrameConfig::default(), &F0Config::default())?)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Material {
    /// Statistics from the speaker's training recordings.
    Training,
    /// Statistics from evaluation recordings, for speakers without training audio.
    Evaluation,
}

#[derive(Debug, Args)]
pub struct F0StatsArgs {
    /// WAV files or `.f0.svcf` tracks of one speaker.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Speaker identifier stored in the output.
    #[arg(long)]
    speaker: String,
    /// Which material the inputs are. Must be stated explicitly.
    #[arg(long, value_enum)]
    material: Material,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

pub fn run_stats(a: F0StatsArgs) -> CliResult<serde_json::Value> {
    let tracks = par_map(&a.inputs, |_, p| load_track(p))?;
    let stats = compute_f0_stats(&tracks, &a.speaker)?;
    let mut out = Outputs::default();
    out.add(a.out.clone(), json_bytes(&stats)?);
    let written = out.commit()?;
    let material = match a.material {
        Material::Training => "training",
        Material::Evaluation => "evaluation",
    };
    Ok(json!({
        "command": "f0-stats",
        "material": material,
        "stats": stats,
        "mean_hz": stats.mean_hz(),
        "written": written,
    }))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyName {
    /// Mean shift rounded to whole semitones.
    InDomain,
    /// As in-domain, plus six semitones up for speech-only targets.
    CrossDomain,
    /// Exact mean shift, no rounding, no offset.
    None,
}

#[derive(Debug, Args)]
pub struct ConvertPitchArgs {
    /// WAV files or `.f0.svcf` tracks of the source speaker.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Source speaker statistics (JSON from `f0-stats`).
    #[arg(long)]
    source_stats: PathBuf,
    /// Target speaker statistics (JSON from `f0-stats`).
    #[arg(long)]
    target_stats: PathBuf,
    /// Base policy.
    #[arg(long, value_enum, default_value = "in-domain")]
    policy: PolicyName,
    /// Also match the log-F0 standard deviation (flag).
    #[arg(long)]
    scale_sigma: bool,
    /// Override shift rounding granularity (cents; 0 or 100).
    #[arg(long)]
    quantize_cents: Option<u32>,
    /// Override the upward offset added last (semitones, 0 to 12).
    #[arg(long)]
    offset_semitones: Option<f64>,
    /// Directory for `<stem>.f0.svcf` outputs.
    #[arg(long)]
    out_dir: PathBuf,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn run_convert(a: ConvertPitchArgs) -> CliResult<serde_json::Value> {
    let mut policy = match a.policy {
        PolicyName::InDomain => ConversionPolicy::in_domain(),
        PolicyName::CrossDomain => ConversionPolicy::cross_domain(),
        PolicyName::None => ConversionPolicy::IDENTITY,
    };
    policy.scale_sigma |= a.scale_sigma;
    if let Some(q) = a.quantize_cents {
        policy.quantize_cents = q;
    }
    if let Some(o) = a.offset_semitones {
        policy.cross_domain_offset_semitones = o;
    }
    policy.validate()?;
    let sx: SpeakerF0Stats = read_json(&a.source_stats)?;
    let sy: SpeakerF0Stats = read_json(&a.target_stats)?;
    sx.validate()?;
    sy.validate()?;

    let results = par_map(&a.inputs, |_, path| {
        let track = load_track(path)?;
        let out = convert_logf0(&track, &sx, &sy, &policy)?;
        let shifts: Vec<f64> = track
            .f0_hz()
            .iter()
            .zip(out.f0_hz())
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, b)| cents_between(*a, *b))
            .collect::<Result<_, _>>()?;
        let mut o = Outputs::default();
        o.add(a.out_dir.join(format!("{}.f0.svcf", stem_of_track(path))), out.to_tensor().encode());
        Ok((o, out, median(shifts)))
    })?;
    let mut outputs = Outputs::default();
    let mut files = Vec::new();
    let mut converted = Vec::new();
    for ((o, track, shift), path) in results.into_iter().zip(&a.inputs) {
        outputs.extend(o);
        files.push(json!({
            "input": path.display().to_string(),
            "voiced_frames": track.num_voiced(),
            "median_shift_cents": shift,
        }));
        converted.push(track);
    }
    let out_stats = compute_f0_stats(&converted, &sy.speaker_id).ok();
    let written = outputs.commit()?;
    Ok(json!({
        "command": "convert-pitch",
        "policy": {
            "scale_sigma": policy.scale_sigma,
            "quantize_cents": policy.quantize_cents,
            "offset_semitones": policy.cross_domain_offset_semitones,
        },
        "files": files,
        "output_stats": out_stats,
        "written": written,
    }))
}

/// `a.f0.svcf` and `a.wav` both map to `a`.
fn stem_of_track(path: &Path) -> String {
    let s = stem(path);
    s.strip_suffix(".f0").map(str::to_string).unwrap_or(s)
}
