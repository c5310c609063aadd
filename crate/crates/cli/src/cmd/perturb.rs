use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use svcforge::audio::encode_wav;
use svcforge::perturb::{random_perturb_pair_with_draws, PerturbConfig};

use crate::util::{derive_seed, load_audio, par_map, stem, CliResult, Outputs};

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Input WAV files (resampled to 24000 Hz).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Directory for `<stem>.a.wav` and `<stem>.b.wav`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed (integer). Each input gets its own seed derived from this and its position.
    #[arg(long)]
    seed: u64,
    /// Smallest formant ratio (ratio, >= 0.5).
    #[arg(long, default_value_t = 1.0 / 1.4)]
    formant_min: f64,
    /// Largest formant ratio (ratio, <= 2).
    #[arg(long, default_value_t = 1.4)]
    formant_max: f64,
    /// Lowest pitch change (semitones, >= -12).
    #[arg(long, default_value_t = -12.0, allow_hyphen_values = true)]
    pitch_min: f64,
    /// Highest pitch change (semitones, <= 12).
    #[arg(long, default_value_t = 12.0, allow_hyphen_values = true)]
    pitch_max: f64,
    /// Number of peaking EQ bands (count).
    #[arg(long, default_value_t = 8)]
    eq_bands: usize,
    /// Lowest band gain (dB).
    #[arg(long, default_value_t = -12.0, allow_hyphen_values = true)]
    eq_gain_min: f64,
    /// Highest band gain (dB).
    #[arg(long, default_value_t = 12.0, allow_hyphen_values = true)]
    eq_gain_max: f64,
    /// Lowest band Q (dimensionless).
    #[arg(long, default_value_t = 0.5)]
    eq_q_min: f64,
    /// Highest band Q (dimensionless).
    #[arg(long, default_value_t = 5.0)]
    eq_q_max: f64,
}

pub fn run(a: PerturbArgs) -> CliResult<serde_json::Value> {
    let base = PerturbConfig {
        formant_ratio_range: [a.formant_min, a.formant_max],
        pitch_semitone_range: [a.pitch_min, a.pitch_max],
        eq_bands: a.eq_bands,
        eq_gain_range_db: [a.eq_gain_min, a.eq_gain_max],
        eq_q_range: [a.eq_q_min, a.eq_q_max],
        seed: a.seed,
    };
    base.validate()?;
    let results = par_map(&a.inputs, |i, path| {
        let clip = load_audio(path)?;
        let cfg = PerturbConfig {
            seed: derive_seed(a.seed, i as u64),
            ..base.clone()
        };
        let (draws, x, y) = random_perturb_pair_with_draws(&clip, &cfg)?;
        let s = stem(path);
        let mut o = Outputs::default();
        o.add(a.out_dir.join(format!("{s}.a.wav")), encode_wav(&x));
        o.add(a.out_dir.join(format!("{s}.b.wav")), encode_wav(&y));
        Ok((o, json!({ "input": path.display().to_string(), "seed": cfg.seed, "draws": draws })))
    })?;
    let mut outputs = Outputs::default();
    let mut files = Vec::new();
    for (o, info) in results {
        outputs.extend(o);
        files.push(info);
    }
    let written = outputs.commit()?;
    Ok(json!({ "command": "perturb", "files": files, "written": written }))
}
