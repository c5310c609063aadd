use clap::Subcommand;
use serde_json::json;
use svcforge::contrastive::{DEFAULT_RAMP_CAP, DEFAULT_RAMP_RATE, DEFAULT_TAU};
use svcforge::corpus::{VadConfig, DEFAULT_MIN_REST_SEC};
use svcforge::diffusion::{FinetuneConfig, TrainConfig, LN_EPS};
use svcforge::features::{A_WEIGHT_FLOOR_DB, MEL_POWER_FLOOR};
use svcforge::perturb::PerturbConfig;
use svcforge::pitch::F0Config;
use svcforge::{ConversionPolicy, FrameConfig, CANONICAL_RATE};

use crate::util::CliResult;

/// Bumped whenever any default below changes.
pub const DEFAULTS_VERSION: u32 = 1;

#[derive(Debug, Subcommand)]
pub enum ConfigCommand {
    /// Print every numeric default.
    Show,
}

pub fn defaults() -> serde_json::Value {
    let frame = FrameConfig::default();
    let f0 = F0Config::default();
    let p = PerturbConfig::default();
    let vad = VadConfig::default();
    let tc = TrainConfig::default();
    let fc = FinetuneConfig::default();
    let cross = ConversionPolicy::cross_domain();
    json!({
        "version": DEFAULTS_VERSION,
        "audio": { "sample_rate_hz": CANONICAL_RATE, "wav_bits": 16 },
        "features": {
            "hop": frame.hop, "win_length": frame.win_length, "fft_size": frame.fft_size,
            "n_mels": 80, "fmin_hz": 0.0, "fmax_hz": 12000.0,
            "mel_power_floor": MEL_POWER_FLOOR, "a_weight_floor_db": A_WEIGHT_FLOOR_DB,
        },
        "pitch": {
            "f_floor_hz": f0.f_floor, "f_ceil_hz": f0.f_ceil,
            "voicing_threshold": f0.voicing_threshold, "energy_gate_dbfs": f0.energy_gate_dbfs,
        },
        "perturb": {
            "formant_ratio_range": p.formant_ratio_range,
            "pitch_semitone_range": p.pitch_semitone_range,
            "eq_bands": p.eq_bands,
            "eq_gain_range_db": p.eq_gain_range_db,
            "eq_q_range": p.eq_q_range,
        },
        "pitchconv": {
            "quantize_cents": cross.quantize_cents,
            "cross_domain_offset_semitones": cross.cross_domain_offset_semitones,
        },
        "contrastive": { "tau": DEFAULT_TAU, "ramp_rate": DEFAULT_RAMP_RATE, "ramp_cap": DEFAULT_RAMP_CAP },
        "diffusion": {
            "steps": 100, "beta_start": 1e-4, "beta_end": 0.02, "guidance_scale": 1.0,
            "layer_norm_eps": LN_EPS,
            "train": tc, "finetune": fc,
        },
        "corpus": { "vad": vad, "min_rest_sec": DEFAULT_MIN_REST_SEC },
    })
}

pub fn run(c: ConfigCommand) -> CliResult<serde_json::Value> {
    match c {
        ConfigCommand::Show => Ok(defaults()),
    }
}
