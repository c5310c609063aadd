use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use svcforge::features::{build_mel_filterbank, log_mel, loudness, stft};
use svcforge::pitch::{estimate_f0, F0Config};
use svcforge::{FrameConfig, Tensor};

use crate::util::{load_audio, par_map, stem, CliResult, Outputs};

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Input WAV files (any rate; resampled to 24000 Hz).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Directory for `<stem>.mel.svcf`, `<stem>.loudness.svcf`, `<stem>.f0.svcf`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Hop between frames (samples at 24000 Hz).
    #[arg(long, default_value_t = 240)]
    hop: usize,
    /// Analysis window length (samples).
    #[arg(long, default_value_t = 960)]
    win_length: usize,
    /// FFT size (samples).
    #[arg(long, default_value_t = 1024)]
    fft_size: usize,
    /// Number of mel bands (count).
    #[arg(long, default_value_t = 80)]
    n_mels: usize,
    /// Lowest mel band edge (Hz).
    #[arg(long, default_value_t = 0.0)]
    fmin: f64,
    /// Highest mel band edge (Hz).
    #[arg(long, default_value_t = 12000.0)]
    fmax: f64,
    /// Lowest F0 the tracker reports (Hz).
    #[arg(long, default_value_t = 50.0)]
    f0_floor: f64,
    /// Highest F0 the tracker reports (Hz).
    #[arg(long, default_value_t = 1100.0)]
    f0_ceil: f64,
    /// Seed (integer). Extraction is deterministic; accepted for pipeline uniformity.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(a: ExtractArgs) -> CliResult<serde_json::Value> {
    let frame = FrameConfig {
        hop: a.hop,
        win_length: a.win_length,
        fft_size: a.fft_size,
        ..FrameConfig::default()
    };
    frame.validate()?;
    let fb = build_mel_filterbank(&frame, a.n_mels, a.fmin, a.fmax)?;
    let f0cfg = F0Config {
        f_floor: a.f0_floor,
        f_ceil: a.f0_ceil,
        ..F0Config::default()
    };
    let results = par_map(&a.inputs, |_, path| {
        let clip = load_audio(path)?;
        let spec = stft(&clip, &frame)?;
        let mel = log_mel(&spec, &fb)?;
        let loud = loudness(&spec, &frame)?;
        let f0 = estimate_f0(&clip, &frame, &f0cfg)?;
        let s = stem(path);
        let mut out = Outputs::default();
        out.add(a.out_dir.join(format!("{s}.mel.svcf")), Tensor::from_array2(&mel.frames).encode());
        out.add(
            a.out_dir.join(format!("{s}.loudness.svcf")),
            Tensor::from_f64(vec![loud.values.len()], &loud.values)?.encode(),
        );
        out.add(a.out_dir.join(format!("{s}.f0.svcf")), f0.to_tensor().encode());
        let info = json!({
            "input": path.display().to_string(),
            "frames": mel.frames.nrows(),
            "voiced_frames": f0.num_voiced(),
            "median_f0_hz": f0.median_voiced_hz(),
        });
        Ok((out, info))
    })?;
    let mut outputs = Outputs::default();
    let mut files = Vec::new();
    for (o, info) in results {
        outputs.extend(o);
        files.push(info);
    }
    let written = outputs.commit()?;
    Ok(json!({ "command": "extract", "files": files, "written": written }))
}
