use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::json;
use svcforge::audio::encode_wav;
use svcforge::corpus::{rest_note_segment, vad_segment, NoteEvent, VadConfig, DEFAULT_MIN_REST_SEC};

use crate::util::{json_bytes, load_audio, par_map, read_json, stem, usage, CliResult, Outputs};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    /// Energy-based voice activity detection.
    Vad,
    /// Split at rests of a note list (requires --notes, single input).
    Notes,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Input WAV files (resampled to 24000 Hz).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "vad")]
    mode: Mode,
    /// JSON array of note events `{onset_sec, offset_sec, pitch}`; `pitch: null` is a rest.
    #[arg(long)]
    notes: Option<PathBuf>,
    /// Shortest rest that splits (seconds).
    #[arg(long, default_value_t = DEFAULT_MIN_REST_SEC)]
    min_rest: f64,
    /// VAD frame length (milliseconds).
    #[arg(long, default_value_t = 30.0)]
    frame_ms: f64,
    /// VAD frame energy threshold (dBFS).
    #[arg(long, default_value_t = -45.0, allow_hyphen_values = true)]
    energy_floor_dbfs: f64,
    /// Shortest kept segment (milliseconds).
    #[arg(long, default_value_t = 200.0)]
    min_speech_ms: f64,
    /// Longest pause bridged inside an active run (milliseconds).
    #[arg(long, default_value_t = 300.0)]
    hangover_ms: f64,
    /// Segments closer than this are merged (milliseconds).
    #[arg(long, default_value_t = 300.0)]
    min_gap_ms: f64,
    /// Directory for `<stem>.segments.json` and optional clips.
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write each segment as `<stem>_<index>.wav` (flag).
    #[arg(long)]
    write_clips: bool,
}

pub fn run(a: SegmentArgs) -> CliResult<serde_json::Value> {
    let vad = VadConfig {
        frame_ms: a.frame_ms,
        energy_floor_dbfs: a.energy_floor_dbfs,
        min_speech_ms: a.min_speech_ms,
        hangover_ms: a.hangover_ms,
        min_gap_ms: a.min_gap_ms,
    };
    vad.validate()?;
    let notes: Option<Vec<NoteEvent>> = match (a.mode, &a.notes) {
        (Mode::Notes, Some(p)) => {
            if a.inputs.len() != 1 {
                return Err(usage("--mode notes takes exactly one --in file"));
            }
            Some(read_json(p)?)
        }
        (Mode::Notes, None) => return Err(usage("--mode notes requires --notes")),
        (Mode::Vad, Some(_)) => return Err(usage("--notes is only valid with --mode notes")),
        (Mode::Vad, None) => None,
    };
    let results = par_map(&a.inputs, |_, path| {
        let clip = load_audio(path)?;
        let segs = match &notes {
            Some(n) => rest_note_segment(n, a.min_rest, clip.duration_sec())?,
            None => vad_segment(&clip, &vad)?,
        };
        let s = stem(path);
        let mut o = Outputs::default();
        o.add(a.out_dir.join(format!("{s}.segments.json")), json_bytes(&segs)?);
        if a.write_clips {
            for (i, seg) in segs.iter().enumerate() {
                o.add(a.out_dir.join(format!("{s}_{i:04}.wav")), encode_wav(&seg.extract(&clip)));
            }
        }
        Ok((o, json!({ "input": path.display().to_string(), "segments": segs })))
    })?;
    let mut outputs = Outputs::default();
    let mut files = Vec::new();
    for (o, info) in results {
        outputs.extend(o);
        files.push(info);
    }
    let written = outputs.commit()?;
    Ok(json!({ "command": "segment", "files": files, "written": written }))
}
