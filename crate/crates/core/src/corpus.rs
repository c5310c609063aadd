//! Dataset manifests, training-set composition and clip segmentation.
//!
//! Manifests are JSON Lines, one [`ManifestEntry`] per line. A
//! [`TrainingSetSpec`] is a list of include rules; an entry belongs to the
//! set when any rule matches it, and a rule matches when every field it
//! names matches.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

const REFERENCE_MANIFEST: &str = include_str!("../data/reference_manifest.jsonl");

/// Names of the built-in training sets, smallest first.
pub const CANONICAL_SPECS: [&str; 4] = ["v1_sing_en", "v2_ssmix_en", "v3_sing_langmix", "final"];

/// Target speakers that every built-in training set contains.
pub const TARGET_SPEAKERS: [&str; 4] = ["IDF1", "IDM1", "CDF1", "CDM1"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Speech,
    Singing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub dataset: String,
    pub language: String,
    pub kind: Kind,
    pub speaker: String,
    /// Number of distinct speakers when the entry pools several.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_count: Option<u32>,
    pub duration_sec: f64,
    pub sample_rate: u32,
}

impl ManifestEntry {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_sec.is_finite() && self.duration_sec > 0.0) {
            return Err(Error::invalid(format!(
                "entry {}: duration must be positive",
                self.id
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid(format!("entry {}: sample rate is zero", self.id)));
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(line)
            .map_err(|err| Error::MalformedHeader(format!("manifest line {}: {err}", i + 1)))?;
        e.validate()?;
        out.push(e);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn manifest_to_jsonl(entries: &[ManifestEntry]) -> Result<String> {
    let mut s = String::new();
    for e in entries {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    write_atomic(path, manifest_to_jsonl(entries)?.as_bytes())
}

/// The shipped manifest listing every training corpus with its hours. One
/// entry per corpus row; the four target speakers have their own entries.
pub fn reference_manifest() -> Vec<ManifestEntry> {
    parse_manifest(REFERENCE_MANIFEST).expect("bundled manifest is valid")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncludeRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
}

impl IncludeRule {
    pub fn matches(&self, e: &ManifestEntry) -> bool {
        self.dataset.as_ref().is_none_or(|d| *d == e.dataset)
            && self.language.as_ref().is_none_or(|l| *l == e.language)
            && self.kind.is_none_or(|k| k == e.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSetSpec {
    pub name: String,
    pub include: Vec<IncludeRule>,
}

impl TrainingSetSpec {
    /// One of [`CANONICAL_SPECS`].
    pub fn canonical(name: &str) -> Result<Self> {
        let rule = |dataset: Option<&str>, language: Option<&str>, kind: Option<Kind>| IncludeRule {
            dataset: dataset.map(str::to_string),
            language: language.map(str::to_string),
            kind,
        };
        let targets = rule(Some("svcc2023"), None, None);
        let include = match name {
            "v1_sing_en" => vec![rule(None, Some("en"), Some(Kind::Singing)), targets],
            "v2_ssmix_en" => vec![rule(None, Some("en"), None), targets],
            "v3_sing_langmix" => vec![rule(None, None, Some(Kind::Singing)), targets],
            "final" => vec![IncludeRule::default()],
            other => return Err(Error::UnknownSpec(other.to_string())),
        };
        Ok(TrainingSetSpec {
            name: name.to_string(),
            include,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn matches(&self, e: &ManifestEntry) -> bool {
        self.include.iter().any(|r| r.matches(e))
    }
}

/// Entries selected by `spec`, in manifest order, and their total hours.
pub fn compose_training_set(
    manifest: &[ManifestEntry],
    spec: &TrainingSetSpec,
) -> Result<(Vec<ManifestEntry>, f64)> {
    for e in manifest {
        e.validate()?;
    }
    let picked: Vec<ManifestEntry> = manifest.iter().filter(|e| spec.matches(e)).cloned().collect();
    let hours = picked.iter().map(|e| e.duration_sec).sum::<f64>() / 3600.0;
    Ok((picked, hours))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub start_sec: f64,
    pub end_sec: f64,
}

impl SegmentSpec {
    pub fn duration(&self) -> f64 {
        self.end_sec - self.start_sec
    }

    /// The samples of `clip` inside this segment.
    pub fn extract(&self, clip: &AudioClip) -> AudioClip {
        let sr = clip.sample_rate() as f64;
        let a = ((self.start_sec * sr).round() as usize).min(clip.len());
        let b = ((self.end_sec * sr).round() as usize).clamp(a, clip.len());
        clip.slice(a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadConfig {
    pub frame_ms: f64,
    /// Frame RMS threshold in dB relative to full scale.
    pub energy_floor_dbfs: f64,
    pub min_speech_ms: f64,
    /// Inactive runs up to this long between active frames count as active.
    pub hangover_ms: f64,
    pub min_gap_ms: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        VadConfig {
            frame_ms: 30.0,
            energy_floor_dbfs: -45.0,
            min_speech_ms: 200.0,
            hangover_ms: 300.0,
            min_gap_ms: 300.0,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_ms > 0.0) {
            return Err(Error::invalid("VAD frame length must be positive"));
        }
        if [self.min_speech_ms, self.hangover_ms, self.min_gap_ms]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::invalid("VAD durations must be non-negative"));
        }
        Ok(())
    }
}

/// Energy-gated voice activity segmentation.
///
/// Non-overlapping frames whose RMS exceeds the floor are active. Short
/// inactive runs enclosed by active frames are filled (hangover), then runs
/// shorter than `min_speech_ms` are dropped and segments closer than
/// `min_gap_ms` are merged. Segment tails are not extended past the last
/// active frame.
pub fn vad_segment(clip: &AudioClip, cfg: &VadConfig) -> Result<Vec<SegmentSpec>> {
    cfg.validate()?;
    let sr = clip.sample_rate() as f64;
    let frame = ((cfg.frame_ms * 1e-3 * sr).round() as usize).max(1);
    let x = clip.samples();
    let floor = 10f64.powf(cfg.energy_floor_dbfs / 10.0);
    let mut active: Vec<bool> = x
        .chunks(frame)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64 > floor)
        .collect();

    let hang = (cfg.hangover_ms / cfg.frame_ms).floor() as usize;
    let mut last_active: Option<usize> = None;
    for i in 0..active.len() {
        if active[i] {
            if let Some(j) = last_active {
                if i - j - 1 <= hang {
                    active[j + 1..i].iter_mut().for_each(|a| *a = true);
                }
            }
            last_active = Some(i);
        }
    }

    let to_sec = |f: usize| (f * frame).min(x.len()) as f64 / sr;
    let mut segs: Vec<SegmentSpec> = Vec::new();
    let mut start = None;
    for (i, &a) in active.iter().chain(std::iter::once(&false)).enumerate() {
        match (a, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                segs.push(SegmentSpec {
                    start_sec: to_sec(s),
                    end_sec: to_sec(i),
                });
                start = None;
            }
            _ => {}
        }
    }
    segs.retain(|s| s.duration() * 1e3 >= cfg.min_speech_ms);

    let mut merged: Vec<SegmentSpec> = Vec::with_capacity(segs.len());
    for s in segs {
        match merged.last_mut() {
            Some(prev) if (s.start_sec - prev.end_sec) * 1e3 < cfg.min_gap_ms => prev.end_sec = s.end_sec,
            _ => merged.push(s),
        }
    }
    Ok(merged)
}

/// A scored note; `pitch == None` marks an explicit rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset_sec: f64,
    pub offset_sec: f64,
    #[serde(default)]
    pub pitch: Option<u8>,
}

pub const DEFAULT_MIN_REST_SEC: f64 = 0.5;

/// Splits a score at every silence of at least `min_rest_sec` between
/// sounding notes. Each segment runs from the first onset to the last
/// offset of its group, clipped to `[0, clip_duration]`.
pub fn rest_note_segment(
    notes: &[NoteEvent],
    min_rest_sec: f64,
    clip_duration: f64,
) -> Result<Vec<SegmentSpec>> {
    if !(min_rest_sec >= 0.0) || !(clip_duration > 0.0) {
        return Err(Error::invalid("need min_rest >= 0 and a positive clip duration"));
    }
    for (i, n) in notes.iter().enumerate() {
        if !(n.onset_sec.is_finite() && n.offset_sec.is_finite() && n.onset_sec < n.offset_sec) {
            return Err(Error::invalid(format!("note {i} must have onset < offset")));
        }
        if i > 0 && n.onset_sec < notes[i - 1].offset_sec {
            return Err(Error::OverlappingNotes(i));
        }
    }
    let mut segs: Vec<SegmentSpec> = Vec::new();
    let mut prev_offset = f64::NEG_INFINITY;
    for n in notes.iter().filter(|n| n.pitch.is_some()) {
        match segs.last_mut() {
            Some(last) if n.onset_sec - prev_offset < min_rest_sec => last.end_sec = n.offset_sec,
            _ => segs.push(SegmentSpec {
                start_sec: n.onset_sec,
                end_sec: n.offset_sec,
            }),
        }
        prev_offset = n.offset_sec;
    }
    Ok(segs
        .into_iter()
        .map(|s| SegmentSpec {
            start_sec: s.start_sec.clamp(0.0, clip_duration),
            end_sec: s.end_sec.clamp(0.0, clip_duration),
        })
        .filter(|s| s.end_sec > s.start_sec)
        .collect())
}
