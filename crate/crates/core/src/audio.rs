//! Mono audio clips, RIFF/WAVE I/O and band-limited resampling.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fsutil;

/// Sample rate every feature module operates at.
pub const CANONICAL_RATE: u32 = 24_000;

/// A mono waveform. Samples are finite; nominal full scale is [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Arc<[f64]>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(AudioClip {
            samples: samples.into(),
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Fails with [`Error::RateMismatch`] unless the clip is at `rate`.
    pub fn require_rate(&self, rate: u32) -> Result<()> {
        if self.sample_rate != rate {
            return Err(Error::RateMismatch {
                expected: rate,
                actual: self.sample_rate,
            });
        }
        Ok(())
    }

    /// Returns the sub-clip `[start, end)` in samples, clamped to the clip.
    pub fn slice(&self, start: usize, end: usize) -> AudioClip {
        let end = end.min(self.len());
        let start = start.min(end);
        AudioClip {
            samples: self.samples[start..end].into(),
            sample_rate: self.sample_rate,
        }
    }
}

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 3;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy)]
struct WavFormat {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<WavFormat> {
    if body.len() < 16 {
        return Err(Error::MalformedHeader("fmt chunk shorter than 16 bytes".into()));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID,
        // whose first two bytes carry the real format tag.
        if body.len() < 26 {
            return Err(Error::MalformedHeader("truncated WAVE_FORMAT_EXTENSIBLE".into()));
        }
        tag = u16_at(body, 24);
    }
    if sample_rate == 0 {
        return Err(Error::MalformedHeader("sample rate is zero".into()));
    }
    Ok(WavFormat {
        tag,
        channels,
        sample_rate,
        bits,
    })
}

/// Decodes a RIFF/WAVE byte buffer. See [`read_wav`].
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedHeader("missing RIFF/WAVE signature".into()));
    }
    let mut fmt = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size);
        match id {
            b"fmt " => {
                if body_end > bytes.len() {
                    return Err(Error::MalformedHeader("truncated fmt chunk".into()));
                }
                fmt = Some(parse_fmt(&bytes[body_start..body_end])?);
            }
            b"data" => {
                // Writers that crash mid-stream leave an oversized length;
                // keep whatever is present.
                data = Some(&bytes[body_start..body_end.min(bytes.len())]);
                break;
            }
            _ => {}
        }
        pos = body_end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::MalformedHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedHeader("no data chunk".into()))?;

    if fmt.channels != 1 && fmt.channels != 2 {
        return Err(Error::UnsupportedEncoding(format!(
            "{} channels",
            fmt.channels
        )));
    }
    let decode: fn(&[u8]) -> f64 = match (fmt.tag, fmt.bits) {
        (WAVE_FORMAT_PCM, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (WAVE_FORMAT_PCM, 24) => |b| {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            v as f64 / 8_388_608.0
        },
        (WAVE_FORMAT_IEEE_FLOAT, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        (tag, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "format tag {tag} with {bits} bits per sample"
            )))
        }
    };
    let width = fmt.bits as usize / 8;
    let frame = width * fmt.channels as usize;
    let samples = data
        .chunks_exact(frame)
        .map(|f| {
            let sum: f64 = f.chunks_exact(width).map(decode).sum();
            sum / fmt.channels as f64
        })
        .collect();
    AudioClip::new(samples, fmt.sample_rate)
}

/// Reads a 16/24-bit PCM or 32-bit float WAV file, mixing stereo to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    decode_wav(&bytes)
}

/// Encodes a clip as 16-bit PCM mono. Out-of-range samples are clamped.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in clip.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Writes a clip as 16-bit PCM mono, atomically.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    fsutil::write_atomic(path.as_ref(), &encode_wav(clip))
}

const HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.6;
const MAX_CACHED_PHASES: u64 = 4096;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Polyphase windowed-sinc resampler for a rational rate change `up/down`.
struct Resampler {
    up: u64,
    down: u64,
    cutoff: f64,
    norm_i0: f64,
    phases: Option<Vec<[f64; 64]>>,
}

impl Resampler {
    fn new(up: u64, down: u64) -> Self {
        let g = gcd(up, down);
        let (up, down) = (up / g, down / g);
        let cutoff = (up as f64 / down as f64).min(1.0);
        let mut r = Resampler {
            up,
            down,
            cutoff,
            norm_i0: bessel_i0(KAISER_BETA),
            phases: None,
        };
        if up <= MAX_CACHED_PHASES {
            r.phases = Some((0..up).map(|p| r.taps(p)).collect());
        }
        r
    }

    /// Taps for input offsets `-31..=32` around the base index at phase `p`,
    /// normalised to unit DC gain.
    fn taps(&self, phase: u64) -> [f64; 64] {
        let frac = phase as f64 / self.up as f64;
        let mut taps = [0.0; 64];
        for (j, tap) in taps.iter_mut().enumerate() {
            let d = (j as i64 - (HALF_TAPS - 1)) as f64 - frac;
            let r = d / HALF_TAPS as f64;
            if r.abs() >= 1.0 {
                continue;
            }
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.norm_i0;
            let x = std::f64::consts::PI * self.cutoff * d;
            let sinc = if x.abs() < 1e-12 { 1.0 } else { x.sin() / x };
            *tap = self.cutoff * sinc * w;
        }
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        taps
    }

    fn process(&self, input: &[f64]) -> Vec<f64> {
        let n_out = (input.len() as u64 * self.up).div_ceil(self.down) as usize;
        let mut out = Vec::with_capacity(n_out);
        let mut scratch;
        for n in 0..n_out as u64 {
            let pos = n * self.down;
            let base = (pos / self.up) as i64;
            let phase = pos % self.up;
            let taps = match &self.phases {
                Some(p) => &p[phase as usize],
                None => {
                    scratch = self.taps(phase);
                    &scratch
                }
            };
            let mut acc = 0.0;
            for (j, &t) in taps.iter().enumerate() {
                let idx = base + j as i64 - (HALF_TAPS - 1);
                if idx >= 0 && (idx as usize) < input.len() {
                    acc += t * input[idx as usize];
                }
            }
            out.push(acc);
        }
        out
    }
}

/// Resamples `samples` by the rational factor `up/down` (output length
/// `ceil(len * up / down)`). Returns the input unchanged when the factor is 1.
pub(crate) fn resample_rational(samples: &[f64], up: u64, down: u64) -> Vec<f64> {
    if up == down {
        return samples.to_vec();
    }
    Resampler::new(up, down).process(samples)
}

/// Converts a clip to `target_rate` with a Kaiser-windowed sinc interpolator
/// (beta 8.6, 64 taps per phase).
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::invalid("target rate must be positive"));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let out = resample_rational(clip.samples(), target_rate as u64, clip.sample_rate as u64);
    AudioClip::new(out, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, secs: f64, amp: f64) -> AudioClip {
        let n = (rate as f64 * secs) as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(s, rate).unwrap()
    }

    fn pcm16_file(channels: u16, frames: &[i16]) -> Vec<u8> {
        let data_len = frames.len() * 2;
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&24000u32.to_le_bytes());
        b.extend_from_slice(&(24000 * 2 * channels as u32).to_le_bytes());
        b.extend_from_slice(&(2 * channels).to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in frames {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    #[test]
    fn pcm16_scaling() {
        let clip = decode_wav(&pcm16_file(1, &[0, 16384, -32768])).unwrap();
        assert_eq!(clip.samples(), &[0.0, 0.5, -1.0]);
    }

    #[test]
    fn stereo_is_averaged() {
        let clip = decode_wav(&pcm16_file(2, &[32767, 0])).unwrap();
        assert_eq!(clip.len(), 1);
        assert!((clip.samples()[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn truncated_header_is_malformed() {
        let f = pcm16_file(1, &[1, 2, 3]);
        assert!(matches!(decode_wav(&f[..20]), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_wav(b"RIFF"), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn unsupported_encodings() {
        let mut f = pcm16_file(1, &[0]);
        f[34] = 8; // bits per sample
        assert!(matches!(decode_wav(&f), Err(Error::UnsupportedEncoding(_))));
        let mut f = pcm16_file(1, &[0]);
        f[22] = 6; // channels
        assert!(matches!(decode_wav(&f), Err(Error::UnsupportedEncoding(_))));
    }

    #[test]
    fn decodes_24bit_and_float() {
        let mut f = pcm16_file(1, &[]);
        f[34] = 24;
        f[32] = 3;
        f.truncate(40);
        f.extend_from_slice(&6u32.to_le_bytes());
        f.extend_from_slice(&[0x00, 0x00, 0x40, 0x00, 0x00, 0x80]);
        let clip = decode_wav(&f).unwrap();
        assert_eq!(clip.samples(), &[0.5, -1.0]);

        let mut f = pcm16_file(1, &[]);
        f[20] = 3;
        f[34] = 32;
        f[32] = 4;
        f.truncate(40);
        f.extend_from_slice(&4u32.to_le_bytes());
        f.extend_from_slice(&(-0.25f32).to_le_bytes());
        assert_eq!(decode_wav(&f).unwrap().samples(), &[-0.25]);
    }

    #[test]
    fn missing_file() {
        let err = read_wav("/nonexistent/definitely/not/here.wav").unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }

    #[test]
    fn write_clamps_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = sine(440.0, 24000, 1.0, 0.9);
        write_wav(&clip, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 24000);
        let err = clip
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 2f64.powi(-15));

        let loud = AudioClip::new(vec![1.0, -1.5], 24000).unwrap();
        let bytes = encode_wav(&loud);
        assert_eq!(i16::from_le_bytes([bytes[44], bytes[45]]), 32767);
        assert_eq!(i16::from_le_bytes([bytes[46], bytes[47]]), -32768);
    }

    #[test]
    fn empty_clip_writes_valid_file() {
        let clip = AudioClip::new(vec![], 24000).unwrap();
        let bytes = encode_wav(&clip);
        assert_eq!(bytes.len(), 44);
        assert_eq!(u32_at(&bytes, 40), 0);
        assert!(decode_wav(&bytes).unwrap().is_empty());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(AudioClip::new(vec![f64::NAN], 24000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn resample_identity_and_length() {
        let clip = sine(300.0, 24000, 0.1, 0.5);
        assert_eq!(resample(&clip, 24000).unwrap(), clip);
        let one_sec = sine(1000.0, 48000, 1.0, 0.5);
        let out = resample(&one_sec, 24000).unwrap();
        assert!((out.len() as i64 - 24000).abs() <= 1);
        assert_eq!(out.sample_rate(), 24000);
    }

    #[test]
    fn resample_preserves_tone() {
        // Direct DFT of the resampled tone, probed around 1 kHz.
        let clip = sine(1000.0, 48000, 1.0, 0.5);
        let out = resample(&clip, 24000).unwrap();
        let s = &out.samples()[1000..23000];
        let n = s.len() as f64;
        let amp_at = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in s.iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * f * i as f64 / 24000.0;
                re += x * ph.cos();
                im -= x * ph.sin();
            }
            2.0 * (re * re + im * im).sqrt() / n
        };
        let peak = amp_at(1000.0);
        assert!((peak - 0.5).abs() / 0.5 < 0.01, "amplitude {peak}");
        let bin = 24000.0 / n;
        assert!(amp_at(1000.0 + bin) < peak && amp_at(1000.0 - bin) < peak);
    }
}
