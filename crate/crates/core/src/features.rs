//! Frame-synchronous spectral features: STFT, log-mel spectrogram and
//! A-weighted loudness.
//!
//! Framing is non-centred: frame `t` covers samples `[t*hop, t*hop + win)`,
//! so a clip of `n >= win` samples yields `1 + (n - win) / hop` frames. The
//! F0 tracker in [`crate::pitch`] uses the same grid.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, CANONICAL_RATE};
use crate::error::{Error, Result};

/// Floor applied to mel power before taking the log.
pub const MEL_POWER_FLOOR: f64 = 1e-10;
/// Value returned by [`a_weight_db`] at 0 Hz.
pub const A_WEIGHT_FLOOR_DB: f64 = -200.0;

pub type Spectrogram = Array2<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub sample_rate: u32,
    pub hop: usize,
    pub win_length: usize,
    pub fft_size: usize,
}

impl Default for FrameConfig {
    /// 24 kHz, 10 ms hop, 40 ms Hann window, 1024-point FFT.
    fn default() -> Self {
        FrameConfig {
            sample_rate: CANONICAL_RATE,
            hop: 240,
            win_length: 960,
            fft_size: 1024,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.hop == 0 {
            return Err(Error::invalid("hop must be positive"));
        }
        if self.win_length == 0 || self.win_length > self.fft_size {
            return Err(Error::invalid("window length must be in 1..=fft_size"));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::invalid("fft size must be a power of two"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        if num_samples < self.win_length {
            0
        } else {
            1 + (num_samples - self.win_length) / self.hop
        }
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }

    fn check_clip(&self, clip: &AudioClip) -> Result<()> {
        self.validate()?;
        clip.require_rate(self.sample_rate)?;
        if clip.len() < self.win_length {
            return Err(Error::TooShort {
                needed: self.win_length,
                actual: clip.len(),
            });
        }
        Ok(())
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// One-sided STFT of Hann-windowed, non-centred frames. Shape `[T, fft/2+1]`.
pub fn stft(clip: &AudioClip, cfg: &FrameConfig) -> Result<Spectrogram> {
    cfg.check_clip(clip)?;
    let frames = cfg.num_frames(clip.len());
    let bins = cfg.n_bins();
    let window = hann(cfg.win_length);
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    let mut out = Array2::zeros((frames, bins));
    let x = clip.samples();
    for t in 0..frames {
        let start = t * cfg.hop;
        buf.iter_mut().for_each(|c| *c = Complex64::default());
        for (i, w) in window.iter().enumerate() {
            buf[i] = Complex64::new(x[start + i] * w, 0.0);
        }
        fft.process(&mut buf);
        out.row_mut(t)
            .iter_mut()
            .zip(&buf[..bins])
            .for_each(|(o, b)| *o = *b);
    }
    Ok(out)
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters, one row per band.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `[n_mels, fft/2+1]`, nonnegative.
    pub weights: Array2<f64>,
    /// `n_mels + 2` band edges in Hz; band `m` rises from `edges[m]`, peaks at
    /// `edges[m+1]` and falls to zero at `edges[m+2]`.
    pub edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.edges_hz[1..self.edges_hz.len() - 1]
    }
}

pub fn build_mel_filterbank(
    cfg: &FrameConfig,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank> {
    cfg.validate()?;
    let nyquist = cfg.sample_rate as f64 / 2.0;
    if n_mels == 0 {
        return Err(Error::invalid("n_mels must be positive"));
    }
    if !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
        return Err(Error::invalid(format!(
            "band edges must satisfy 0 <= fmin < fmax <= {nyquist}, got {fmin}..{fmax}"
        )));
    }
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bins = cfg.n_bins();
    let mut weights = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, c, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        for k in 0..bins {
            let f = cfg.bin_hz(k);
            let w = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
            weights[[m, k]] = w;
        }
        if weights.row(m).iter().all(|&w| w <= 0.0) {
            return Err(Error::invalid(format!(
                "mel band {m} ({lo:.1}..{hi:.1} Hz) contains no FFT bin; use fewer bands or a larger FFT"
            )));
        }
    }
    Ok(MelFilterbank { weights, edges_hz })
}

/// Natural-log mel energies, `[T, n_mels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Array2<f64>,
}

pub fn power(spec: &Spectrogram) -> Array2<f64> {
    spec.mapv(|c| c.norm_sqr())
}

pub fn log_mel(spec: &Spectrogram, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    if spec.ncols() != fb.weights.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram has {} bins, filterbank expects {}",
            spec.ncols(),
            fb.weights.ncols()
        )));
    }
    let mel = power(spec).dot(&fb.weights.t());
    Ok(MelSpectrogram {
        frames: mel.mapv(|p| p.max(MEL_POWER_FLOOR).ln()),
    })
}

/// IEC A-weighting gain in dB, normalised to 0 dB at 1 kHz.
pub fn a_weight_db(f: f64) -> f64 {
    if f <= 0.0 {
        return A_WEIGHT_FLOOR_DB;
    }
    let f2 = f * f;
    let ra = 12194f64.powi(2) * f2 * f2
        / ((f2 + 20.6f64.powi(2))
            * ((f2 + 107.7f64.powi(2)) * (f2 + 737.9f64.powi(2))).sqrt()
            * (f2 + 12194f64.powi(2)));
    (20.0 * ra.log10() + 2.00).max(A_WEIGHT_FLOOR_DB)
}

/// Per-frame A-weighted power in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct LoudnessTrack {
    pub values: Vec<f64>,
}

pub fn loudness(spec: &Spectrogram, cfg: &FrameConfig) -> Result<LoudnessTrack> {
    if spec.ncols() != cfg.n_bins() {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram has {} bins, frame config implies {}",
            spec.ncols(),
            cfg.n_bins()
        )));
    }
    let weights: Vec<f64> = (0..cfg.n_bins())
        .map(|k| 10f64.powf(a_weight_db(cfg.bin_hz(k)) / 10.0))
        .collect();
    let values = spec
        .rows()
        .into_iter()
        .map(|row| {
            let e: f64 = row
                .iter()
                .zip(&weights)
                .map(|(c, w)| w * c.norm_sqr())
                .sum();
            10.0 * (e + 1e-10).log10()
        })
        .collect();
    Ok(LoudnessTrack { values })
}
