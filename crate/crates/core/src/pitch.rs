//! Autocorrelation F0 tracking with voiced/unvoiced decisions, plus
//! semitone and cent helpers.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::FrameConfig;
use crate::svcf::Tensor;

/// Per-frame F0 in Hz (0 when unvoiced) with matching voicing flags.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    f0_hz: Vec<f64>,
    vuv: Vec<bool>,
}

impl F0Track {
    /// Builds a track from Hz values; frames with `f0 > 0` are voiced.
    pub fn from_hz(f0_hz: Vec<f64>) -> Result<Self> {
        if let Some(i) = f0_hz.iter().position(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::invalid(format!("invalid F0 value at frame {i}")));
        }
        let vuv = f0_hz.iter().map(|&f| f > 0.0).collect();
        Ok(F0Track { f0_hz, vuv })
    }

    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn f0_hz(&self) -> &[f64] {
        &self.f0_hz
    }

    pub fn vuv(&self) -> &[bool] {
        &self.vuv
    }

    /// Natural-log F0 per frame; `None` marks unvoiced frames.
    pub fn log_f0(&self) -> Vec<Option<f64>> {
        self.f0_hz
            .iter()
            .zip(&self.vuv)
            .map(|(&f, &v)| v.then(|| f.ln()))
            .collect()
    }

    pub fn voiced_log_f0(&self) -> impl Iterator<Item = f64> + '_ {
        self.f0_hz
            .iter()
            .zip(&self.vuv)
            .filter(|(_, &v)| v)
            .map(|(f, _)| f.ln())
    }

    pub fn num_voiced(&self) -> usize {
        self.vuv.iter().filter(|&&v| v).count()
    }

    /// Median F0 over voiced frames.
    pub fn median_voiced_hz(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .f0_hz
            .iter()
            .zip(&self.vuv)
            .filter(|(_, &v)| v)
            .map(|(&f, _)| f)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        })
    }

    /// `[T, 2]` tensor with columns `f0_hz`, `vuv` (0/1).
    pub fn to_tensor(&self) -> Tensor {
        let data: Vec<f64> = self
            .f0_hz
            .iter()
            .zip(&self.vuv)
            .flat_map(|(&f, &v)| [f, if v { 1.0 } else { 0.0 }])
            .collect();
        Tensor::from_f64(vec![self.len(), 2], &data).expect("shape matches")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims().len() != 2 || t.dims()[1] != 2 {
            return Err(Error::ShapeMismatch(format!(
                "F0 tensor must be [T, 2], got {:?}",
                t.dims()
            )));
        }
        let d = t.data();
        let mut f0 = Vec::with_capacity(t.dims()[0]);
        for (i, row) in d.chunks_exact(2).enumerate() {
            let voiced = row[1] != 0.0;
            if voiced != (row[0] > 0.0) {
                return Err(Error::invalid(format!(
                    "frame {i}: voicing flag disagrees with F0 {}",
                    row[0]
                )));
            }
            f0.push(row[0] as f64);
        }
        F0Track::from_hz(f0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Config {
    pub f_floor: f64,
    pub f_ceil: f64,
    /// Minimum normalised autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Frames quieter than this RMS level (dBFS) are unvoiced.
    pub energy_gate_dbfs: f64,
}

impl Default for F0Config {
    fn default() -> Self {
        F0Config {
            f_floor: 50.0,
            f_ceil: 1100.0,
            voicing_threshold: 0.3,
            energy_gate_dbfs: -60.0,
        }
    }
}

// A later peak only beats an earlier one if the earlier is below this
// fraction of the best; stops subharmonic (octave-down) picks when
// non-integer periods make the 2x lag correlate marginally better.
const OCTAVE_GUARD: f64 = 0.9;

/// Normalised autocorrelation `r[tau]` for `tau in 0..len`, each lag
/// normalised by the energies of the two overlapping segments.
fn normalized_acf(frame: &[f64], fft: &dyn rustfft::Fft<f64>, ifft: &dyn rustfft::Fft<f64>) -> Vec<f64> {
    let w = frame.len();
    let n = fft.len();
    let mut buf: Vec<Complex64> = frame
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(n)
        .collect();
    fft.process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
    ifft.process(&mut buf);

    let mut prefix = vec![0.0; w + 1];
    for i in 0..w {
        prefix[i + 1] = prefix[i] + frame[i] * frame[i];
    }
    (0..w)
        .map(|tau| {
            let head = prefix[w - tau];
            let tail = prefix[w] - prefix[tau];
            let denom = (head * tail).sqrt();
            if denom > 0.0 {
                buf[tau].re / n as f64 / denom
            } else {
                0.0
            }
        })
        .collect()
}

fn median_smooth_voiced(f0: &mut [f64], vuv: &[bool]) {
    let orig = f0.to_vec();
    let mut t = 0;
    while t < vuv.len() {
        if !vuv[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < vuv.len() && vuv[t] {
            t += 1;
        }
        for i in start..t {
            let lo = i.saturating_sub(2).max(start);
            let hi = (i + 3).min(t);
            let mut w: Vec<f64> = orig[lo..hi].to_vec();
            w.sort_by(f64::total_cmp);
            f0[i] = if w.len() % 2 == 1 {
                w[w.len() / 2]
            } else {
                0.5 * (w[w.len() / 2 - 1] + w[w.len() / 2])
            };
        }
    }
}

/// Estimates F0 on the frame grid of `cfg`.
///
/// Each frame's normalised autocorrelation is searched over the lags of
/// `[f_floor, f_ceil]`; the first local peak within [`OCTAVE_GUARD`] of the
/// strongest is refined by parabolic interpolation. A frame is voiced when
/// that peak reaches `voicing_threshold` and its RMS clears the energy gate.
/// Voiced runs are then median-filtered over five frames.
pub fn estimate_f0(clip: &AudioClip, cfg: &FrameConfig, f0cfg: &F0Config) -> Result<F0Track> {
    cfg.validate()?;
    clip.require_rate(cfg.sample_rate)?;
    if !(0.0 < f0cfg.f_floor && f0cfg.f_floor < f0cfg.f_ceil) {
        return Err(Error::invalid("F0 range must satisfy 0 < floor < ceil"));
    }
    let sr = cfg.sample_rate as f64;
    let win = cfg.win_length;
    let min_lag = ((sr / f0cfg.f_ceil).floor() as usize).max(2);
    let max_lag = ((sr / f0cfg.f_floor).ceil() as usize).min(win.saturating_sub(2));
    let frames = cfg.num_frames(clip.len());
    let mut f0 = vec![0.0; frames];
    let mut vuv = vec![false; frames];
    if min_lag + 1 >= max_lag {
        return F0Track::from_hz(f0);
    }

    let mut planner = FftPlanner::new();
    let n = (2 * win).next_power_of_two();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let x = clip.samples();
    let gate = 10f64.powf(f0cfg.energy_gate_dbfs / 20.0);

    for t in 0..frames {
        let raw = &x[t * cfg.hop..t * cfg.hop + win];
        let rms = (raw.iter().map(|v| v * v).sum::<f64>() / win as f64).sqrt();
        if rms < gate {
            continue;
        }
        let mean = raw.iter().sum::<f64>() / win as f64;
        let frame: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let r = normalized_acf(&frame, fft.as_ref(), ifft.as_ref());

        let peaks: Vec<usize> = (min_lag..=max_lag)
            .filter(|&tau| r[tau] > 0.0 && r[tau] > r[tau - 1] && r[tau] >= r[tau + 1])
            .collect();
        let Some(best) = peaks.iter().map(|&p| r[p]).reduce(f64::max) else {
            continue;
        };
        let tau = *peaks
            .iter()
            .find(|&&p| r[p] >= OCTAVE_GUARD * best)
            .expect("best peak qualifies");

        let (a, b, c) = (r[tau - 1], r[tau], r[tau + 1]);
        let curvature = a - 2.0 * b + c;
        let delta = if curvature < 0.0 {
            (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let peak = b - 0.25 * (a - c) * delta;
        let hz = sr / (tau as f64 + delta);
        if peak >= f0cfg.voicing_threshold && (f0cfg.f_floor..=f0cfg.f_ceil).contains(&hz) {
            f0[t] = hz;
            vuv[t] = true;
        }
    }
    median_smooth_voiced(&mut f0, &vuv);
    F0Track::from_hz(f0)
}

pub fn semitones_to_ratio(semitones: f64) -> f64 {
    2f64.powf(semitones / 12.0)
}

/// Interval from `f_a` to `f_b` in cents.
pub fn cents_between(f_a: f64, f_b: f64) -> Result<f64> {
    if !(f_a > 0.0 && f_b > 0.0) {
        return Err(Error::invalid("frequencies must be positive"));
    }
    Ok(1200.0 * (f_b / f_a).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn clip(f: impl Fn(f64) -> f64, secs: f64) -> AudioClip {
        let n = (24000.0 * secs) as usize;
        AudioClip::new((0..n).map(|i| f(i as f64 / 24000.0)).collect(), 24000).unwrap()
    }

    fn sawtooth(freq: f64) -> impl Fn(f64) -> f64 {
        move |t| 0.5 * (2.0 * (freq * t).fract() - 1.0)
    }

    #[test]
    fn silence_is_unvoiced() {
        let track = estimate_f0(&clip(|_| 0.0, 0.5), &FrameConfig::default(), &F0Config::default()).unwrap();
        assert!(!track.is_empty());
        assert!(track.vuv().iter().all(|&v| !v));
        assert!(track.f0_hz().iter().all(|&f| f == 0.0));
        assert!(track.log_f0().iter().all(Option::is_none));
    }

    #[test]
    fn sine_440() {
        let c = clip(|t| 0.5 * (2.0 * PI * 440.0 * t).sin(), 1.0);
        let track = estimate_f0(&c, &FrameConfig::default(), &F0Config::default()).unwrap();
        let interior = &track.vuv()[2..track.len() - 2];
        let voiced = interior.iter().filter(|&&v| v).count();
        assert!(voiced as f64 >= 0.95 * interior.len() as f64);
        let med = track.median_voiced_hz().unwrap();
        assert!((med - 440.0).abs() / 440.0 < 0.01, "median {med}");
    }

    #[test]
    fn sawtooth_220_without_octave_errors() {
        let track = estimate_f0(&clip(sawtooth(220.0), 1.0), &FrameConfig::default(), &F0Config::default()).unwrap();
        let med = track.median_voiced_hz().unwrap();
        assert!((med - 220.0).abs() / 220.0 < 0.01, "median {med}");
        let voiced: Vec<f64> = track.f0_hz().iter().copied().filter(|&f| f > 0.0).collect();
        let good = voiced
            .iter()
            .filter(|&&f| cents_between(220.0, f).unwrap().abs() < 600.0)
            .count();
        assert!(good as f64 >= 0.9 * voiced.len() as f64);
    }

    #[test]
    fn frame_count_matches_stft() {
        let cfg = FrameConfig::default();
        let c = clip(sawtooth(150.0), 0.73);
        let track = estimate_f0(&c, &cfg, &F0Config::default()).unwrap();
        let spec = crate::features::stft(&c, &cfg).unwrap();
        assert_eq!(track.len(), spec.nrows());
    }

    #[test]
    fn track_invariants_and_tensor() {
        let track = estimate_f0(&clip(sawtooth(300.0), 0.3), &FrameConfig::default(), &F0Config::default()).unwrap();
        for (f, v) in track.f0_hz().iter().zip(track.vuv()) {
            assert_eq!(*v, *f > 0.0);
            if *v {
                assert!((50.0..=1100.0).contains(f));
            }
        }
        let back = F0Track::from_tensor(&track.to_tensor()).unwrap();
        assert_eq!(back.vuv(), track.vuv());
    }

    #[test]
    fn rejects_wrong_rate() {
        let c = AudioClip::new(vec![0.0; 4000], 16000).unwrap();
        assert!(matches!(
            estimate_f0(&c, &FrameConfig::default(), &F0Config::default()),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn semitone_and_cent_values() {
        assert_eq!(semitones_to_ratio(0.0), 1.0);
        assert_eq!(semitones_to_ratio(12.0), 2.0);
        assert!((semitones_to_ratio(6.0) - 1.414213562).abs() < 1e-9);
        assert!((semitones_to_ratio(6.0) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(cents_between(440.0, 440.0).unwrap(), 0.0);
        assert!((cents_between(440.0, 880.0).unwrap() - 1200.0).abs() < 1e-12);
        assert!((cents_between(440.0, 466.1637615).unwrap() - 100.0).abs() < 1e-6);
        assert!(cents_between(0.0, 440.0).is_err());
        assert!(cents_between(440.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn cents_inverts_semitones(s in -24.0f64..24.0, f in 20.0f64..2000.0) {
            let c = cents_between(f, semitones_to_ratio(s) * f).unwrap();
            prop_assert!((c - 100.0 * s).abs() < 1e-6);
        }
    }
}
