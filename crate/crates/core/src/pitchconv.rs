//! Speaker log-F0 statistics and source-to-target F0 conversion.
//!
//! The base map is mean-variance normalisation of voiced log-F0:
//!
//! ```text
//! f̂ = (σ_y / σ_x) · (f − μ_x) + μ_y
//! ```
//!
//! [`ConversionPolicy`] adds the singing-oriented variants: a pure mean
//! shift (σ treated as 1), rounding of that shift to whole semitones, and a
//! fixed upward offset for speech-trained targets.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitch::F0Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerF0Stats {
    pub speaker_id: String,
    /// Mean of voiced natural-log F0.
    pub mean_log_f0: f64,
    /// Population standard deviation of voiced natural-log F0.
    pub std_log_f0: f64,
    pub n_voiced_frames: u64,
}

impl SpeakerF0Stats {
    pub fn validate(&self) -> Result<()> {
        if !(self.std_log_f0 >= 0.0 && self.std_log_f0.is_finite()) {
            return Err(Error::invalid("std_log_f0 must be finite and >= 0"));
        }
        if self.n_voiced_frames < 1 {
            return Err(Error::invalid("n_voiced_frames must be >= 1"));
        }
        let hz = self.mean_log_f0.exp();
        if !(20.0..=2000.0).contains(&hz) {
            return Err(Error::invalid(format!(
                "mean log-F0 corresponds to {hz:.1} Hz, outside 20..2000 Hz"
            )));
        }
        Ok(())
    }

    pub fn mean_hz(&self) -> f64 {
        self.mean_log_f0.exp()
    }
}

/// Mean and population standard deviation of voiced log-F0 over all tracks.
pub fn compute_f0_stats<'a>(
    tracks: impl IntoIterator<Item = &'a F0Track>,
    speaker_id: &str,
) -> Result<SpeakerF0Stats> {
    let values: Vec<f64> = tracks
        .into_iter()
        .flat_map(|t| t.voiced_log_f0())
        .collect();
    if values.is_empty() {
        return Err(Error::NoVoicedFrames);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(SpeakerF0Stats {
        speaker_id: speaker_id.to_string(),
        mean_log_f0: mean,
        std_log_f0: var.sqrt(),
        n_voiced_frames: values.len() as u64,
    })
}

/// Rounds a shift to the nearest multiple of `granularity` cents, ties away
/// from zero. A granularity of 0 passes the shift through.
pub fn quantize_shift_cents(delta_cents: f64, granularity: u32) -> f64 {
    if granularity == 0 {
        return delta_cents;
    }
    let g = granularity as f64;
    (delta_cents / g).round() * g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversionPolicy {
    /// Apply the σ_y/σ_x scale; when false only the mean shift is applied.
    pub scale_sigma: bool,
    /// 0 (off) or 100.
    pub quantize_cents: u32,
    /// Added after the (quantized) mean shift; 0 for in-domain, 6 for
    /// speech-to-singing conversion.
    pub cross_domain_offset_semitones: f64,
}

impl ConversionPolicy {
    pub const IDENTITY: ConversionPolicy = ConversionPolicy {
        scale_sigma: false,
        quantize_cents: 0,
        cross_domain_offset_semitones: 0.0,
    };

    /// Mean shift quantized to semitones, no offset.
    pub fn in_domain() -> Self {
        ConversionPolicy {
            scale_sigma: false,
            quantize_cents: 100,
            cross_domain_offset_semitones: 0.0,
        }
    }

    /// Mean shift quantized to semitones plus six semitones up.
    pub fn cross_domain() -> Self {
        ConversionPolicy {
            cross_domain_offset_semitones: 6.0,
            ..Self::in_domain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quantize_cents != 0 && self.quantize_cents != 100 {
            return Err(Error::invalid("quantize_cents must be 0 or 100"));
        }
        if !(0.0..=12.0).contains(&self.cross_domain_offset_semitones) {
            return Err(Error::invalid("cross-domain offset must be within 0..=12 semitones"));
        }
        Ok(())
    }
}

const CENTS_PER_LN: f64 = 1200.0 / LN_2;

/// Maps every voiced frame of `track` from speaker `x` to speaker `y`.
/// Unvoiced frames pass through untouched.
pub fn convert_logf0(
    track: &F0Track,
    stats_x: &SpeakerF0Stats,
    stats_y: &SpeakerF0Stats,
    policy: &ConversionPolicy,
) -> Result<F0Track> {
    policy.validate()?;
    stats_x.validate()?;
    stats_y.validate()?;
    let offset = policy.cross_domain_offset_semitones * LN_2 / 12.0;
    let map: Box<dyn Fn(f64) -> f64> = if policy.scale_sigma {
        if stats_x.std_log_f0 == 0.0 {
            return Err(Error::DegenerateVariance);
        }
        let scale = stats_y.std_log_f0 / stats_x.std_log_f0;
        let (mx, my) = (stats_x.mean_log_f0, stats_y.mean_log_f0);
        Box::new(move |f| scale * (f - mx) + my + offset)
    } else {
        let cents = (stats_y.mean_log_f0 - stats_x.mean_log_f0) * CENTS_PER_LN;
        let shift = quantize_shift_cents(cents, policy.quantize_cents) / CENTS_PER_LN;
        Box::new(move |f| f + shift + offset)
    };
    let f0 = track
        .f0_hz()
        .iter()
        .map(|&hz| if hz > 0.0 { map(hz.ln()).exp() } else { 0.0 })
        .collect();
    F0Track::from_hz(f0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(id: &str, mean_hz: f64, std: f64) -> SpeakerF0Stats {
        SpeakerF0Stats {
            speaker_id: id.into(),
            mean_log_f0: mean_hz.ln(),
            std_log_f0: std,
            n_voiced_frames: 10,
        }
    }

    #[test]
    fn stats_examples() {
        let t = F0Track::from_hz(vec![220.0, 0.0, 220.0]).unwrap();
        let s = compute_f0_stats([&t], "a").unwrap();
        assert!((s.mean_log_f0 - 220f64.ln()).abs() < 1e-15);
        assert_eq!(s.std_log_f0, 0.0);
        assert_eq!(s.n_voiced_frames, 2);

        let t = F0Track::from_hz(vec![200.0, 0.0, 300.0]).unwrap();
        let s = compute_f0_stats([&t], "a").unwrap();
        let mean = (200f64.ln() + 300f64.ln()) / 2.0;
        let std = (300f64.ln() - 200f64.ln()).abs() / 2.0;
        assert!((s.mean_log_f0 - mean).abs() < 1e-12);
        assert!((s.std_log_f0 - std).abs() < 1e-12);
        assert!((s.mean_log_f0 - 5.5011).abs() < 1e-4);
        assert!((s.std_log_f0 - 0.2027).abs() < 1e-4);

        let silent = F0Track::from_hz(vec![0.0; 4]).unwrap();
        assert!(matches!(compute_f0_stats([&silent], "a"), Err(Error::NoVoicedFrames)));
    }

    #[test]
    fn quantization() {
        assert_eq!(quantize_shift_cents(600.0, 100), 600.0);
        assert_eq!(quantize_shift_cents(349.9, 100), 300.0);
        assert_eq!(quantize_shift_cents(250.0, 100), 300.0);
        assert_eq!(quantize_shift_cents(-250.0, 100), -300.0);
        assert_eq!(quantize_shift_cents(123.4, 0), 123.4);
    }

    #[test]
    fn identity_policy() {
        let t = F0Track::from_hz(vec![0.0, 180.0, 250.0, 0.0]).unwrap();
        let s = stats("x", 200.0, 0.1);
        let out = convert_logf0(&t, &s, &s, &ConversionPolicy::IDENTITY).unwrap();
        for (a, b) in t.f0_hz().iter().zip(out.f0_hz()) {
            assert!((a - b).abs() < 1e-12 * a.max(1.0));
        }
        assert_eq!(out.vuv(), t.vuv());
    }

    #[test]
    fn six_semitone_offset() {
        let t = F0Track::from_hz(vec![220.0, 0.0]).unwrap();
        let s = stats("x", 200.0, 0.1);
        let policy = ConversionPolicy {
            cross_domain_offset_semitones: 6.0,
            ..ConversionPolicy::IDENTITY
        };
        let out = convert_logf0(&t, &s, &s, &policy).unwrap();
        assert!((out.f0_hz()[0] - 311.127).abs() < 1e-3);
        assert!((out.f0_hz()[0] - 220.0 * 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(out.f0_hz()[1], 0.0);
    }

    #[test]
    fn scale_sigma_hits_target_moments() {
        let t = F0Track::from_hz(vec![200.0, 300.0]).unwrap();
        let sx = compute_f0_stats([&t], "x").unwrap();
        let sy = SpeakerF0Stats {
            mean_log_f0: 440f64.ln(),
            ..sx.clone()
        };
        let policy = ConversionPolicy {
            scale_sigma: true,
            ..ConversionPolicy::IDENTITY
        };
        let out = convert_logf0(&t, &sx, &sy, &policy).unwrap();
        let geo = (out.f0_hz()[0] * out.f0_hz()[1]).sqrt();
        assert!((geo - 440.0).abs() < 1e-9);
        let spread_in = (300f64 / 200.0).ln();
        let spread_out = (out.f0_hz()[1] / out.f0_hz()[0]).ln();
        assert!((spread_in - spread_out).abs() < 1e-12);
    }

    #[test]
    fn quantized_shift_ratio() {
        let t = F0Track::from_hz(vec![150.0, 0.0, 210.0, 333.0]).unwrap();
        let sx = stats("x", 200.0, 0.1);
        let sy = SpeakerF0Stats {
            mean_log_f0: sx.mean_log_f0 + 349.9 / CENTS_PER_LN,
            ..stats("y", 200.0, 0.2)
        };
        let policy = ConversionPolicy {
            quantize_cents: 100,
            ..ConversionPolicy::IDENTITY
        };
        let out = convert_logf0(&t, &sx, &sy, &policy).unwrap();
        let want = 2f64.powf(300.0 / 1200.0);
        for (a, b) in t.f0_hz().iter().zip(out.f0_hz()) {
            if *a > 0.0 {
                assert!((b / a - want).abs() < 1e-12);
            } else {
                assert_eq!(*b, 0.0);
            }
        }
    }

    #[test]
    fn degenerate_source_variance() {
        let t = F0Track::from_hz(vec![200.0]).unwrap();
        let sx = stats("x", 200.0, 0.0);
        let sy = stats("y", 300.0, 0.1);
        let policy = ConversionPolicy {
            scale_sigma: true,
            ..ConversionPolicy::IDENTITY
        };
        assert!(matches!(
            convert_logf0(&t, &sx, &sy, &policy),
            Err(Error::DegenerateVariance)
        ));
        // the mean-shift path is unaffected
        assert!(convert_logf0(&t, &sx, &sy, &ConversionPolicy::in_domain()).is_ok());
    }

    #[test]
    fn policy_validation() {
        let bad = ConversionPolicy {
            quantize_cents: 50,
            ..ConversionPolicy::IDENTITY
        };
        assert!(bad.validate().is_err());
        let bad = ConversionPolicy {
            cross_domain_offset_semitones: 13.0,
            ..ConversionPolicy::IDENTITY
        };
        assert!(bad.validate().is_err());
    }

    fn track_strategy() -> impl Strategy<Value = F0Track> {
        prop::collection::vec(prop_oneof![Just(0.0), 60.0f64..1000.0], 2..60)
            .prop_filter("two distinct voiced frames", |v| {
                let voiced: Vec<_> = v.iter().filter(|&&f| f > 0.0).collect();
                voiced.len() >= 2 && voiced.iter().any(|&&f| (f - voiced[0]).abs() > 1.0)
            })
            .prop_map(|v| F0Track::from_hz(v).unwrap())
    }

    proptest! {
        #[test]
        fn exact_moment_transfer(track in track_strategy(), my in 100.0f64..600.0, sy in 0.01f64..0.5) {
            let sx = compute_f0_stats([&track], "x").unwrap();
            let target = stats("y", my, sy);
            let policy = ConversionPolicy { scale_sigma: true, ..ConversionPolicy::IDENTITY };
            let out = convert_logf0(&track, &sx, &target, &policy).unwrap();
            let got = compute_f0_stats([&out], "y").unwrap();
            prop_assert!((got.mean_log_f0 - target.mean_log_f0).abs() < 1e-9);
            prop_assert!((got.std_log_f0 - target.std_log_f0).abs() < 1e-9);
            prop_assert_eq!(out.vuv(), track.vuv());
        }

        #[test]
        fn quantized_shift_is_constant_multiple_of_100(track in track_strategy(), dy in -0.5f64..0.5) {
            let sx = compute_f0_stats([&track], "x").unwrap();
            let sy = SpeakerF0Stats { mean_log_f0: sx.mean_log_f0 + dy, ..sx.clone() };
            let out = convert_logf0(&track, &sx, &sy, &ConversionPolicy::in_domain()).unwrap();
            let shifts: Vec<f64> = track.f0_hz().iter().zip(out.f0_hz())
                .filter(|(a, _)| **a > 0.0)
                .map(|(a, b)| crate::pitch::cents_between(*a, *b).unwrap())
                .collect();
            let first = shifts[0];
            prop_assert!((first / 100.0 - (first / 100.0).round()).abs() < 1e-6);
            for s in &shifts {
                prop_assert!((s - first).abs() < 1e-6);
            }
            prop_assert_eq!(out.vuv(), track.vuv());
        }

        #[test]
        fn map_is_monotone(a in 60.0f64..1000.0, b in 60.0f64..1000.0, sy in 0.01f64..0.5) {
            prop_assume!((a - b).abs() > 1e-6);
            let t = F0Track::from_hz(vec![a, b]).unwrap();
            let sx = stats("x", 200.0, 0.2);
            let target = stats("y", 300.0, sy);
            let policy = ConversionPolicy { scale_sigma: true, ..ConversionPolicy::IDENTITY };
            let out = convert_logf0(&t, &sx, &target, &policy).unwrap();
            prop_assert_eq!(a < b, out.f0_hz()[0] < out.f0_hz()[1]);
        }
    }
}
