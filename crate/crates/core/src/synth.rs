//! Synthetic signals with known pitch and spectral envelope.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioClip;

fn build(rate: u32, secs: f64, f: impl Fn(usize) -> f64) -> AudioClip {
    let n = (rate as f64 * secs).round() as usize;
    AudioClip::new((0..n).map(f).collect(), rate).expect("finite synthetic samples")
}

pub fn sine(freq: f64, amp: f64, rate: u32, secs: f64) -> AudioClip {
    build(rate, secs, |i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
}

/// Naive (non band-limited) sawtooth in `[-amp, amp)`.
pub fn sawtooth(freq: f64, amp: f64, rate: u32, secs: f64) -> AudioClip {
    build(rate, secs, |i| {
        amp * (2.0 * (freq * i as f64 / rate as f64).fract() - 1.0)
    })
}

pub fn silence(rate: u32, secs: f64) -> AudioClip {
    build(rate, secs, |_| 0.0)
}

/// Uniform white noise in `[-amp, amp)`.
pub fn white_noise(amp: f64, rate: u32, secs: f64, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (rate as f64 * secs).round() as usize;
    let s = (0..n).map(|_| amp * (2.0 * rng.random::<f64>() - 1.0)).collect();
    AudioClip::new(s, rate).expect("finite noise")
}

/// Pulse train at `f0` filtered by a cascade of two-pole resonators
/// `(centre Hz, bandwidth Hz)`, normalised to `peak` absolute amplitude.
pub fn vowel(f0: f64, formants: &[(f64, f64)], peak: f64, rate: u32, secs: f64) -> AudioClip {
    let n = (rate as f64 * secs).round() as usize;
    let period = rate as f64 / f0;
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let phase = i as f64 / period;
            if (phase - phase.floor()) * period < 1.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for &(fc, bw) in formants {
        let r = (-PI * bw / rate as f64).exp();
        let theta = 2.0 * PI * fc / rate as f64;
        let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
        let (mut y1, mut y2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = *v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / max);
    }
    AudioClip::new(x, rate).expect("finite vowel")
}
