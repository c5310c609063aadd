//! Speaker-information perturbations: formant shifting, pitch randomisation
//! and a peaking-band parametric equaliser, plus the seeded pair generator
//! that feeds the contrastive objective.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{resample_rational, AudioClip, CANONICAL_RATE};
use crate::error::{Error, Result};
use crate::features::hann;
use crate::pitch::semitones_to_ratio;

const FORMANT_FFT: usize = 1024;
const FORMANT_HOP: usize = 256;
const CEPSTRAL_CUTOFF_SEC: f64 = 2.5e-3;

fn check_ratio(name: &str, r: f64) -> Result<()> {
    if !(0.5..=2.0).contains(&r) {
        return Err(Error::invalid(format!("{name} must lie in [0.5, 2], got {r}")));
    }
    Ok(())
}

/// Cepstrally smoothed log-magnitude envelope of a one-sided spectrum.
fn cepstral_envelope(
    spectrum: &[Complex64],
    lifter: usize,
    ifft: &dyn rustfft::Fft<f64>,
    fft: &dyn rustfft::Fft<f64>,
) -> Vec<f64> {
    let n = ifft.len();
    let half = n / 2;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let k = if k <= half { k } else { n - k };
            Complex64::new(spectrum[k].norm().max(1e-12).ln(), 0.0)
        })
        .collect();
    ifft.process(&mut buf);
    for (q, c) in buf.iter_mut().enumerate() {
        let quef = q.min(n - q);
        *c = if quef <= lifter {
            Complex64::new(c.re / n as f64, 0.0)
        } else {
            Complex64::default()
        };
    }
    fft.process(&mut buf);
    buf[..=half].iter().map(|c| c.re).collect()
}

/// Shifts the spectral envelope by `rho` while keeping the harmonic fine
/// structure (and therefore F0) in place.
///
/// Per STFT frame the log-magnitude is split into a cepstrally smoothed
/// envelope and a residual; the envelope is resampled at `f / rho` and the
/// frame rebuilt with the original phase, then overlap-added with a Hann
/// synthesis window.
pub fn formant_shift(clip: &AudioClip, rho: f64) -> Result<AudioClip> {
    check_ratio("formant ratio", rho)?;
    clip.require_rate(CANONICAL_RATE)?;
    let n = FORMANT_FFT;
    let half = n / 2;
    let lifter = (CEPSTRAL_CUTOFF_SEC * clip.sample_rate() as f64).round() as usize;
    let window = hann(n);

    let len = clip.len();
    let mut padded = vec![0.0; len + 2 * n];
    padded[n..n + len].copy_from_slice(clip.samples());
    let frames = (padded.len() - n) / FORMANT_HOP + 1;
    let mut out = vec![0.0; padded.len()];
    let mut norm = vec![0.0; padded.len()];

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf = vec![Complex64::default(); n];
    for t in 0..frames {
        let start = t * FORMANT_HOP;
        for i in 0..n {
            buf[i] = Complex64::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        let env = cepstral_envelope(&buf[..=half], lifter, ifft.as_ref(), fft.as_ref());
        for k in 0..=half {
            let pos = (k as f64 / rho).min(half as f64);
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let warped = if i >= half {
                env[half]
            } else {
                env[i] * (1.0 - frac) + env[i + 1] * frac
            };
            buf[k] *= (warped - env[k]).exp();
        }
        for k in half + 1..n {
            buf[k] = buf[n - k].conj();
        }
        ifft.process(&mut buf);
        for i in 0..n {
            let w = window[i];
            out[start + i] += buf[i].re / n as f64 * w;
            norm[start + i] += w * w;
        }
    }
    let samples = (n..n + len)
        .map(|i| if norm[i] > 1e-8 { out[i] / norm[i] } else { 0.0 })
        .collect();
    AudioClip::new(samples, clip.sample_rate())
}

/// Waveform-similarity overlap-add time stretch of `input` to exactly
/// `target_len` samples (25 ms Hann segments at 50 % overlap, ±7.5 ms
/// alignment search).
pub fn wsola_stretch(input: &[f64], target_len: usize, sample_rate: u32) -> Vec<f64> {
    if input.is_empty() || target_len == 0 {
        return vec![0.0; target_len];
    }
    let sr = sample_rate as f64;
    let seg = ((0.025 * sr).round() as usize).max(4) & !1;
    let hop = seg / 2;
    let tol = (0.0075 * sr).round() as i64;
    let alpha = target_len as f64 / input.len() as f64;
    let window = hann(seg);
    let pad = seg as i64;

    let at = |i: i64| -> f64 {
        let j = i - pad;
        if j >= 0 && (j as usize) < input.len() {
            input[j as usize]
        } else {
            0.0
        }
    };
    let similarity = |a: i64, b: i64| -> f64 {
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for i in 0..seg as i64 {
            let (x, y) = (at(a + i), at(b + i));
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
        let d = (aa * bb).sqrt();
        if d > 0.0 {
            ab / d
        } else {
            0.0
        }
    };

    let out_len = target_len + 2 * seg;
    let frames = (target_len + seg) / hop + 2;
    let mut out = vec![0.0; out_len + seg];
    let mut wsum = vec![0.0; out_len + seg];
    let mut prev: Option<i64> = None;
    for k in 0..frames {
        let o = (k * hop) as i64;
        let ideal = pad + ((o - pad) as f64 / alpha).round() as i64;
        let chosen = match prev {
            None => ideal,
            Some(p) => {
                let natural = p + hop as i64;
                let mut best = (ideal, similarity(natural, ideal));
                for d in 1..=tol {
                    for cand in [ideal - d, ideal + d] {
                        let s = similarity(natural, cand);
                        if s > best.1 + 1e-12 {
                            best = (cand, s);
                        }
                    }
                }
                best.0
            }
        };
        for i in 0..seg {
            let oi = o as usize + i;
            out[oi] += window[i] * at(chosen + i as i64);
            wsum[oi] += window[i];
        }
        prev = Some(chosen);
    }
    (seg..seg + target_len)
        .map(|i| if wsum[i] > 1e-6 { out[i] / wsum[i] } else { 0.0 })
        .collect()
}

/// Raises pitch by `ratio` without changing duration: resample by
/// `1/ratio`, then WSOLA-stretch back to the original length.
pub fn pitch_randomize(clip: &AudioClip, ratio: f64) -> Result<AudioClip> {
    check_ratio("pitch ratio", ratio)?;
    // Rational approximation to the nearest 1/1000.
    let down = (ratio * 1000.0).round() as u64;
    let resampled = resample_rational(clip.samples(), 1000, down);
    let out = wsola_stretch(&resampled, clip.len(), clip.sample_rate());
    AudioClip::new(out, clip.sample_rate())
}

/// Second-order section with `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    /// Complex response at normalised angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }

    pub fn magnitude_at(&self, freq: f64, sample_rate: f64) -> f64 {
        self.response(2.0 * PI * freq / sample_rate).norm()
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }
}

/// Peaking-EQ biquad (RBJ cookbook form).
pub fn peaking_biquad(fc: f64, q: f64, gain_db: f64, sample_rate: f64) -> Result<BiquadCoeffs> {
    if !(fc > 0.0 && fc < sample_rate / 2.0) {
        return Err(Error::invalid(format!(
            "centre frequency {fc} Hz outside (0, {})",
            sample_rate / 2.0
        )));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::invalid(format!("Q must be positive, got {q}")));
    }
    if !gain_db.is_finite() {
        return Err(Error::invalid("gain must be finite"));
    }
    let a = 10f64.powf(gain_db / 40.0);
    let w = 2.0 * PI * fc / sample_rate;
    let alpha = w.sin() / (2.0 * q);
    let cos = w.cos();
    let a0 = 1.0 + alpha / a;
    Ok(BiquadCoeffs {
        b0: (1.0 + alpha * a) / a0,
        b1: -2.0 * cos / a0,
        b2: (1.0 - alpha * a) / a0,
        a1: -2.0 * cos / a0,
        a2: (1.0 - alpha / a) / a0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqBand {
    pub fc: f64,
    pub q: f64,
    pub gain_db: f64,
}

fn biquad_filter(c: &BiquadCoeffs, x: &mut [f64]) {
    // transposed direct form II
    let (mut s1, mut s2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let input = *v;
        let y = c.b0 * input + s1;
        s1 = c.b1 * input - c.a1 * y + s2;
        s2 = c.b2 * input - c.a2 * y;
        *v = y;
    }
}

/// Applies the peaking bands in order as a cascade.
pub fn parametric_eq(clip: &AudioClip, bands: &[EqBand]) -> Result<AudioClip> {
    let sr = clip.sample_rate() as f64;
    let coeffs = bands
        .iter()
        .map(|b| peaking_biquad(b.fc, b.q, b.gain_db, sr))
        .collect::<Result<Vec<_>>>()?;
    let mut x = clip.samples().to_vec();
    for c in &coeffs {
        biquad_filter(c, &mut x);
    }
    AudioClip::new(x, clip.sample_rate())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub formant_ratio_range: [f64; 2],
    pub pitch_semitone_range: [f64; 2],
    pub eq_bands: usize,
    pub eq_gain_range_db: [f64; 2],
    pub eq_q_range: [f64; 2],
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            formant_ratio_range: [1.0 / 1.4, 1.4],
            pitch_semitone_range: [-12.0, 12.0],
            eq_bands: 8,
            eq_gain_range_db: [-12.0, 12.0],
            eq_q_range: [0.5, 5.0],
            seed: 0,
        }
    }
}

impl PerturbConfig {
    /// Ranges that leave the signal untouched.
    pub fn identity(seed: u64) -> Self {
        PerturbConfig {
            formant_ratio_range: [1.0, 1.0],
            pitch_semitone_range: [0.0, 0.0],
            eq_gain_range_db: [0.0, 0.0],
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("formant ratio", self.formant_ratio_range),
            ("pitch semitones", self.pitch_semitone_range),
            ("EQ gain", self.eq_gain_range_db),
            ("EQ Q", self.eq_q_range),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!("{name} range must satisfy lo <= hi")));
            }
        }
        let [flo, fhi] = self.formant_ratio_range;
        if flo < 0.5 || fhi > 2.0 {
            return Err(Error::invalid("formant ratio range must lie within [0.5, 2]"));
        }
        let [plo, phi] = self.pitch_semitone_range;
        if plo < -12.0 || phi > 12.0 {
            return Err(Error::invalid("pitch range must lie within [-12, 12] semitones"));
        }
        if self.eq_bands == 0 {
            return Err(Error::invalid("at least one EQ band is required"));
        }
        if self.eq_q_range[0] <= 0.0 {
            return Err(Error::invalid("EQ Q must be positive"));
        }
        Ok(())
    }

    /// Band centres, log-spaced from 60 Hz to 10 kHz (capped below Nyquist).
    pub fn eq_centers(&self, sample_rate: u32) -> Vec<f64> {
        let (lo, hi) = (60.0f64, 10_000f64.min(0.45 * sample_rate as f64));
        let n = self.eq_bands;
        if n == 1 {
            return vec![(lo * hi).sqrt()];
        }
        (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect()
    }
}

/// One randomly drawn perturbation chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbDraw {
    pub formant_ratio: f64,
    pub pitch_semitones: f64,
    pub eq: Vec<EqBand>,
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl PerturbDraw {
    pub fn sample(cfg: &PerturbConfig, sample_rate: u32, rng: &mut impl Rng) -> Self {
        let formant_ratio = uniform(rng, cfg.formant_ratio_range);
        let pitch_semitones = uniform(rng, cfg.pitch_semitone_range);
        let eq = cfg
            .eq_centers(sample_rate)
            .into_iter()
            .map(|fc| {
                let gain_db = uniform(rng, cfg.eq_gain_range_db);
                let q = uniform(rng, cfg.eq_q_range);
                EqBand { fc, q, gain_db }
            })
            .collect();
        PerturbDraw {
            formant_ratio,
            pitch_semitones,
            eq,
        }
    }

    /// formant shift → pitch randomisation → equaliser.
    pub fn apply(&self, clip: &AudioClip) -> Result<AudioClip> {
        let shifted = formant_shift(clip, self.formant_ratio)?;
        let pitched = pitch_randomize(&shifted, semitones_to_ratio(self.pitch_semitones))?;
        parametric_eq(&pitched, &self.eq)
    }
}

/// Two independently drawn perturbations of the same clip. Identical
/// `cfg.seed` gives bit-identical pairs.
pub fn random_perturb_pair(clip: &AudioClip, cfg: &PerturbConfig) -> Result<(AudioClip, AudioClip)> {
    let (_, a, b) = random_perturb_pair_with_draws(clip, cfg)?;
    Ok((a, b))
}

/// As [`random_perturb_pair`], also returning the drawn parameters.
pub fn random_perturb_pair_with_draws(
    clip: &AudioClip,
    cfg: &PerturbConfig,
) -> Result<([PerturbDraw; 2], AudioClip, AudioClip)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let da = PerturbDraw::sample(cfg, clip.sample_rate(), &mut rng);
    let db = PerturbDraw::sample(cfg, clip.sample_rate(), &mut rng);
    let a = da.apply(clip)?;
    let b = db.apply(clip)?;
    Ok(([da, db], a, b))
}
