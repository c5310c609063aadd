//! DDPM machinery for mel-frame generation.
//!
//! * [`NoiseSchedule`] / [`q_sample`]: the forward process.
//! * [`Denoiser`], [`guided_eps`], [`reverse_step`], [`sample`]: ancestral
//!   sampling with classifier-free guidance.
//! * [`AnalyticGaussianDenoiser`]: closed-form optimal ε-predictor for
//!   Gaussian data, used as a correctness oracle for the sampler.
//! * [`conditional_layer_norm`]: layer norm with speaker-conditioned affine.
//! * [`ToyDenoiser`], [`train_toy`], [`finetune_cln`]: a small trainable
//!   denoiser exercising the pre-training and CLN-only fine-tuning contracts.
//!
//! Everything here is `f64`. Steps are 1-based (`t ∈ 1..=T`).

mod cln;
mod sampler;
mod schedule;
mod toy;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cln::{cln_backward, cln_forward, conditional_layer_norm, ClnCache, ClnParams, LN_EPS};
pub use sampler::{guided_eps, reverse_step, sample, AnalyticGaussianDenoiser};
pub use schedule::{linear_schedule, q_sample, NoiseSchedule};
pub use toy::{time_embedding, ToyConfig, ToyDenoiser, ToyGrads, ToyParams, TIME_EMBED_DIM};
pub use train::{
    evaluate_l2, finetune_cln, train_toy, with_speaker, ContrastiveSource, ContrastiveTerm,
    FinetuneConfig, GaussianPairSource, PerturbedMelSource, StepRecord, TrainConfig, TrainExample, TrainReport,
};

/// Per-frame conditioning: linguistic features, log-F0 with voicing flag,
/// loudness and an optional unit-norm speaker embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSet {
    pub linguistic: Vec<f64>,
    /// `[log_f0, vuv]`; log-F0 is conventionally 0 when unvoiced.
    pub log_f0_vuv: [f64; 2],
    pub loudness: f64,
    pub speaker_embedding: Option<Vec<f64>>,
}

impl ConditionSet {
    /// All-zero features with no speaker.
    pub fn empty(linguistic_dim: usize) -> Self {
        ConditionSet {
            linguistic: vec![0.0; linguistic_dim],
            log_f0_vuv: [0.0, 0.0],
            loudness: 0.0,
            speaker_embedding: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = &self.speaker_embedding {
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "speaker embedding must have unit norm, got {norm}"
                )));
            }
        }
        let finite = self
            .linguistic
            .iter()
            .chain(&self.log_f0_vuv)
            .chain(std::iter::once(&self.loudness))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("non-finite condition value"));
        }
        Ok(())
    }

    /// Linguistic features followed by log-F0, VUV and loudness.
    pub fn summary(&self) -> Vec<f64> {
        let mut s = self.linguistic.clone();
        s.extend_from_slice(&self.log_f0_vuv);
        s.push(self.loudness);
        s
    }
}

/// An ε-predictor. `unconditional` asks for the speaker-free prediction used
/// by classifier-free guidance.
pub trait Denoiser {
    fn predict_eps(
        &self,
        x_t: &[f64],
        t: usize,
        cond: &ConditionSet,
        unconditional: bool,
    ) -> Result<Vec<f64>>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_eps(&self, x_t: &[f64], t: usize, cond: &ConditionSet, unconditional: bool) -> Result<Vec<f64>> {
        (**self).predict_eps(x_t, t, cond, unconditional)
    }
}

pub(crate) fn standard_normal(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// A seeded standard-normal vector scaled to unit L2 norm.
pub fn pseudo_speaker_embedding(seed: u64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = standard_normal(&mut rng, dim);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_embedding() {
        for dim in [1, 2, 16, 256] {
            let e = pseudo_speaker_embedding(9, dim).unwrap();
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            assert_eq!(e, pseudo_speaker_embedding(9, dim).unwrap());
        }
        let one = pseudo_speaker_embedding(3, 1).unwrap();
        assert!(one[0] == 1.0 || one[0] == -1.0);
        assert!(pseudo_speaker_embedding(3, 0).is_err());
        assert_ne!(pseudo_speaker_embedding(1, 8).unwrap(), pseudo_speaker_embedding(2, 8).unwrap());
    }

    #[test]
    fn condition_validation() {
        let mut c = ConditionSet::empty(4);
        c.validate().unwrap();
        c.speaker_embedding = Some(vec![0.5, 0.5]);
        assert!(c.validate().is_err());
        c.speaker_embedding = Some(pseudo_speaker_embedding(0, 2).unwrap());
        c.validate().unwrap();
        assert_eq!(c.summary().len(), 7);
    }
}
