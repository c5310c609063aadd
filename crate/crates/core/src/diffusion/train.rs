use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{q_sample, standard_normal, ConditionSet, NoiseSchedule, ToyDenoiser};
use crate::audio::AudioClip;
use crate::contrastive::{contrastive_loss_with_grad, ramp_weight, FeaturePairBatch};
use crate::error::{Error, Result};
use crate::features::{build_mel_filterbank, log_mel, stft, FrameConfig, MelFilterbank};
use crate::perturb::{random_perturb_pair, PerturbConfig};

/// One clean frame and its conditioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub x0: Vec<f64>,
    pub cond: ConditionSet,
}

/// Copies `data` with every speaker embedding replaced by `embedding`.
pub fn with_speaker(data: &[TrainExample], embedding: &[f64]) -> Vec<TrainExample> {
    data.iter()
        .map(|ex| TrainExample {
            x0: ex.x0.clone(),
            cond: ConditionSet {
                speaker_embedding: Some(embedding.to_vec()),
                ..ex.cond.clone()
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub lr: f64,
    /// Probability of training a draw in unconditional mode.
    pub p_uncond: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 500,
            lr: 0.02,
            p_uncond: 0.1,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_uncond) {
            return Err(Error::invalid("p_uncond must lie in [0, 1]"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::invalid("need a positive learning rate and batch size"));
        }
        Ok(())
    }
}

/// Supplies paired linguistic features of the same frames under two
/// different perturbations. Rows are `linguistic_dim` wide.
pub trait ContrastiveSource {
    fn pairs(&mut self, step: u64) -> Result<FeaturePairBatch>;
}

/// The contrastive part of the objective: a pair source plus the
/// temperature and the weight ramp.
pub struct ContrastiveTerm<'a> {
    pub source: &'a mut dyn ContrastiveSource,
    pub tau: f64,
    pub ramp_rate: f64,
    pub ramp_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Mean squared ε error over the minibatch.
    pub l2: f64,
    /// `None` when the contrastive weight was zero or no source was given.
    pub contrastive: Option<f64>,
    pub weight: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<StepRecord>,
    /// Denoiser evaluations made in unconditional mode.
    pub uncond_evaluations: u64,
}

impl TrainReport {
    pub fn l2_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.l2).collect()
    }
}

struct Draw {
    idx: usize,
    t: usize,
    eps: Vec<f64>,
}

fn draw(rng: &mut ChaCha8Rng, n: usize, steps: usize, dim: usize) -> Draw {
    let idx = rng.random_range(0..n);
    let t = rng.random_range(1..=steps);
    let eps = standard_normal(rng, dim);
    Draw { idx, t, eps }
}

fn check_data(model: &ToyDenoiser, data: &[TrainExample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ex in data {
        if ex.x0.len() != model.config().x_dim {
            return Err(Error::ShapeMismatch(format!(
                "example has {} values, model generates {}",
                ex.x0.len(),
                model.config().x_dim
            )));
        }
        ex.cond.validate()?;
    }
    Ok(())
}

/// Minibatch SGD on `‖ε − ε̂‖²` plus the ramped contrastive term.
///
/// The contrastive features pass through the linguistic columns of the first
/// layer, so that block is the only one the contrastive gradient touches.
pub fn train_toy(
    model: &ToyDenoiser,
    data: &[TrainExample],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    mut contrastive: Option<ContrastiveTerm<'_>>,
) -> Result<(ToyDenoiser, TrainReport)> {
    cfg.validate()?;
    check_data(model, data)?;
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = model.config().x_dim;
    let cols = model.config().linguistic_cols();
    let inv_b = 1.0 / cfg.batch_size as f64;
    let mut history = Vec::with_capacity(cfg.steps as usize);
    let mut uncond_evaluations = 0;

    for step in 0..cfg.steps {
        let mut grads = super::toy::ToyParams::zeros(model.config());
        let mut l2 = 0.0;
        for _ in 0..cfg.batch_size {
            let d = draw(&mut rng, data.len(), sched.steps(), dim);
            let drop = rng.random::<f64>() < cfg.p_uncond;
            let ex = &data[d.idx];
            let x_t = q_sample(&ex.x0, d.t, &d.eps, sched)?;
            if drop {
                uncond_evaluations += 1;
            }
            let (loss, g) = model.loss_and_grad(&x_t, d.t, &ex.cond, drop, &d.eps)?;
            l2 += loss * inv_b;
            grads.add_scaled(inv_b, &g);
        }

        let mut record = StepRecord {
            l2,
            contrastive: None,
            weight: 0.0,
            total: l2,
        };
        if let Some(term) = contrastive.as_mut() {
            let weight = ramp_weight(step, term.ramp_rate, term.ramp_cap);
            record.weight = weight;
            if weight > 0.0 {
                let pairs = term.source.pairs(step)?;
                let p = model.linguistic_projection(&pairs.z)?;
                let p_prime = model.linguistic_projection(&pairs.z_prime)?;
                let cg = contrastive_loss_with_grad(&FeaturePairBatch::new(p, p_prime)?, term.tau)?;
                let d_block = cg.d_z.t().dot(&pairs.z) + cg.d_z_prime.t().dot(&pairs.z_prime);
                let mut block = grads.w1.slice_mut(s![.., cols.clone()]);
                block.scaled_add(weight, &d_block);
                record.contrastive = Some(cg.loss);
                record.total = l2 + weight * cg.loss;
            }
        }
        model.params_mut().add_scaled(-cfg.lr, &grads);
        history.push(record);
    }
    Ok((
        model,
        TrainReport {
            history,
            uncond_evaluations,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub iterations: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            iterations: 500,
            lr: 0.02,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// Adapts a trained model to one target speaker by updating only the CLN
/// parameters. Every example is conditioned on `target_embedding`; there is
/// no condition dropout and no contrastive term.
///
/// Returns the adapted model and its per-iteration L2 history.
pub fn finetune_cln(
    model: &ToyDenoiser,
    data: &[TrainExample],
    sched: &NoiseSchedule,
    cfg: &FinetuneConfig,
    target_embedding: &[f64],
) -> Result<(ToyDenoiser, Vec<f64>)> {
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) || cfg.batch_size == 0 {
        return Err(Error::invalid("need a positive learning rate and batch size"));
    }
    let data = with_speaker(data, target_embedding);
    check_data(model, &data)?;
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = model.config().x_dim;
    let inv_b = 1.0 / cfg.batch_size as f64;
    let mut history = Vec::with_capacity(cfg.iterations as usize);
    for _ in 0..cfg.iterations {
        let mut grads = super::ClnParams::zeros(model.config().hidden, model.config().speaker_dim);
        let mut l2 = 0.0;
        for _ in 0..cfg.batch_size {
            let d = draw(&mut rng, data.len(), sched.steps(), dim);
            let ex = &data[d.idx];
            let x_t = q_sample(&ex.x0, d.t, &d.eps, sched)?;
            let (loss, g) = model.loss_and_grad(&x_t, d.t, &ex.cond, false, &d.eps)?;
            l2 += loss * inv_b;
            for (a, b) in grads.iter_mut().zip(g.cln.iter()) {
                *a += inv_b * b;
            }
        }
        for (p, g) in model.params_mut().cln.iter_mut().zip(grads.iter()) {
            *p -= cfg.lr * g;
        }
        history.push(l2);
    }
    Ok((model, history))
}

/// Mean conditional `‖ε − ε̂‖²` over `draws` seeded (example, t, ε) draws.
pub fn evaluate_l2(
    model: &ToyDenoiser,
    data: &[TrainExample],
    sched: &NoiseSchedule,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    check_data(model, data)?;
    if draws == 0 {
        return Err(Error::invalid("need at least one evaluation draw"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..draws {
        let d = draw(&mut rng, data.len(), sched.steps(), model.config().x_dim);
        let ex = &data[d.idx];
        let x_t = q_sample(&ex.x0, d.t, &d.eps, sched)?;
        total += model.loss_and_grad(&x_t, d.t, &ex.cond, false, &d.eps)?.0;
    }
    Ok(total / draws as f64)
}

/// Synthetic pairs: `z ~ N(0, I)` and `z' = z + noise·N(0, I)`.
pub struct GaussianPairSource {
    dim: usize,
    batch: usize,
    noise: f64,
    rng: ChaCha8Rng,
}

impl GaussianPairSource {
    pub fn new(dim: usize, batch: usize, noise: f64, seed: u64) -> Result<Self> {
        if dim == 0 || batch == 0 {
            return Err(Error::invalid("pair source needs positive dim and batch"));
        }
        Ok(GaussianPairSource {
            dim,
            batch,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl ContrastiveSource for GaussianPairSource {
    fn pairs(&mut self, _step: u64) -> Result<FeaturePairBatch> {
        let n = self.batch * self.dim;
        let z = Array2::from_shape_vec((self.batch, self.dim), standard_normal(&mut self.rng, n))
            .expect("shape matches length");
        let jitter = standard_normal(&mut self.rng, n);
        let mut z_prime = z.clone();
        for (v, j) in z_prime.iter_mut().zip(jitter) {
            *v += self.noise * j;
        }
        FeaturePairBatch::new(z, z_prime)
    }
}

/// Pairs of log-mel frames from two random perturbations of the same clip.
///
/// Each call picks a clip, draws a perturbation pair with a fresh seed, and
/// takes `batch` frame indices shared by both versions.
pub struct PerturbedMelSource {
    clips: Vec<AudioClip>,
    perturb: PerturbConfig,
    frame: FrameConfig,
    fb: MelFilterbank,
    batch: usize,
    rng: ChaCha8Rng,
}

impl PerturbedMelSource {
    pub fn new(clips: Vec<AudioClip>, perturb: PerturbConfig, n_mels: usize, batch: usize, seed: u64) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batch == 0 {
            return Err(Error::invalid("batch must be positive"));
        }
        perturb.validate()?;
        let frame = FrameConfig::default();
        for c in &clips {
            c.require_rate(frame.sample_rate)?;
            if frame.num_frames(c.len()) == 0 {
                return Err(Error::TooShort {
                    needed: frame.win_length,
                    actual: c.len(),
                });
            }
        }
        let fb = build_mel_filterbank(&frame, n_mels, 0.0, frame.sample_rate as f64 / 2.0)?;
        Ok(PerturbedMelSource {
            clips,
            perturb,
            frame,
            fb,
            batch,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl ContrastiveSource for PerturbedMelSource {
    fn pairs(&mut self, _step: u64) -> Result<FeaturePairBatch> {
        let clip = &self.clips[self.rng.random_range(0..self.clips.len())];
        let cfg = PerturbConfig {
            seed: self.rng.random(),
            ..self.perturb.clone()
        };
        let (a, b) = random_perturb_pair(clip, &cfg)?;
        let ma = log_mel(&stft(&a, &self.frame)?, &self.fb)?.frames;
        let mb = log_mel(&stft(&b, &self.frame)?, &self.fb)?.frames;
        let frames = ma.nrows().min(mb.nrows());
        let n_mels = self.fb.n_mels();
        let mut z = Array2::zeros((self.batch, n_mels));
        let mut z_prime = Array2::zeros((self.batch, n_mels));
        for i in 0..self.batch {
            let f = self.rng.random_range(0..frames);
            z.row_mut(i).assign(&ma.row(f));
            z_prime.row_mut(i).assign(&mb.row(f));
        }
        FeaturePairBatch::new(z, z_prime)
    }
}
