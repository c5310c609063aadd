use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cln::{cln_backward, cln_forward, ClnCache, ClnParams};
use super::{ConditionSet, Denoiser};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::svcf::Tensor;

/// Width of the sinusoidal step embedding.
pub const TIME_EMBED_DIM: usize = 8;

const INDEX_FILE: &str = "index.json";
const INDEX_FORMAT: &str = "svcforge-toy-denoiser";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Size of the generated frame.
    pub x_dim: usize,
    pub linguistic_dim: usize,
    pub hidden: usize,
    pub speaker_dim: usize,
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x_dim == 0 || self.hidden < 2 || self.speaker_dim == 0 {
            return Err(Error::invalid(
                "toy denoiser needs x_dim >= 1, hidden >= 2 and speaker_dim >= 1",
            ));
        }
        Ok(())
    }

    /// Length of the condition summary: linguistic features, log-F0, VUV,
    /// loudness.
    pub fn summary_dim(&self) -> usize {
        self.linguistic_dim + 3
    }

    pub fn input_dim(&self) -> usize {
        self.x_dim + TIME_EMBED_DIM + self.summary_dim()
    }

    /// Column range of `W1` that reads the linguistic features.
    pub fn linguistic_cols(&self) -> std::ops::Range<usize> {
        let start = self.x_dim + TIME_EMBED_DIM;
        start..start + self.linguistic_dim
    }
}

/// All trainable tensors of a [`ToyDenoiser`]. Also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub cln: ClnParams,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

pub type ToyGrads = ToyParams;

impl ToyParams {
    pub fn zeros(cfg: &ToyConfig) -> Self {
        ToyParams {
            w1: Array2::zeros((cfg.hidden, cfg.input_dim())),
            b1: Array1::zeros(cfg.hidden),
            cln: ClnParams::zeros(cfg.hidden, cfg.speaker_dim),
            w2: Array2::zeros((cfg.x_dim, cfg.hidden)),
            b2: Array1::zeros(cfg.x_dim),
        }
    }

    /// Every scalar, ordered `w1, b1, cln, w2, b2`.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.cln.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.cln.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.cln.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += k · other`.
    pub fn add_scaled(&mut self, k: f64, other: &ToyParams) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += k * b;
        }
    }
}

struct Forward {
    u: Array1<f64>,
    cln: ClnCache,
    a: Array1<f64>,
    out: Array1<f64>,
}

/// Two dense layers with a conditional layer norm and `tanh` between them.
///
/// Input is `[x_t, time embedding, condition summary]`. The CLN reads the
/// speaker embedding; unconditional mode and speakerless conditions feed it
/// the zero vector, so the null speaker is whatever `b_γ`, `b_β` learn.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    cfg: ToyConfig,
    params: ToyParams,
}

pub fn time_embedding(t: usize) -> [f64; TIME_EMBED_DIM] {
    let mut out = [0.0; TIME_EMBED_DIM];
    for k in 0..TIME_EMBED_DIM / 2 {
        let phase = t as f64 * 10f64.powi(-(k as i32));
        out[2 * k] = phase.sin();
        out[2 * k + 1] = phase.cos();
    }
    out
}

impl ToyDenoiser {
    /// Seeded initialization.
    pub fn new(cfg: ToyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ToyParams::zeros(&cfg);
        let s1 = 1.0 / (cfg.input_dim() as f64).sqrt();
        params.w1.iter_mut().for_each(|v| *v = s1 * rng.sample::<f64, _>(StandardNormal));
        params.cln = ClnParams::random(cfg.hidden, cfg.speaker_dim, 0.1, &mut rng);
        let s2 = 0.5 / (cfg.hidden as f64).sqrt();
        params.w2.iter_mut().for_each(|v| *v = s2 * rng.sample::<f64, _>(StandardNormal));
        Ok(ToyDenoiser { cfg, params })
    }

    pub fn from_params(cfg: ToyConfig, params: ToyParams) -> Result<Self> {
        cfg.validate()?;
        let z = ToyParams::zeros(&cfg);
        if params.w1.dim() != z.w1.dim()
            || params.b1.len() != z.b1.len()
            || params.w2.dim() != z.w2.dim()
            || params.b2.len() != z.b2.len()
            || params.cln.features() != cfg.hidden
            || params.cln.emb_dim() != cfg.speaker_dim
        {
            return Err(Error::ShapeMismatch("parameters do not match config".into()));
        }
        params.cln.validate()?;
        if !params.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(ToyDenoiser { cfg, params })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ToyParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ToyParams {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn input(&self, x_t: &[f64], t: usize, cond: &ConditionSet) -> Result<Array1<f64>> {
        if x_t.len() != self.cfg.x_dim {
            return Err(Error::ShapeMismatch(format!(
                "model generates {} values, got x_t[{}]",
                self.cfg.x_dim,
                x_t.len()
            )));
        }
        if cond.linguistic.len() != self.cfg.linguistic_dim {
            return Err(Error::ShapeMismatch(format!(
                "model reads {} linguistic features, got {}",
                self.cfg.linguistic_dim,
                cond.linguistic.len()
            )));
        }
        let mut u = Vec::with_capacity(self.cfg.input_dim());
        u.extend_from_slice(x_t);
        u.extend_from_slice(&time_embedding(t));
        u.extend(cond.summary());
        Ok(Array1::from(u))
    }

    fn speaker(&self, cond: &ConditionSet, unconditional: bool) -> Result<Vec<f64>> {
        match (&cond.speaker_embedding, unconditional) {
            (Some(e), false) => {
                if e.len() != self.cfg.speaker_dim {
                    return Err(Error::ShapeMismatch(format!(
                        "model expects {}-dim speaker embeddings, got {}",
                        self.cfg.speaker_dim,
                        e.len()
                    )));
                }
                Ok(e.clone())
            }
            _ => Ok(vec![0.0; self.cfg.speaker_dim]),
        }
    }

    fn forward(&self, x_t: &[f64], t: usize, cond: &ConditionSet, unconditional: bool) -> Result<Forward> {
        let u = self.input(x_t, t, cond)?;
        let e = self.speaker(cond, unconditional)?;
        let h = self.params.w1.dot(&u) + &self.params.b1;
        let (n, cln) = cln_forward(h.as_slice().expect("contiguous"), &e, &self.params.cln)?;
        let a = n.mapv(f64::tanh);
        let out = self.params.w2.dot(&a) + &self.params.b2;
        Ok(Forward { u, cln, a, out })
    }

    /// `‖eps − predict_eps(x_t)‖²` and its gradient for every parameter.
    pub fn loss_and_grad(
        &self,
        x_t: &[f64],
        t: usize,
        cond: &ConditionSet,
        unconditional: bool,
        eps: &[f64],
    ) -> Result<(f64, ToyGrads)> {
        let f = self.forward(x_t, t, cond, unconditional)?;
        if eps.len() != f.out.len() {
            return Err(Error::ShapeMismatch("eps does not match output".into()));
        }
        let resid: Array1<f64> = f.out.iter().zip(eps).map(|(o, e)| o - e).collect();
        let loss = resid.dot(&resid);
        let d_out = resid * 2.0;

        let outer = |col: &Array1<f64>, row: &Array1<f64>| {
            col.view()
                .insert_axis(Axis(1))
                .dot(&row.view().insert_axis(Axis(0)))
        };
        let w2 = outer(&d_out, &f.a);
        let d_a = self.params.w2.t().dot(&d_out);
        let d_n = d_a * f.a.mapv(|a| 1.0 - a * a);
        let (d_h, cln) = cln_backward(&f.cln, &d_n);
        let w1 = outer(&d_h, &f.u);
        Ok((
            loss,
            ToyParams {
                w1,
                b1: d_h,
                cln,
                w2,
                b2: d_out,
            },
        ))
    }

    /// Rows of `z` (N × linguistic_dim) mapped through the linguistic block
    /// of `W1`, giving N × hidden.
    pub fn linguistic_projection(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.cfg.linguistic_dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} feature columns, got {}",
                self.cfg.linguistic_dim,
                z.ncols()
            )));
        }
        let block = self.params.w1.slice(ndarray::s![.., self.cfg.linguistic_cols()]);
        Ok(z.dot(&block.t()))
    }

    fn digest<'a>(parts: impl Iterator<Item = (&'a str, Box<dyn Iterator<Item = &'a f64> + 'a>)>) -> String {
        let mut h = Sha256::new();
        for (name, values) in parts {
            h.update(name.as_bytes());
            for v in values {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// SHA-256 over every non-CLN parameter, bit-exact.
    pub fn backbone_digest(&self) -> String {
        let p = &self.params;
        Self::digest(
            [
                ("w1", Box::new(p.w1.iter()) as Box<dyn Iterator<Item = &f64>>),
                ("b1", Box::new(p.b1.iter())),
                ("w2", Box::new(p.w2.iter())),
                ("b2", Box::new(p.b2.iter())),
            ]
            .into_iter(),
        )
    }

    /// SHA-256 over the CLN parameters.
    pub fn cln_digest(&self) -> String {
        Self::digest(std::iter::once((
            "cln",
            Box::new(self.params.cln.iter()) as Box<dyn Iterator<Item = &f64>>,
        )))
    }

    fn named_tensors(&self) -> Vec<(&'static str, Vec<usize>, Vec<f64>)> {
        let p = &self.params;
        let mat = |a: &Array2<f64>| (vec![a.nrows(), a.ncols()], a.iter().copied().collect());
        let vec = |a: &Array1<f64>| (vec![a.len()], a.to_vec());
        let mut out = Vec::new();
        for (name, (dims, data)) in [
            ("w1", mat(&p.w1)),
            ("b1", vec(&p.b1)),
            ("cln.w_gamma", mat(&p.cln.w_gamma)),
            ("cln.b_gamma", vec(&p.cln.b_gamma)),
            ("cln.w_beta", mat(&p.cln.w_beta)),
            ("cln.b_beta", vec(&p.cln.b_beta)),
            ("w2", mat(&p.w2)),
            ("b2", vec(&p.b2)),
        ] {
            out.push((name, dims, data));
        }
        out
    }

    /// One SVCF file per parameter plus `index.json`, all written atomically.
    /// Values are stored as `f32`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        for (name, dims, data) in self.named_tensors() {
            let file = format!("{name}.svcf");
            Tensor::from_f64(dims.clone(), &data)?.write(dir.join(&file))?;
            entries.push(IndexEntry {
                name: name.to_string(),
                file,
                dims,
            });
        }
        let index = Index {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            config: self.cfg,
            tensors: entries,
        };
        let mut json = serde_json::to_vec_pretty(&index)?;
        json.push(b'\n');
        write_atomic(&dir.join(INDEX_FILE), &json)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join(INDEX_FILE);
        if !index_path.exists() {
            return Err(Error::MissingFile(index_path));
        }
        let bytes = std::fs::read(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: Index = serde_json::from_slice(&bytes)?;
        if index.format != INDEX_FORMAT || index.version != INDEX_VERSION {
            return Err(Error::MalformedHeader(format!(
                "unsupported model index {} v{}",
                index.format, index.version
            )));
        }
        let cfg = index.config;
        cfg.validate()?;
        let mut params = ToyParams::zeros(&cfg);
        let template = ToyDenoiser {
            cfg,
            params: params.clone(),
        }
        .named_tensors();
        for (name, dims, _) in template {
            let entry = index
                .tensors
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::MalformedHeader(format!("model index lacks {name}")))?;
            let tensor = Tensor::read(dir.join(&entry.file))?;
            if tensor.dims() != dims.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {dims:?}, file has {:?}",
                    tensor.dims()
                )));
            }
            let values = tensor.to_f64();
            let target: Box<dyn Iterator<Item = &mut f64>> = match name {
                "w1" => Box::new(params.w1.iter_mut()),
                "b1" => Box::new(params.b1.iter_mut()),
                "cln.w_gamma" => Box::new(params.cln.w_gamma.iter_mut()),
                "cln.b_gamma" => Box::new(params.cln.b_gamma.iter_mut()),
                "cln.w_beta" => Box::new(params.cln.w_beta.iter_mut()),
                "cln.b_beta" => Box::new(params.cln.b_beta.iter_mut()),
                "w2" => Box::new(params.w2.iter_mut()),
                _ => Box::new(params.b2.iter_mut()),
            };
            for (dst, src) in target.zip(values) {
                *dst = src;
            }
        }
        ToyDenoiser::from_params(cfg, params)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    file: String,
    dims: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    format: String,
    version: u32,
    config: ToyConfig,
    tensors: Vec<IndexEntry>,
}

impl Denoiser for ToyDenoiser {
    fn predict_eps(&self, x_t: &[f64], t: usize, cond: &ConditionSet, unconditional: bool) -> Result<Vec<f64>> {
        Ok(self.forward(x_t, t, cond, unconditional)?.out.to_vec())
    }
}
