use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Variance floor inside the normalizer.
pub const LN_EPS: f64 = 1e-5;

/// Affine maps from a speaker embedding `e` to per-feature scale
/// `γ(e) = W_γ·e + b_γ` and shift `β(e) = W_β·e + b_β`.
///
/// The same struct doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ClnParams {
    pub w_gamma: Array2<f64>,
    pub b_gamma: Array1<f64>,
    pub w_beta: Array2<f64>,
    pub b_beta: Array1<f64>,
}

impl ClnParams {
    /// `γ ≡ 1`, `β ≡ 0` for every embedding.
    pub fn identity(features: usize, emb_dim: usize) -> Self {
        ClnParams {
            w_gamma: Array2::zeros((features, emb_dim)),
            b_gamma: Array1::ones(features),
            w_beta: Array2::zeros((features, emb_dim)),
            b_beta: Array1::zeros(features),
        }
    }

    pub fn zeros(features: usize, emb_dim: usize) -> Self {
        ClnParams {
            w_gamma: Array2::zeros((features, emb_dim)),
            b_gamma: Array1::zeros(features),
            w_beta: Array2::zeros((features, emb_dim)),
            b_beta: Array1::zeros(features),
        }
    }

    /// Identity affine plus Gaussian jitter of standard deviation `scale`.
    pub fn random(features: usize, emb_dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::identity(features, emb_dim);
        for v in p
            .w_gamma
            .iter_mut()
            .chain(p.b_gamma.iter_mut())
            .chain(p.w_beta.iter_mut())
            .chain(p.b_beta.iter_mut())
        {
            *v += scale * rng.sample::<f64, _>(StandardNormal);
        }
        p
    }

    pub fn features(&self) -> usize {
        self.b_gamma.len()
    }

    pub fn emb_dim(&self) -> usize {
        self.w_gamma.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (f, d) = (self.features(), self.emb_dim());
        if self.w_gamma.dim() != (f, d) || self.w_beta.dim() != (f, d) || self.b_beta.len() != f {
            return Err(Error::ShapeMismatch("inconsistent CLN parameter shapes".into()));
        }
        if !self.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite CLN parameter"));
        }
        Ok(())
    }

    /// Every scalar in a fixed order: `W_γ`, `b_γ`, `W_β`, `b_β`.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w_gamma
            .iter()
            .chain(self.b_gamma.iter())
            .chain(self.w_beta.iter())
            .chain(self.b_beta.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w_gamma
            .iter_mut()
            .chain(self.b_gamma.iter_mut())
            .chain(self.w_beta.iter_mut())
            .chain(self.b_beta.iter_mut())
    }

    pub fn len(&self) -> usize {
        2 * self.features() * (self.emb_dim() + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gamma_beta(&self, e: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
        (
            self.w_gamma.dot(e) + &self.b_gamma,
            self.w_beta.dot(e) + &self.b_beta,
        )
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ClnCache {
    pub x_hat: Array1<f64>,
    pub inv_std: f64,
    pub gamma: Array1<f64>,
    pub e: Array1<f64>,
}

fn check_dims(h: &[f64], e: &[f64], p: &ClnParams) -> Result<()> {
    if h.len() != p.features() || e.len() != p.emb_dim() {
        return Err(Error::ShapeMismatch(format!(
            "CLN expects h[{}] and e[{}], got h[{}] and e[{}]",
            p.features(),
            p.emb_dim(),
            h.len(),
            e.len()
        )));
    }
    if h.is_empty() {
        return Err(Error::invalid("cannot normalize an empty vector"));
    }
    Ok(())
}

pub fn cln_forward(h: &[f64], e: &[f64], p: &ClnParams) -> Result<(Array1<f64>, ClnCache)> {
    check_dims(h, e, p)?;
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let var = h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let x_hat: Array1<f64> = h.iter().map(|v| (v - mean) * inv_std).collect();
    let e = Array1::from(e.to_vec());
    let (gamma, beta) = p.gamma_beta(&e);
    let out = &gamma * &x_hat + &beta;
    Ok((
        out,
        ClnCache {
            x_hat,
            inv_std,
            gamma,
            e,
        },
    ))
}

/// `γ(e) ⊙ (h − mean h)/√(var h + ε) + β(e)`.
pub fn conditional_layer_norm(h: &[f64], e: &[f64], p: &ClnParams) -> Result<Vec<f64>> {
    Ok(cln_forward(h, e, p)?.0.to_vec())
}

/// Given `∂L/∂out`, returns `∂L/∂h` and the parameter gradients.
pub fn cln_backward(cache: &ClnCache, d_out: &Array1<f64>) -> (Array1<f64>, ClnParams) {
    let d_gamma = d_out * &cache.x_hat;
    let d_beta = d_out.clone();
    let outer = |v: &Array1<f64>| {
        let col = v.view().insert_axis(ndarray::Axis(1));
        let row = cache.e.view().insert_axis(ndarray::Axis(0));
        col.dot(&row)
    };
    let grads = ClnParams {
        w_gamma: outer(&d_gamma),
        w_beta: outer(&d_beta),
        b_gamma: d_gamma,
        b_beta: d_beta,
    };
    let d_xhat = d_out * &cache.gamma;
    let n = d_xhat.len() as f64;
    let mean_d = d_xhat.sum() / n;
    let mean_dx = (&d_xhat * &cache.x_hat).sum() / n;
    let d_h = (&d_xhat - mean_d - &cache.x_hat * mean_dx) * cache.inv_std;
    (d_h, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_affine_is_plain_layer_norm() {
        let p = ClnParams::identity(6, 3);
        let h = [1.0, 4.0, -2.0, 0.5, 3.0, 7.0];
        let out = conditional_layer_norm(&h, &[0.3, -0.2, 0.9], &p).unwrap();
        let mean = out.iter().sum::<f64>() / 6.0;
        let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-12);
        let raw_var = {
            let m = h.iter().sum::<f64>() / 6.0;
            h.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 6.0
        };
        assert!((var - raw_var / (raw_var + LN_EPS)).abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn constant_input_yields_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ClnParams::random(5, 2, 0.5, &mut rng);
        let e = [0.6, 0.8];
        let out = conditional_layer_norm(&[2.5; 5], &e, &p).unwrap();
        let beta = p.w_beta.dot(&Array1::from(e.to_vec())) + &p.b_beta;
        for (o, b) in out.iter().zip(beta.iter()) {
            assert_eq!(o, b);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = ClnParams::identity(4, 2);
        assert!(conditional_layer_norm(&[1.0; 3], &[0.0, 1.0], &p).is_err());
        assert!(conditional_layer_norm(&[1.0; 4], &[1.0], &p).is_err());
    }

    /// L = Σ c_i · out_i² makes every output coordinate matter differently.
    fn scalar_loss(h: &[f64], e: &[f64], p: &ClnParams, c: &[f64]) -> f64 {
        conditional_layer_norm(h, e, p)
            .unwrap()
            .iter()
            .zip(c)
            .map(|(o, w)| w * o * o)
            .sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (f, d) = (7, 4);
        let p = ClnParams::random(f, d, 0.4, &mut rng);
        let h: Vec<f64> = (0..f).map(|_| rng.sample(StandardNormal)).collect();
        let e: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let c: Vec<f64> = (0..f).map(|i| 0.5 + i as f64 * 0.3).collect();

        let (out, cache) = cln_forward(&h, &e, &p).unwrap();
        let d_out: Array1<f64> = out.iter().zip(&c).map(|(o, w)| 2.0 * w * o).collect();
        let (d_h, grads) = cln_backward(&cache, &d_out);

        let step = 1e-5;
        let mut worst: f64 = 0.0;
        let n_params = p.len();
        for k in 0..n_params {
            let mut plus = p.clone();
            let mut minus = p.clone();
            *plus.iter_mut().nth(k).unwrap() += step;
            *minus.iter_mut().nth(k).unwrap() -= step;
            let fd = (scalar_loss(&h, &e, &plus, &c) - scalar_loss(&h, &e, &minus, &c)) / (2.0 * step);
            worst = worst.max(rel_err(*grads.iter().nth(k).unwrap(), fd));
        }
        for i in 0..f {
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[i] += step;
            hm[i] -= step;
            let fd = (scalar_loss(&hp, &e, &p, &c) - scalar_loss(&hm, &e, &p, &c)) / (2.0 * step);
            worst = worst.max(rel_err(d_h[i], fd));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }
}
