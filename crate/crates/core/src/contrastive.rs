//! Perturbation-invariance contrastive objective and its weight ramp.
//!
//! Row `i` of `Z` and row `i` of `Z'` are features of the same frame under
//! two different perturbations. The loss is symmetric InfoNCE over cosine
//! similarities `S_ij = cos(z_i, z'_j)` at temperature `τ`:
//!
//! ```text
//! L = -(1/2N) Σ_i [ log softmax_j(S_i· / τ)_i + log softmax_j(S_·i / τ)_i ]
//! ```

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_RAMP_RATE: f64 = 1e-5;
pub const DEFAULT_RAMP_CAP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePairBatch {
    pub z: Array2<f64>,
    pub z_prime: Array2<f64>,
}

impl FeaturePairBatch {
    pub fn new(z: Array2<f64>, z_prime: Array2<f64>) -> Result<Self> {
        if z.dim() != z_prime.dim() {
            return Err(Error::ShapeMismatch(format!(
                "paired feature matrices differ: {:?} vs {:?}",
                z.dim(),
                z_prime.dim()
            )));
        }
        if z.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if z.iter().chain(z_prime.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(FeaturePairBatch { z, z_prime })
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }
}

/// Loss value and its gradient with respect to both feature matrices.
#[derive(Debug, Clone)]
pub struct ContrastiveGrad {
    pub loss: f64,
    pub d_z: Array2<f64>,
    pub d_z_prime: Array2<f64>,
}

fn row_norms(m: &Array2<f64>) -> Result<Array1<f64>> {
    let norms = m.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if norms.iter().any(|&n| n == 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(norms)
}

/// Row-wise softmax of `logits` (or column-wise when `axis` is 0), in place.
fn softmax_along(logits: &mut Array2<f64>, axis: Axis) {
    for mut lane in logits.lanes_mut(axis) {
        let max = lane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lane.mapv_inplace(|v| (v - max).exp());
        let sum = lane.sum();
        lane.mapv_inplace(|v| v / sum);
    }
}

fn log_softmax_diag(logits: &Array2<f64>, axis: Axis) -> f64 {
    logits
        .lanes(axis)
        .into_iter()
        .enumerate()
        .map(|(i, lane)| {
            let max = lane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + lane.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lane[i] - lse
        })
        .sum()
}

pub fn contrastive_loss(batch: &FeaturePairBatch, tau: f64) -> Result<f64> {
    Ok(contrastive_loss_with_grad(batch, tau)?.loss)
}

pub fn contrastive_loss_with_grad(batch: &FeaturePairBatch, tau: f64) -> Result<ContrastiveGrad> {
    if !(tau > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let n = batch.len() as f64;
    let nz = row_norms(&batch.z)?;
    let nzp = row_norms(&batch.z_prime)?;
    let u = &batch.z / &nz.view().insert_axis(Axis(1));
    let v = &batch.z_prime / &nzp.view().insert_axis(Axis(1));
    let logits = u.dot(&v.t()) / tau;

    // rows: anchor z_i against all z'_j; columns: anchor z'_j against all z_i
    let loss = -(log_softmax_diag(&logits, Axis(1)) + log_softmax_diag(&logits, Axis(0))) / (2.0 * n);

    let mut p_rows = logits.clone();
    softmax_along(&mut p_rows, Axis(1));
    let mut p_cols = logits;
    softmax_along(&mut p_cols, Axis(0));
    let mut g = p_rows + p_cols;
    for i in 0..batch.len() {
        g[[i, i]] -= 2.0;
    }
    g /= 2.0 * n * tau;

    let du = g.dot(&v);
    let dv = g.t().dot(&u);
    let project = |d: Array2<f64>, unit: &Array2<f64>, norms: &Array1<f64>| {
        let radial = (&d * unit).sum_axis(Axis(1)).insert_axis(Axis(1));
        (d - unit * &radial) / &norms.view().insert_axis(Axis(1))
    };
    Ok(ContrastiveGrad {
        loss,
        d_z: project(du, &u, &nz),
        d_z_prime: project(dv, &v, &nzp),
    })
}

/// Contrastive-loss weight at training step `step`: `min(rate * step, cap)`.
pub fn ramp_weight(step: u64, rate: f64, cap: f64) -> f64 {
    (rate * step as f64).min(cap)
}
