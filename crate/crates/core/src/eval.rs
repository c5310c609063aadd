//! Objective metrics: speaker-embedding cosine similarity and F0/VUV
//! agreement between two tracks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitch::{cents_between, F0Track};
use crate::svcf::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, source_id: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding contains a non-finite value"));
        }
        Ok(EmbeddingVector {
            values,
            source_id: source_id.into(),
        })
    }

    /// Flattens a tensor of any rank into one vector.
    pub fn from_tensor(t: &Tensor, source_id: impl Into<String>) -> Result<Self> {
        Self::new(t.to_f64(), source_id)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::ShapeMismatch(format!(
            "embedding dims differ: {} vs {}",
            a.values.len(),
            b.values.len()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Metrics {
    /// RMS interval over frames voiced in both tracks; `None` if there are none.
    pub rmse_cents: Option<f64>,
    pub vuv_error_rate: f64,
    pub co_voiced_frames: usize,
}

pub fn f0_metrics(a: &F0Track, b: &F0Track) -> Result<F0Metrics> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "tracks have {} and {} frames",
            a.len(),
            b.len()
        )));
    }
    let mut sq = 0.0;
    let mut co = 0;
    let mut mismatched = 0;
    for i in 0..a.len() {
        let (va, vb) = (a.vuv()[i], b.vuv()[i]);
        if va != vb {
            mismatched += 1;
        } else if va {
            sq += cents_between(a.f0_hz()[i], b.f0_hz()[i])?.powi(2);
            co += 1;
        }
    }
    Ok(F0Metrics {
        rmse_cents: (co > 0).then(|| (sq / co as f64).sqrt()),
        vuv_error_rate: if a.is_empty() {
            0.0
        } else {
            mismatched as f64 / a.len() as f64
        },
        co_voiced_frames: co,
    })
}
