//! SVCF tensor files.
//!
//! Layout (all little-endian): magic `SVCF`, `u32` version (1), `u32` ndim,
//! `ndim` × `u32` dims, then `f32` data in row-major order.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 4] = b"SVCF";
pub const VERSION: u32 = 1;

/// An n-dimensional float32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Tensor("dimension exceeds u32".into()));
        }
        Ok(Tensor { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Tensor::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn from_array2(a: &Array2<f64>) -> Self {
        let (r, c) = a.dim();
        Tensor {
            dims: vec![r, c],
            data: a.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Interprets the tensor as a matrix; 1-D tensors become a single row.
    pub fn to_array2(&self) -> Result<Array2<f64>> {
        let (r, c) = match self.dims[..] {
            [n] => (1, n),
            [r, c] => (r, c),
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "expected a 1-D or 2-D tensor, got dims {:?}",
                    self.dims
                )))
            }
        };
        Ok(Array2::from_shape_vec((r, c), self.to_f64()).expect("length checked at construction"))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<u32> {
            bytes
                .get(i..i + 4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .ok_or_else(|| Error::Tensor("truncated header".into()))
        };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Tensor("bad magic".into()));
        }
        let version = word(4)?;
        if version != VERSION {
            return Err(Error::Tensor(format!("unsupported version {version}")));
        }
        let ndim = word(8)? as usize;
        let mut dims = Vec::with_capacity(ndim.min(16));
        for k in 0..ndim {
            dims.push(word(12 + 4 * k)? as usize);
        }
        let start = 12 + 4 * ndim;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Tensor("element count overflows".into()))?;
        let payload = &bytes[start..];
        if Some(payload.len()) != count.checked_mul(4) {
            return Err(Error::Tensor(format!(
                "expected {count} values, payload holds {} bytes",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Tensor { dims, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Tensor::decode(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fsutil::write_atomic(path.as_ref(), &self.encode())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_layout() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap();
        let b = t.encode();
        let mut expected = b"SVCF".to_vec();
        for w in [1u32, 2, 1, 2] {
            expected.extend_from_slice(&w.to_le_bytes());
        }
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(b, expected);
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = t.encode();
        assert!(Tensor::decode(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Tensor::decode(&bad).is_err());
        let mut bad = b;
        bad[4] = 2;
        assert!(Tensor::decode(&bad).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u32>()) {
            let data: Vec<f32> = (0..rows * cols)
                .map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff))
                .collect();
            let t = Tensor::new(vec![rows, cols], data).unwrap();
            let back = Tensor::decode(&t.encode()).unwrap();
            prop_assert_eq!(back.encode(), t.encode());
        }
    }
}
