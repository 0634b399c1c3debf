use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const EMBEDDING_DIM: usize = 512;
/// Lengths accepted from external extractors.
pub const IMPORT_DIMS: [usize; 2] = [192, 512];

const MAGIC: &[u8; 4] = b"C2EM";

/// Fixed-length texture representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding<T = f64> {
    pub values: Vec<T>,
    /// Unit L2 norm.
    pub normalized: bool,
    /// False when the source image carried no usable ridge structure.
    #[serde(default = "yes")]
    pub informative: bool,
}

fn yes() -> bool {
    true
}

impl<T: Real> Embedding<T> {
    /// Raw vector, not normalized.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("embedding contains a non-finite value".into()));
        }
        Ok(Self {
            values,
            normalized: false,
            informative: true,
        })
    }

    /// Unit-norm copy of `values`; a zero vector is an error.
    pub fn unit(values: Vec<T>) -> Result<Self> {
        let mut e = Self::new(values)?;
        e.normalize()?;
        Ok(e)
    }

    /// The canonical embedding for featureless input: uniform, unit norm, flagged.
    pub fn uninformative(dim: usize) -> Self {
        let v = T::one() / T::from_usize_lossy(dim).sqrt();
        Self {
            values: vec![v; dim],
            normalized: true,
            informative: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > T::zero()) {
            return Err(Error::param("cannot normalize a zero embedding"));
        }
        self.values.iter_mut().for_each(|v| *v /= n);
        self.normalized = true;
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.dim() != other.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| *a * *b).sum())
    }

    /// `C2EM` magic, little-endian `u32` dimension, then `f32` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dim());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        out
    }

    /// Parses the binary form; values are taken as stored (not renormalized).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing C2EM magic".into()));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        if bytes.len() != 8 + 4 * dim {
            return Err(Error::LengthMismatch {
                expected: 8 + 4 * dim,
                actual: bytes.len(),
            });
        }
        let values = bytes[8..]
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        Self::new(values)
    }

    pub fn to_json(&self) -> String {
        let v: Vec<f64> = self.values.iter().map(|v| v.as_f64()).collect();
        serde_json::to_string(&v).expect("plain numbers serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: Vec<serde_json::Value> = serde_json::from_str(s)?;
        let values = raw
            .iter()
            .map(|v| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .map(T::lit)
                    .ok_or_else(|| Error::Format(format!("embedding entry {v} is not a finite number")))
            })
            .collect::<Result<Vec<T>>>()?;
        Self::new(values)
    }

    /// Writes the binary form, or a JSON array when the path ends in `.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            std::fs::write(path, self.to_json())?;
        } else {
            std::fs::write(path, self.to_bytes())?;
        }
        Ok(())
    }

    /// Reads either format, detected by the magic bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(&bytes)
        } else {
            let text = std::str::from_utf8(&bytes).map_err(|_| Error::Format("embedding file is neither C2EM nor JSON".into()))?;
            Self::from_json(text)
        }
    }
}

/// Loads an externally produced embedding of length 192 or 512 and
/// renormalizes it.
pub fn import_embedding(path: impl AsRef<Path>, finger_id: &str) -> Result<Embedding<f64>> {
    let mut e = Embedding::<f64>::load(path).map_err(|err| match err {
        Error::Format(m) => Error::Format(format!("{finger_id}: {m}")),
        other => other,
    })?;
    if !IMPORT_DIMS.contains(&e.dim()) {
        return Err(Error::Format(format!(
            "{finger_id}: embedding length {} is not one of {:?}",
            e.dim(),
            IMPORT_DIMS
        )));
    }
    e.normalize()?;
    Ok(e)
}

/// `(<a, b> + 1) / 2` for unit embeddings of equal length.
pub fn texture_similarity<T: Real>(a: &Embedding<T>, b: &Embedding<T>) -> Result<T> {
    if !a.normalized || !b.normalized {
        return Err(Error::param("texture similarity needs normalized embeddings"));
    }
    let d = a.dot(b)?;
    Ok(((d + T::one()) * T::lit(0.5)).max(T::zero()).min(T::one()))
}
