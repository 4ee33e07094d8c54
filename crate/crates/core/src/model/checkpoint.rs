//! Binary checkpoint format (little endian):
//!
//! ```text
//! magic "HGRC" | version u32
//! embed_dim u64 | edge_dim u64 | leaky_slope f64 | dropout_rate f64 | heads u64
//! digest (u32 length + utf8) | seed u64
//! tensor count u32
//! per tensor: name (u32 length + utf8) | rows u64 | cols u64 | rows*cols f64
//! ```

use std::path::Path;

use super::{Model, ModelConfig, Params, Tensor, PARAM_NAMES};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HGRC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// Digest of the run configuration that produced the model.
    pub digest: String,
    pub seed: u64,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let c = &self.model.config;
        out.extend_from_slice(&(c.embed_dim as u64).to_le_bytes());
        out.extend_from_slice(&(c.edge_dim as u64).to_le_bytes());
        out.extend_from_slice(&c.leaky_slope.to_le_bytes());
        out.extend_from_slice(&c.dropout_rate.to_le_bytes());
        out.extend_from_slice(&(c.heads as u64).to_le_bytes());
        put_str(&mut out, &self.digest);
        out.extend_from_slice(&self.seed.to_le_bytes());
        let tensors = self.model.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in PARAM_NAMES.iter().zip(tensors) {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.rows as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols as u64).to_le_bytes());
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let config = ModelConfig {
            embed_dim: r.u64()? as usize,
            edge_dim: r.u64()? as usize,
            leaky_slope: r.f64()?,
            dropout_rate: r.f64()?,
            heads: r.u64()? as usize,
        };
        config
            .validate()
            .map_err(|e| Error::Checkpoint(format!("stored config invalid: {e}")))?;
        let digest = r.string()?;
        let seed = r.u64()?;
        let count = r.u32()? as usize;
        if count != PARAM_NAMES.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {count}", PARAM_NAMES.len())));
        }
        let mut params = Params::zeros(0, &config);
        for (expected, slot) in PARAM_NAMES.iter().zip(params.tensors_mut()) {
            let name = r.string()?;
            if name != *expected {
                return Err(Error::Checkpoint(format!("expected tensor {expected}, found {name}")));
            }
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            if name != "embeddings" && (rows, cols) != slot.shape() {
                return Err(Error::Checkpoint(format!("tensor {name} has shape {rows}x{cols}")));
            }
            if name == "embeddings" && cols != config.embed_dim {
                return Err(Error::Checkpoint("embedding width does not match config".into()));
            }
            let len = rows
                .checked_mul(cols)
                .filter(|&n| n <= bytes.len() / 8)
                .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?;
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(r.f64()?);
            }
            *slot = Tensor { rows, cols, data };
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            model: Model { config, params },
            digest,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = ModelConfig { embed_dim: 3, edge_dim: 2, ..Default::default() };
        let mut params = Params::zeros(4, &config);
        for (k, t) in params.tensors_mut().into_iter().enumerate() {
            for (j, v) in t.data.iter_mut().enumerate() {
                *v = (k as f64 + 1.0) / 3.0 - j as f64 * 1e-7;
            }
        }
        params.alpha.data[0] = f64::MIN_POSITIVE;
        Checkpoint {
            model: Model { config, params },
            digest: "abc123".into(),
            seed: 42,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
