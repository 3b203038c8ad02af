//! `VCLC` little-endian checkpoints.
//!
//! ```text
//! "VCLC" | u32 version=1 | u64 config_hash | u32 n_tensors
//!        | per tensor: u32 name_len | name (UTF-8) | u32 rank | u64 × rank | f64 × numel
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::ByteReader;
use crate::encoder::ParamSet;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VCLC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named tensors plus the hash of the config that produced them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointBundle {
    pub config_hash: u64,
    pub tensors: Vec<(String, Tensor)>,
}

impl CheckpointBundle {
    pub fn new(config_hash: u64) -> Self {
        Self {
            config_hash,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn push_params(&mut self, prefix: &str, p: &ParamSet) {
        for (n, t) in p.iter() {
            self.push(format!("{prefix}.{n}"), t.clone());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::contract(format!("checkpoint has no tensor `{name}`")))
    }

    /// All tensors named `prefix.*`, in stored order, with the prefix removed.
    pub fn params(&self, prefix: &str) -> ParamSet {
        ParamSet::from_entries(self.tensors.clone()).strip_prefix(prefix)
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        let p = format!("{prefix}.");
        self.tensors.iter().any(|(n, _)| n.starts_with(&p))
    }

    pub fn ensure_hash(&self, expected: u64) -> Result<()> {
        if self.config_hash != expected {
            return Err(Error::contract(format!(
                "checkpoint config hash {:016x} does not match the current config {expected:016x}",
                self.config_hash
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&len_u32(self.tensors.len())?.to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&len_u32(name.len())?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&len_u32(t.rank())?.to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}, expected \"VCLC\"")));
        }
        let at = r.offset();
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(at, format!("unsupported version {version}")));
        }
        let config_hash = r.u64("config hash")?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::new();
        for i in 0..count {
            let name_len = r.u32("name length")? as usize;
            let at = r.offset();
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|e| Error::format(at, format!("tensor {i} name is not UTF-8: {e}")))?
                .to_string();
            let at = r.offset();
            let rank = r.u32("rank")? as usize;
            if rank == 0 || rank > 8 {
                return Err(Error::format(at, format!("tensor `{name}` has unsupported rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let at = r.offset();
                let e = r.u64("extent")?;
                let e = usize::try_from(e)
                    .ok()
                    .filter(|&e| e > 0)
                    .ok_or_else(|| Error::format(at, format!("tensor `{name}` has invalid extent {e}")))?;
                shape.push(e);
            }
            let at = r.offset();
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .ok_or_else(|| Error::format(at, "tensor size overflow"))?;
            let data = r.f64s(numel, "tensor payload")?;
            tensors.push((name, Tensor::new(shape, data).map_err(|e| Error::format(at, e))?));
        }
        r.finish()?;
        Ok(Self { config_hash, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn len_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::dim(format!("{v} does not fit in u32")))
}

/// First 8 bytes of SHA-256, little-endian.
pub fn hash_text(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> CheckpointBundle {
        let mut b = CheckpointBundle::new(0xdead_beef);
        b.push("query.w", Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-300, -0.0]).unwrap());
        b.push("adam.step", Tensor::scalar(7.0));
        b
    }

    #[test]
    fn save_load_save_is_identical() {
        let bytes = bundle().to_bytes().unwrap();
        let back = CheckpointBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.config_hash, 0xdead_beef);
        assert_eq!(back.params("query").len(), 1);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = bundle().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(CheckpointBundle::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(CheckpointBundle::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes;
        long.push(1);
        assert!(CheckpointBundle::from_bytes(&long).is_err());
    }

    #[test]
    fn hash_mismatch_is_an_error() {
        assert!(bundle().ensure_hash(1).is_err());
        assert!(bundle().ensure_hash(0xdead_beef).is_ok());
    }
}
