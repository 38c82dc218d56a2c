//! Checkpoint files.
//!
//! ```text
//! magic        8 bytes  "ICGCKPT1"
//! config_len   u32      then the run configuration as UTF-8 TOML
//! config_hash  32 bytes SHA-256 of that TOML
//! count        u32      number of tensors
//! tensor
//!   name_len u32, name (UTF-8)
//!   flags    u8         bit 0 set: train-only (decoder) weight
//!   ndim     u32, then ndim x u32 dims
//!   data     f64 little-endian, row-major
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::decoders::{CROSS_PREFIX, INTRA_PREFIX};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

use super::config::RunConfig;

const MAGIC: &[u8; 8] = b"ICGCKPT1";
const TRAIN_ONLY: u8 = 1;

pub fn is_train_only(name: &str) -> bool {
    name.starts_with(INTRA_PREFIX) || name.starts_with(CROSS_PREFIX)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: ParamStore,
}

impl Checkpoint {
    /// Copy without any decoder weights.
    pub fn stripped(&self) -> Self {
        let mut params = self.params.clone();
        params.remove_prefix(INTRA_PREFIX);
        params.remove_prefix(CROSS_PREFIX);
        Self {
            config: self.config.clone(),
            params,
        }
    }

    /// Weights needed at inference: everything not flagged train-only.
    pub fn inference_params(&self) -> ParamStore {
        let mut p = ParamStore::new();
        for (k, v) in self.params.iter().filter(|(k, _)| !is_train_only(k)) {
            p.insert(k.clone(), v.clone());
        }
        p
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config.to_toml();
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        b.extend_from_slice(cfg.as_bytes());
        b.extend_from_slice(&Sha256::digest(cfg.as_bytes()));
        b.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            b.extend_from_slice(&(name.len() as u32).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.push(if is_train_only(name) { TRAIN_ONLY } else { 0 });
            b.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                b.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|msg| Error::format(path, msg))
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let n = r.u32()?;
        let cfg_bytes = r.take(n)?;
        let hash = r.take(32)?;
        if Sha256::digest(cfg_bytes).as_slice() != hash {
            return Err("configuration hash mismatch".into());
        }
        let text = std::str::from_utf8(cfg_bytes).map_err(|_| "configuration is not UTF-8")?;
        let config = RunConfig::from_toml(text).map_err(|e| e.to_string())?;
        let count = r.u32()?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let len = r.u32()?;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "tensor name is not UTF-8")?;
            let _flags = r.take(1)?[0];
            let ndim = r.u32()?;
            let shape = (0..ndim).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
            let numel: usize = shape.iter().product();
            let data = r
                .take(numel * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.insert(name, Tensor::new(&shape, data));
        }
        if r.pos != bytes.len() {
            return Err("trailing bytes after the last tensor".into());
        }
        Ok(Self { config, params })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_strip() {
        let mut params = ParamStore::new();
        params.insert("backbone.head.weight", Tensor::new(&[2, 1], vec![0.25, -1.5]));
        params.insert("intra.head.bias", Tensor::new(&[1], vec![3.0]));
        params.insert("cross.dustbin", Tensor::scalar(1.0));
        let ck = Checkpoint {
            config: RunConfig::smoke(),
            params,
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let s = ck.stripped();
        assert_eq!(s.params.len(), 1);
        assert_eq!(s.inference_params(), ck.inference_params());
    }

    #[test]
    fn corrupted_config_is_detected() {
        let ck = Checkpoint {
            config: RunConfig::smoke(),
            params: ParamStore::new(),
        };
        let mut b = ck.to_bytes();
        b[14] ^= 1;
        assert!(Checkpoint::from_bytes(&b).is_err());
        assert!(Checkpoint::from_bytes(&b[..20]).is_err());
    }
}
