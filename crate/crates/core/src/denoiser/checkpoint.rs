//! Model checkpoint file.
//!
//! Little-endian layout:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 8    | magic `IDIFCKPT`               |
//! | 8      | 4    | format version (u32, = 1)      |
//! | 12     | 4    | image channels (u32)           |
//! | 16     | 4    | base channels (u32)            |
//! | 20     | 4    | depth (u32)                    |
//! | 24     | 4    | time embedding dim (u32)       |
//! | 28     | 4    | training horizon T (u32)       |
//! | 32     | 8    | parameter count (u64)          |
//! | 40     | 4·n  | parameters as f32              |
//!
//! Parameters are narrowed to f32 on save, so `load(save(p))` reproduces `p`
//! exactly whenever every value of `p` is representable in f32, and
//! re-saving a loaded checkpoint is byte-identical.

use std::path::Path;

use super::unet::{DenoiserParams, DenoiserSpec, Unet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IDIFCKPT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: DenoiserSpec,
    pub horizon: usize,
    pub params: DenoiserParams,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.spec.channels as u32,
            self.spec.base_channels as u32,
            self.spec.depth as u32,
            self.spec.time_embed_dim as u32,
            self.horizon as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for &v in &self.params.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::BadCheckpoint(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::BadCheckpoint("bad magic".into()));
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::BadCheckpoint(format!("unsupported version {version}")));
        }
        let spec = DenoiserSpec {
            channels: u32_at(12) as usize,
            base_channels: u32_at(16) as usize,
            depth: u32_at(20) as usize,
            time_embed_dim: u32_at(24) as usize,
        };
        let horizon = u32_at(28) as usize;
        let count = u64::from_le_bytes(bytes[32..40].try_into().expect("8 bytes")) as usize;
        let net = Unet::new(spec).map_err(|e| Error::BadCheckpoint(e.to_string()))?;
        if count != net.param_count() {
            return Err(Error::BadCheckpoint(format!(
                "header declares {count} parameters, architecture has {}",
                net.param_count()
            )));
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() != 4 * count {
            return Err(Error::BadCheckpoint(format!("expected {} parameter bytes, found {}", 4 * count, body.len())));
        }
        let values: Vec<f64> =
            body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadCheckpoint("non-finite parameter".into()));
        }
        Ok(Self { spec, horizon, params: DenoiserParams { values } })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                Error::NotFound(path.to_path_buf())
            } else {
                Error::Io { path: path.to_path_buf(), source }
            }
        })?;
        Self::from_bytes(&bytes)
    }
}
