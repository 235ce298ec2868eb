//! Checkpoint files: `EQBC`, a little-endian `u32` header length, a JSON
//! header, then every parameter as a little-endian `f64` in
//! [`Policy::params`] order, row-major.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::dataset::Layout;

use super::policy::Policy;
use super::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EQBC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub layout: Layout,
    pub sizes: Vec<usize>,
    pub n_params: usize,
    pub config: TrainConfig,
    pub config_hash: String,
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub policy: Policy,
}

impl Checkpoint {
    pub fn new(policy: Policy, config: &TrainConfig, diverged_at: Option<usize>) -> Self {
        Self {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                layout: policy.layout,
                sizes: policy.sizes.clone(),
                n_params: policy.n_params(),
                config: config.clone(),
                config_hash: config.hash(),
                diverged_at,
            },
            policy,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + 8 * self.header.n_params);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.policy.params() {
            for v in p.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic"));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = bytes.get(8..8 + len).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body)?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(bad("unsupported version"));
        }
        let hidden = header
            .sizes
            .get(1..header.sizes.len().saturating_sub(1))
            .ok_or_else(|| bad("too few layers"))?;
        let mut policy = Policy::zeros(header.layout, hidden);
        if policy.sizes != header.sizes || policy.n_params() != header.n_params {
            return Err(bad("layer sizes disagree with layout"));
        }
        let payload = &bytes[8 + len..];
        if payload.len() != 8 * header.n_params {
            return Err(bad("parameter payload has the wrong length"));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for p in policy.params_mut() {
            let shape = p.raw_dim();
            *p = Array2::from_shape_vec(shape, values.by_ref().take(p.len()).collect())
                .map_err(|e| bad(&e.to_string()))?;
        }
        Ok(Self { header, policy })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
