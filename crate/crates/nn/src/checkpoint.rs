//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header (network spec, tensor shapes, optimizer config, caller metadata),
//! then every tensor as little-endian `f64` in header order. Floats are
//! stored bit-exactly so a restored model reproduces predictions exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::network::{Network, NetworkSpec};
use crate::optim::{AdamConfig, OptimizerState};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"RSCORECK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: Vec<Tensor>,
    pub state: Vec<Tensor>,
    pub optimizer: Option<OptimizerState>,
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    param_shapes: Vec<Vec<usize>>,
    state_shapes: Vec<Vec<usize>>,
    optimizer: Option<(AdamConfig, u64)>,
    meta: serde_json::Value,
}

fn ck_err(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn capture(net: &Network, optimizer: Option<&OptimizerState>, meta: serde_json::Value) -> Self {
        Checkpoint {
            spec: net.spec().clone(),
            params: net.params().into_iter().cloned().collect(),
            state: net.state().into_iter().cloned().collect(),
            optimizer: optimizer.cloned(),
            meta,
        }
    }

    /// Rebuilds the network with the stored weights and running statistics.
    pub fn restore(&self) -> Result<Network> {
        let mut net = Network::build(self.spec.clone(), 0)?;
        net.load_tensors(self.params.clone(), self.state.clone())?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            spec: self.spec.clone(),
            param_shapes: self.params.iter().map(|t| t.shape().to_vec()).collect(),
            state_shapes: self.state.iter().map(|t| t.shape().to_vec()).collect(),
            optimizer: self.optimizer.as_ref().map(|o| (o.config, o.step)),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| ck_err(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |v: &[f64]| {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        for t in self.params.iter().chain(&self.state) {
            put(t.values());
        }
        if let Some(o) = &self.optimizer {
            for m in o.first_moment.iter().chain(&o.second_moment) {
                put(m);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(ck_err("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(ck_err(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..).unwrap_or_default();
        if hlen > body.len() {
            return Err(ck_err("truncated checkpoint header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| ck_err(format!("bad header: {e}")))?;
        let mut data = &body[hlen..];
        let mut take = |n: usize| -> Result<Vec<f64>> {
            if data.len() < n * 8 {
                return Err(ck_err("truncated checkpoint data"));
            }
            let (head, rest) = data.split_at(n * 8);
            data = rest;
            Ok(head
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let mut read_tensors = |shapes: &[Vec<usize>]| -> Result<Vec<Tensor>> {
            shapes
                .iter()
                .map(|s| Tensor::new(s.clone(), take(s.iter().product())?))
                .collect()
        };
        let params = read_tensors(&header.param_shapes)?;
        let state = read_tensors(&header.state_shapes)?;
        let optimizer = match header.optimizer {
            Some((config, step)) => {
                let mut first = Vec::new();
                let mut second = Vec::new();
                for p in &params {
                    first.push(take(p.len())?);
                }
                for p in &params {
                    second.push(take(p.len())?);
                }
                Some(OptimizerState {
                    config,
                    step,
                    first_moment: first,
                    second_moment: second,
                })
            }
            None => None,
        };
        if !data.is_empty() {
            return Err(ck_err(format!("{} trailing bytes in checkpoint", data.len())));
        }
        Ok(Checkpoint {
            spec: header.spec,
            params,
            state,
            optimizer,
            meta: header.meta,
        })
    }

    /// Writes atomically (temporary file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let io = |e: std::io::Error| ck_err(format!("{}: {e}", path.display()));
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| ck_err(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
