//! SLCK checkpoint files: `"SLCK"`, `u32` version, `u32` header length, a
//! UTF-8 JSON header, then concatenated RDT1 tensor blocks.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{build, ArchSpec};
use crate::data::{rdt, write_atomic, SceneLabel};
use crate::error::{Error, Result};
use crate::nn::{Graph, OptimState};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Universal,
    FineTunedStatic,
    FineTunedDynamic,
    Classifier,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Universal => "universal",
            Stage::FineTunedStatic => "fine_tuned_static",
            Stage::FineTunedDynamic => "fine_tuned_dynamic",
            Stage::Classifier => "classifier",
        }
    }

    pub fn fine_tuned(scene: SceneLabel) -> Stage {
        match scene {
            SceneLabel::Static => Stage::FineTunedStatic,
            SceneLabel::Dynamic => Stage::FineTunedDynamic,
        }
    }

    pub fn is_detector(self) -> bool {
        self != Stage::Classifier
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 64-bit FNV-1a of the canonical JSON encoding, as 16 hex digits.
pub fn config_fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("fingerprint source serialises");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub arch: ArchSpec,
    pub stage: Stage,
    pub fingerprint: String,
    pub graph: Graph<f32>,
    pub optimizer: Option<OptimState<f32>>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    offset: usize,
    length: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchSpec,
    stage: Stage,
    fingerprint: String,
    tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimState<f32>>,
}

const M_PREFIX: &str = "optimizer.m.";
const V_PREFIX: &str = "optimizer.v.";

impl ModelCheckpoint {
    pub fn new(arch: ArchSpec, stage: Stage, graph: Graph<f32>) -> Self {
        let fingerprint = config_fingerprint(&arch);
        ModelCheckpoint {
            arch,
            stage,
            fingerprint,
            graph,
            optimizer: None,
        }
    }

    pub fn ensure_stage(&self, accepted: &[Stage]) -> Result<()> {
        if accepted.contains(&self.stage) {
            return Ok(());
        }
        Err(Error::StageMismatch {
            expected: accepted
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(" or "),
            found: self.stage.to_string(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut named: Vec<(String, &Tensor<f32>)> = self.graph.named_tensors();
        if let Some(opt) = &self.optimizer {
            for (i, m) in opt.m.iter().enumerate() {
                named.push((format!("{M_PREFIX}{i}"), m));
            }
            for (i, v) in opt.v.iter().enumerate() {
                named.push((format!("{V_PREFIX}{i}"), v));
            }
        }
        let mut blocks = Vec::new();
        let mut entries = Vec::with_capacity(named.len());
        for (name, t) in named {
            let offset = blocks.len();
            rdt::encode_into(t, &mut blocks);
            entries.push(TensorEntry {
                name,
                offset,
                length: blocks.len() - offset,
            });
        }
        let header = Header {
            arch: self.arch.clone(),
            stage: self.stage,
            fingerprint: self.fingerprint.clone(),
            tensors: entries,
            optimizer: self.optimizer.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(12 + json.len() + blocks.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blocks);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("not an SLCK checkpoint".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
        let version = u32_at(4);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u32_at(8) as usize;
        let json = bytes
            .get(12..12 + hlen)
            .ok_or_else(|| bad("truncated checkpoint header".into()))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| bad(format!("checkpoint header: {e}")))?;
        let body = &bytes[12 + hlen..];
        let mut graph_tensors = HashMap::new();
        let mut moments: HashMap<String, Tensor<f32>> = HashMap::new();
        let mut expected_end = 0;
        for e in &header.tensors {
            let block = body
                .get(e.offset..e.offset + e.length)
                .ok_or_else(|| bad(format!("tensor {} lies outside the file", e.name)))?;
            let (t, used) = rdt::decode(block).map_err(|err| bad(format!("tensor {}: {err}", e.name)))?;
            if used != e.length {
                return Err(bad(format!("tensor {} has inconsistent length", e.name)));
            }
            expected_end = expected_end.max(e.offset + e.length);
            if e.name.starts_with(M_PREFIX) || e.name.starts_with(V_PREFIX) {
                moments.insert(e.name.clone(), t);
            } else if graph_tensors.insert(e.name.clone(), t).is_some() {
                return Err(bad(format!("duplicate tensor {}", e.name)));
            }
        }
        if expected_end != body.len() {
            return Err(bad(format!(
                "checkpoint body is {} bytes, directory covers {expected_end}",
                body.len()
            )));
        }
        let mut graph = build::<f32>(&header.arch, 0).map_err(|e| bad(e.to_string()))?;
        graph.load_named_tensors(graph_tensors)?;
        let optimizer = match header.optimizer {
            None => None,
            Some(mut opt) => {
                let n = graph.params().len();
                let mut take = |prefix: &str, i: usize| {
                    moments
                        .remove(&format!("{prefix}{i}"))
                        .ok_or_else(|| bad(format!("missing optimizer moment {prefix}{i}")))
                };
                opt.m = (0..n).map(|i| take(M_PREFIX, i)).collect::<Result<_>>()?;
                opt.v = (0..n).map(|i| take(V_PREFIX, i)).collect::<Result<_>>()?;
                for ((m, v), p) in opt.m.iter().zip(&opt.v).zip(graph.params()) {
                    if m.dims() != p.dims() || v.dims() != p.dims() {
                        return Err(bad("optimizer moment shape mismatch".into()));
                    }
                }
                Some(opt)
            }
        };
        Ok(ModelCheckpoint {
            arch: header.arch,
            stage: header.stage,
            fingerprint: header.fingerprint,
            graph,
            optimizer,
        })
    }
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes())
}

/// A loaded checkpoint plus any non-fatal findings.
#[derive(Clone, Debug)]
pub struct LoadedCheckpoint {
    pub checkpoint: ModelCheckpoint,
    pub warnings: Vec<String>,
}

/// Load a checkpoint; a fingerprint that differs from `expected` is
/// reported as a warning, not an error.
pub fn load_checkpoint(path: &Path, expected_fingerprint: Option<&str>) -> Result<LoadedCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let checkpoint = ModelCheckpoint::from_bytes(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut warnings = Vec::new();
    if let Some(exp) = expected_fingerprint {
        if exp != checkpoint.fingerprint {
            let w = format!(
                "checkpoint {} was trained under config fingerprint {}, current config is {exp}",
                path.display(),
                checkpoint.fingerprint
            );
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    Ok(LoadedCheckpoint {
        checkpoint,
        warnings,
    })
}
