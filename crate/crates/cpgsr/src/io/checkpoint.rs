//! Named-tensor container.
//!
//! ```text
//! magic "CPGS" | version u32 | entry count u32 |
//! per entry: name length u32 | UTF-8 name | dtype u8 | rank u32 | dims u32 × rank | payload
//! ```
//!
//! All integers and payloads are little-endian. Parsing then serializing
//! reproduces the input byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use cpgsr_core::model::{Form, ModelConfig, ModelWeights};
use cpgsr_core::Tensor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelSection;
use crate::error::{AppError, AppResult};

pub const MAGIC: [u8; 4] = *b"CPGS";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic {0:?}, not a checkpoint")]
    BadMagic([u8; 4]),
    #[error("truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),
    #[error("entry name is not valid UTF-8")]
    InvalidUtf8,
    #[error("tensor {name}: dims {dims:?} hold {expected} elements, payload has {got}")]
    DimMismatch {
        name: String,
        dims: Vec<u32>,
        expected: usize,
        got: usize,
    },
    #[error("{0} trailing bytes after the last entry")]
    TrailingBytes(usize),
    #[error("duplicate entry {0}")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl Payload {
    fn tag(&self) -> u8 {
        match self {
            Payload::F32(_) => 0,
            Payload::F64(_) => 1,
            Payload::U8(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn elem_size(tag: u8) -> Option<usize> {
    match tag {
        0 => Some(4),
        1 => Some(8),
        2 => Some(1),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<u32>,
    pub payload: Payload,
}

impl Entry {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, payload: Payload) -> Result<Self, CheckpointError> {
        let name = name.into();
        let expected = dims.iter().map(|&d| d as usize).product::<usize>();
        if expected != payload.len() {
            return Err(CheckpointError::DimMismatch {
                name,
                dims,
                expected,
                got: payload.len(),
            });
        }
        Ok(Entry { name, dims, payload })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.payload.tag());
            out.extend_from_slice(&(e.dims.len() as u32).to_le_bytes());
            for d in &e.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            match &e.payload {
                Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::U8(v) => out.extend_from_slice(v),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = r.u32()? as usize;
        let mut entries: Vec<Entry> = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CheckpointError::InvalidUtf8)?
                .to_string();
            let tag = r.take(1)?[0];
            let size = elem_size(tag).ok_or(CheckpointError::UnknownDtype(tag))?;
            let rank = r.u32()? as usize;
            let mut dims = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                dims.push(r.u32()?);
            }
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .and_then(|n| n.checked_mul(size))
                .ok_or(CheckpointError::Truncated {
                    offset: r.pos,
                    needed: usize::MAX,
                    len: bytes.len(),
                })?
                / size;
            let raw = r.take(numel * size)?;
            let payload = match tag {
                0 => Payload::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                1 => Payload::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                _ => Payload::U8(raw.to_vec()),
            };
            if entries.iter().any(|e| e.name == name) {
                return Err(CheckpointError::Duplicate(name));
            }
            entries.push(Entry { name, dims, payload });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Checkpoint { entries })
    }

    pub fn read(path: &Path) -> AppResult<Self> {
        Self::from_bytes(&super::read_bytes(path)?).map_err(|e| AppError::format(path, e))
    }

    pub fn write(&self, path: &Path) -> AppResult<()> {
        super::write_bytes(path, &self.to_bytes())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(
            CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                len: self.bytes.len(),
            },
        )?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Entry holding the model configuration and weight form as JSON.
pub const META_ENTRY: &str = "meta.config";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    model: ModelSection,
    form: FormTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FormTag {
    Train,
    Fused,
}

/// Weights plus the metadata entry, tensors in name order.
pub fn from_model(cfg: &ModelConfig, w: &ModelWeights<f32>) -> Checkpoint {
    let meta = Meta {
        model: (*cfg).into(),
        form: match w.form {
            Form::Train => FormTag::Train,
            Form::Fused => FormTag::Fused,
        },
    };
    let json = serde_json::to_vec(&meta).expect("plain data serializes");
    let mut entries = vec![Entry {
        name: META_ENTRY.into(),
        dims: vec![json.len() as u32],
        payload: Payload::U8(json),
    }];
    for (name, t) in &w.tensors {
        entries.push(Entry {
            name: name.clone(),
            dims: t.shape().dims().iter().map(|&d| d as u32).collect(),
            payload: Payload::F32(t.data().to_vec()),
        });
    }
    Checkpoint { entries }
}

/// Inverse of [`from_model`]; the tensor set must match the stored config's schema.
pub fn to_model(c: &Checkpoint) -> AppResult<(ModelConfig, ModelWeights<f32>)> {
    let meta = match c.get(META_ENTRY).map(|e| &e.payload) {
        Some(Payload::U8(b)) => serde_json::from_slice::<Meta>(b)
            .map_err(|e| AppError::Config(format!("checkpoint metadata: {e}")))?,
        _ => return Err(AppError::Config(format!("checkpoint has no {META_ENTRY} entry"))),
    };
    let cfg: ModelConfig = meta.model.into();
    let mut tensors = BTreeMap::new();
    for e in c.entries.iter().filter(|e| e.name != META_ENTRY) {
        let Payload::F32(data) = &e.payload else {
            return Err(AppError::Config(format!("tensor {} is not f32", e.name)));
        };
        if e.dims.len() != 4 {
            return Err(AppError::Config(format!("tensor {} has rank {}, expected 4", e.name, e.dims.len())));
        }
        let d = [0, 1, 2, 3].map(|i| e.dims[i] as usize);
        tensors.insert(e.name.clone(), Tensor::new(d, data.clone())?);
    }
    let form = match meta.form {
        FormTag::Train => Form::Train,
        FormTag::Fused => Form::Fused,
    };
    let w = ModelWeights { form, tensors };
    w.validate(&cfg).map_err(|e| AppError::Config(format!("checkpoint schema: {e}")))?;
    Ok((cfg, w))
}

pub fn save_model(path: &Path, cfg: &ModelConfig, w: &ModelWeights<f32>) -> AppResult<()> {
    from_model(cfg, w).write(path)
}

pub fn load_model(path: &Path) -> AppResult<(ModelConfig, ModelWeights<f32>)> {
    to_model(&Checkpoint::read(path)?)
}
