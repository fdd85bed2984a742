//! Bit-exact binary checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "FMGCKPT1" | u32 version=1 | u8 arch tag | u32 H | u32 tensor count
//! per tensor: u16 name len | name UTF-8 | u8 rank | rank x u32 dims | f32 data
//! trailing CRC32 (IEEE) over all preceding bytes
//! ```
//!
//! Tensors are written in registration order, parameters first, then
//! batch-norm running statistics. Loading rebuilds the architecture at its
//! default widths and overwrites every tensor, so a round trip reproduces
//! parameters and running statistics bit for bit.

use std::path::Path;

use thiserror::Error;

use crate::nn::Tensor;

use super::{Architecture, Model, ModelSpec};

const MAGIC: &[u8; 8] = b"FMGCKPT1";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },
    #[error("unknown architecture tag {0}")]
    UnknownTag(u8),
    #[error("truncated checkpoint at byte {0}")]
    Truncated(usize),
    #[error("tensor layout mismatch: {0}")]
    TensorMismatch(String),
    #[error("architecture mismatch: expected {expected}, checkpoint holds {got}")]
    SpecMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot build model from checkpoint: {0}")]
    Build(String),
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes the model's spec, parameters and running statistics.
pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(model.arch().tag());
    buf.extend_from_slice(&(model.h() as u32).to_le_bytes());

    let tensors: Vec<(&str, &Tensor<f32>)> = model
        .store()
        .params()
        .chain(model.store().buffers())
        .collect();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(tensor.rank() as u8);
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, buf).map_err(|e| io_err(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated(self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Loads a checkpoint saved by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Model<f32>, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < MAGIC.len() + 4 {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(CheckpointError::Crc { stored, computed });
    }

    let mut r = Reader {
        bytes: &bytes[..body_len],
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let tag = r.u8()?;
    let arch = Architecture::from_tag(tag).ok_or(CheckpointError::UnknownTag(tag))?;
    let h = r.u32()? as usize;
    let count = r.u32()? as usize;

    let mut model = Model::<f32>::build(ModelSpec::new(arch, 0).with_h(h))
        .map_err(|e| CheckpointError::Build(e.to_string()))?;
    let expected = model.store().n_params() + model.store().buffers().count();
    if count != expected {
        return Err(CheckpointError::TensorMismatch(format!(
            "checkpoint holds {count} tensors, {} expects {expected}",
            arch.name()
        )));
    }

    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::TensorMismatch("non-UTF-8 tensor name".into()))?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(&shape, data)
            .map_err(|e| CheckpointError::TensorMismatch(e.to_string()))?;

        let store = model.store_mut();
        if let Some(p) = store.param_mut(&name) {
            if p.shape() != tensor.shape() {
                return Err(CheckpointError::TensorMismatch(format!(
                    "{name}: checkpoint shape {:?}, model expects {:?}",
                    tensor.shape(),
                    p.shape()
                )));
            }
            *p = tensor;
        } else if let Some(b) = store.buffer_mut(&name) {
            if b.shape() != tensor.shape() {
                return Err(CheckpointError::TensorMismatch(format!(
                    "{name}: checkpoint shape {:?}, model expects {:?}",
                    tensor.shape(),
                    b.shape()
                )));
            }
            *b = tensor;
        } else {
            return Err(CheckpointError::TensorMismatch(format!(
                "unexpected tensor {name} for {}",
                arch.name()
            )));
        }
    }
    if r.pos != body_len {
        return Err(CheckpointError::TensorMismatch(format!(
            "{} trailing bytes after last tensor",
            body_len - r.pos
        )));
    }
    model.store_mut().reset_optimizer();
    Ok(model)
}

/// Loads a checkpoint and verifies it holds the expected architecture.
pub fn load_checkpoint_expecting(
    path: &Path,
    expected: Architecture,
) -> Result<Model<f32>, CheckpointError> {
    let model = load_checkpoint(path)?;
    if model.arch() != expected {
        return Err(CheckpointError::SpecMismatch {
            expected: expected.name(),
            got: model.arch().name(),
        });
    }
    Ok(model)
}
