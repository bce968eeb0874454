//! Self-describing binary checkpoint container.
//!
//! ```text
//! magic      8 bytes  "OTHPCKPT"
//! version    u32      1
//! dtype      u8       1 = f32, 2 = f64
//! config     u32 length + UTF-8 key=value lines
//! meta       u32 length + UTF-8 key=value lines
//! tensors    u32 count, then per tensor:
//!            u16 name length, name, u8 rank, u32 dims…, data (little-endian)
//! ```
//! Weights are stored in their native binary width, so a save/load round
//! trip is bit-exact.

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::train::LossPoint;
use super::transformer::Transformer;
use super::ModelError;
use crate::engine::hex_digest;
use crate::scalar::{DType, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OTHPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub dataset_hash: String,
    pub steps: usize,
    pub final_loss: f64,
    pub optimizer_state_hash: String,
    pub loss_history: Vec<LossPoint>,
}

impl TrainingMeta {
    fn to_kv(&self) -> String {
        let hist: Vec<String> = self.loss_history.iter().map(|p| format!("{}:{}", p.step, p.loss)).collect();
        format!(
            "dataset_hash={}\nsteps={}\nfinal_loss={}\noptimizer_state_hash={}\nloss_history={}\n",
            self.dataset_hash,
            self.steps,
            self.final_loss,
            self.optimizer_state_hash,
            hist.join(",")
        )
    }

    fn from_kv(text: &str) -> Result<Self, ModelError> {
        let mut meta = TrainingMeta::default();
        let bad = |k: &str| ModelError::Format(format!("bad training meta field {k}"));
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            match k {
                "dataset_hash" => meta.dataset_hash = v.to_string(),
                "steps" => meta.steps = v.parse().map_err(|_| bad(k))?,
                "final_loss" => meta.final_loss = v.parse().map_err(|_| bad(k))?,
                "optimizer_state_hash" => meta.optimizer_state_hash = v.to_string(),
                "loss_history" => {
                    for item in v.split(',').filter(|s| !s.is_empty()) {
                        let (s, l) = item.split_once(':').ok_or_else(|| bad(k))?;
                        meta.loss_history.push(LossPoint {
                            step: s.parse().map_err(|_| bad(k))?,
                            loss: l.parse().map_err(|_| bad(k))?,
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(meta)
    }
}

/// Trained weights plus provenance.
#[derive(Debug, Clone)]
pub struct ModelCheckpoint<T> {
    pub model: Transformer<T>,
    pub meta: TrainingMeta,
}

impl<T: Scalar> PartialEq for ModelCheckpoint<T> {
    fn eq(&self, other: &Self) -> bool {
        self.model == other.model && self.meta == other.meta
    }
}

impl<T: Scalar> ModelCheckpoint<T> {
    pub fn untrained(model: Transformer<T>) -> Self {
        ModelCheckpoint { model, meta: TrainingMeta::default() }
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.model.num_params() * T::DTYPE.size() + 4096);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(T::DTYPE as u8);
        write_block(&mut out, self.model.config().to_kv().as_bytes());
        write_block(&mut out, self.meta.to_kv().as_bytes());
        let tensors = self.model.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &dim in &t.shape {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for &v in &self.model.params()[t.range()] {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Parses a checkpoint, converting stored weights to `T` if needed.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(ModelError::Format("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Format(format!("unsupported checkpoint version {version}")));
        }
        let dtype = DType::from_tag(r.take(1)?[0]).ok_or_else(|| ModelError::Format("unknown dtype".into()))?;
        let config = ModelConfig::from_kv(&r.text_block()?)?;
        let meta = TrainingMeta::from_kv(&r.text_block()?)?;
        let layout = super::params::Layout::new(&config);
        let count = r.u32()? as usize;
        if count != layout.tensors.len() {
            return Err(ModelError::Format(format!(
                "checkpoint has {count} tensors, config implies {}",
                layout.tensors.len()
            )));
        }
        let mut params = vec![T::zero(); layout.total];
        for info in &layout.tensors {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| ModelError::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            if name != info.name || shape != info.shape {
                return Err(ModelError::Format(format!(
                    "tensor {name} {shape:?} does not match expected {} {:?}",
                    info.name, info.shape
                )));
            }
            let raw = r.take(info.len() * dtype.size())?;
            for (dst, chunk) in params[info.range()].iter_mut().zip(raw.chunks_exact(dtype.size())) {
                *dst = match dtype {
                    _ if dtype == T::DTYPE => T::read_le(chunk),
                    DType::F32 => T::lit(f32::read_le(chunk) as f64),
                    DType::F64 => T::lit(f64::read_le(chunk)),
                };
            }
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Format("trailing bytes after tensors".into()));
        }
        Ok(ModelCheckpoint { model: Transformer::from_params(config, params)?, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn content_hash(&self) -> String {
        hex_digest(&self.to_bytes())
    }
}

fn write_block(out: &mut Vec<u8>, data: &[u8]) {
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(data);
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn text_block(&mut self) -> Result<String, ModelError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| ModelError::Format("text block is not UTF-8".into()))
    }
}
