//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "FCGANBND" | u32 version | [u8; 32] schema digest
//! u32 block count, then per block:
//!     u32 name length | name (UTF-8) | u32 ndim | u64 dims… | f64 values…
//! u64 metadata length | metadata (JSON)
//! [u8; 32] SHA-256 of everything above
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::critic::{build_critic, CriticConfig, CriticNet};
use super::generator::{build_generator, GeneratorConfig, GeneratorNet};
use super::NetworkError;
use crate::autodiff::{Parameter, Tensor};
use crate::data::Encoder;
use crate::training::TrainConfig;

pub const MAGIC: &[u8; 8] = b"FCGANBND";
pub const FORMAT_VERSION: u32 = 1;

/// Generator, critic and everything needed to decode their output or to
/// resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub generator: GeneratorNet,
    pub critic: CriticNet,
    pub encoder: Encoder,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub epochs_completed: u64,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    format_version: u32,
    generator: GeneratorConfig,
    critic: CriticConfig,
    encoder: Encoder,
    train_config: TrainConfig,
    seed: u64,
    epochs_completed: u64,
    adam_steps: BTreeMap<String, u64>,
}

fn parameter_blocks(p: &Parameter, out: &mut Vec<(String, Tensor)>) {
    out.push((p.name.clone(), p.value.clone()));
    out.push((format!("{}#m", p.name), p.first_moment.clone()));
    out.push((format!("{}#v", p.name), p.second_moment.clone()));
}

impl ModelBundle {
    fn blocks(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for p in self.generator.parameters().into_iter().chain(self.critic.parameters()) {
            parameter_blocks(p, &mut out);
        }
        for bn in self.generator.batch_norms() {
            out.push((format!("{}.running_mean", bn.name), Tensor::vector(bn.running_mean.clone())));
            out.push((format!("{}.running_var", bn.name), Tensor::vector(bn.running_var.clone())));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.encoder.schema.digest());
        let blocks = self.blocks();
        buf.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (name, t) in &blocks {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let adam_steps = self
            .generator
            .parameters()
            .into_iter()
            .chain(self.critic.parameters())
            .map(|p| (p.name.clone(), p.step))
            .collect();
        let meta = Metadata {
            format_version: FORMAT_VERSION,
            generator: self.generator.config.clone(),
            critic: self.critic.config.clone(),
            encoder: self.encoder.clone(),
            train_config: self.train_config.clone(),
            seed: self.seed,
            epochs_completed: self.epochs_completed,
            adam_steps,
        };
        let json = serde_json::to_vec(&meta).expect("metadata serializes");
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetworkError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(NetworkError::Corrupt("not a model bundle (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(NetworkError::Version { found: version, expected: FORMAT_VERSION });
        }
        if bytes.len() < 32 + r.pos {
            return Err(NetworkError::Corrupt("truncated file".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(NetworkError::Corrupt("checksum mismatch (truncated or modified file)".into()));
        }
        let mut r = Reader { bytes: body, pos: r.pos };
        let schema_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let count = r.u32()? as usize;
        let mut blocks = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| NetworkError::Corrupt("block name is not UTF-8".into()))?
                .to_owned();
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| NetworkError::Corrupt("block too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let t = Tensor::new(shape, data).map_err(|e| NetworkError::Corrupt(e.to_string()))?;
            blocks.insert(name, t);
        }
        let len = r.u64()? as usize;
        let meta: Metadata = serde_json::from_slice(r.take(len)?)
            .map_err(|e| NetworkError::Corrupt(format!("metadata: {e}")))?;
        if r.pos != body.len() {
            return Err(NetworkError::Corrupt("trailing bytes after metadata".into()));
        }
        if meta.encoder.schema.digest() != schema_digest {
            return Err(NetworkError::Corrupt("schema digest does not match the stored schema".into()));
        }

        let mut generator = build_generator(&meta.generator, 0)?;
        let mut critic = build_critic(&meta.critic, 0)?;
        let mut take = |name: &str, like: &Tensor| -> Result<Tensor, NetworkError> {
            let t = blocks.remove(name).ok_or_else(|| NetworkError::Corrupt(format!("missing block {name}")))?;
            if t.shape() != like.shape() {
                return Err(NetworkError::Corrupt(format!(
                    "block {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    like.shape()
                )));
            }
            Ok(t)
        };
        for p in generator.parameters_mut().into_iter().chain(critic.parameters_mut()) {
            p.value = take(&p.name, &p.value)?;
            p.first_moment = take(&format!("{}#m", p.name), &p.first_moment)?;
            p.second_moment = take(&format!("{}#v", p.name), &p.second_moment)?;
            p.step = *meta
                .adam_steps
                .get(&p.name)
                .ok_or_else(|| NetworkError::Corrupt(format!("missing optimizer step for {}", p.name)))?;
        }
        for bn in generator.batch_norms_mut() {
            let like = Tensor::vector(bn.running_mean.clone());
            bn.running_mean = take(&format!("{}.running_mean", bn.name), &like)?.into_data();
            bn.running_var = take(&format!("{}.running_var", bn.name), &like)?.into_data();
        }
        if let Some(extra) = blocks.keys().next() {
            return Err(NetworkError::Corrupt(format!("unexpected block {extra}")));
        }
        Ok(Self {
            generator,
            critic,
            encoder: meta.encoder,
            train_config: meta.train_config,
            seed: meta.seed,
            epochs_completed: meta.epochs_completed,
        })
    }

    /// SHA-256 of the serialized form, hex encoded.
    pub fn digest_hex(&self) -> String {
        let bytes = self.to_bytes();
        bytes[bytes.len() - 32..].iter().map(|b| format!("{b:02x}")).collect()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetworkError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NetworkError::Corrupt("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetworkError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NetworkError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Writes through a temporary file and renames, so readers never see a
/// half-written bundle.
pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<(), NetworkError> {
    let io = |e| NetworkError::Io(path.display().to_string(), e);
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(&bundle.to_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, NetworkError> {
    let bytes = std::fs::read(path).map_err(|e| NetworkError::Io(path.display().to_string(), e))?;
    ModelBundle::from_bytes(&bytes)
}
