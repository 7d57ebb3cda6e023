//! Binary checkpoint: "FACK", u16 version, length-prefixed JSON header, then
//! one record per tensor (name, rank, dims, raw f32 payload), all
//! little-endian.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::params::Params;

pub const MAGIC: &[u8; 4] = b"FACK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub step: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    state: TrainingState,
    tensors: usize,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("corrupt header: {0}")]
    Header(String),
    #[error("checkpoint was saved for a different model config: expected {expected}, found {found}")]
    ConfigMismatch { expected: String, found: String },
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("unexpected tensor {found} (expected {expected})")]
    TensorOrder { expected: String, found: String },
    #[error("file ends inside {0}")]
    Truncated(String),
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
}

pub fn save_checkpoint(p: &Params<f32>, state: &TrainingState, path: &Path) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    let header = Header { config: p.config.clone(), state: *state, tensors: p.layout.tensors.len() };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(p.len() * 4 + json.len() + 4096);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in &p.layout.tensors {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &p.data[t.range()] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&buf).map_err(io_err)?;
    f.sync_all().map_err(io_err)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what.to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

/// Loads a checkpoint, checking every tensor against the layout implied by
/// the stored config.
pub fn load_checkpoint(path: &Path) -> Result<(Params<f32>, TrainingState), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    if r.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let v = r.take(2, "version")?;
    let version = u16::from_le_bytes([v[0], v[1]]);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let n = r.u32("header")?;
    let header: Header = serde_json::from_slice(r.take(n, "header")?).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut p = Params::<f32>::zeros(&header.config).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.tensors != p.layout.tensors.len() {
        return Err(CheckpointError::Header(format!(
            "{} tensors listed, config implies {}",
            header.tensors,
            p.layout.tensors.len()
        )));
    }
    for t in p.layout.tensors.clone() {
        let name_len = r.u32(&t.name)?;
        let name = String::from_utf8_lossy(r.take(name_len, &t.name)?).into_owned();
        if name != t.name {
            return Err(CheckpointError::TensorOrder { expected: t.name.clone(), found: name });
        }
        let rank = r.u32(&t.name)?;
        let dims = (0..rank).map(|_| r.u32(&t.name)).collect::<Result<Vec<_>, _>>()?;
        if dims != t.shape {
            return Err(CheckpointError::ShapeMismatch { name: t.name.clone(), expected: t.shape.clone(), found: dims });
        }
        let payload = r.take(t.len() * 4, &t.name)?;
        for (dst, b) in p.data[t.range()].iter_mut().zip(payload.chunks_exact(4)) {
            *dst = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok((p, header.state))
}

/// Like [`load_checkpoint`], but rejects a checkpoint saved for another config.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<(Params<f32>, TrainingState), CheckpointError> {
    let (p, s) = load_checkpoint(path)?;
    if &p.config != expected {
        let show = |c: &ModelConfig| serde_json::to_string(c).expect("config serializes");
        return Err(CheckpointError::ConfigMismatch { expected: show(expected), found: show(&p.config) });
    }
    Ok((p, s))
}
