//! Binary checkpoint container.
//!
//! ```text
//! magic            8 bytes  "IMBALMCK"
//! version          u32
//! config length    u32, followed by the ModelConfig as UTF-8 JSON
//! tensor count     u32
//! per tensor       u32 name length, name bytes,
//!                  u32 rank, rank x u64 dims,
//!                  prod(dims) x f64
//! ```
//!
//! All integers and floats are little-endian. A JSON sidecar holding the
//! same `ModelConfig` is written next to the checkpoint with a `.json`
//! extension.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{ModelConfig, ModelParams, Weights};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"IMBALMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn write_checkpoint(params: &ModelParams, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION);
    let config = serde_json::to_vec(&params.config)?;
    put_u32(&mut buf, config.len() as u32);
    buf.extend_from_slice(&config);
    let tensors = params.weights.tensors();
    put_u32(&mut buf, tensors.len() as u32);
    for t in &tensors {
        put_u32(&mut buf, t.name.len() as u32);
        buf.extend_from_slice(t.name.as_bytes());
        put_u32(&mut buf, t.shape.len() as u32);
        for &dim in &t.shape {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for v in t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint(mut input: impl Read) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<checkpoint>", e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let len = cur.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(cur.take(len)?)?;
    config.validate()?;
    let mut weights = Weights::zeros(&config);
    let expected: Vec<(String, Vec<usize>)> = weights
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.shape))
        .collect();
    let count = cur.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {count} tensors, config implies {}",
            expected.len()
        )));
    }
    for (slot, (want_name, want_shape)) in weights.tensors_mut().into_iter().zip(&expected) {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = cur.u32()? as usize;
        let shape = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != want_name || &shape != want_shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` {shape:?} does not match expected `{want_name}` {want_shape:?}"
            )));
        }
        for v in slot.data.iter_mut() {
            *v = f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(ModelParams { config, weights })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the checkpoint and its JSON config sidecar.
pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(&params.config)?;
    fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))
}

/// Loads a checkpoint; when a sidecar exists it must agree with the header.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let params = read_checkpoint(std::io::BufReader::new(file))?;
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let config: ModelConfig = serde_json::from_str(&text)?;
        if config != params.config {
            return Err(Error::Checkpoint(format!(
                "{} disagrees with the checkpoint header",
                sidecar.display()
            )));
        }
    }
    Ok(params)
}
