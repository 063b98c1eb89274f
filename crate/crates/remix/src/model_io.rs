//! Versioned flat binary serialization of model parameters.
//!
//! Layout, all little-endian: the magic bytes `RMXM`, a `u32` format
//! version, a `u32` layer count, then `rows`/`cols` as `u32` pairs for every
//! layer, then for every layer its row-major weights followed by its bias as
//! 64-bit floats. The activation is not stored; the loader takes it as a
//! parameter.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Activation, ModelState};

pub const MODEL_MAGIC: [u8; 4] = *b"RMXM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Serialize parameters to `path`, overwriting any existing file.
pub fn save_model(state: &ModelState, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(state.num_layers() as u32).to_le_bytes());
    for l in 0..state.num_layers() {
        let (weights, bias) = state.layer(l)?;
        let rows = bias.len() as u32;
        let cols = (weights.len() / bias.len()) as u32;
        bytes.extend_from_slice(&rows.to_le_bytes());
        bytes.extend_from_slice(&cols.to_le_bytes());
    }
    for l in 0..state.num_layers() {
        let (weights, bias) = state.layer(l)?;
        for w in weights {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        for b in bias {
            bytes.extend_from_slice(&b.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Deserialize parameters from `path`. Momentum buffers start at zero.
pub fn load_model(path: &Path, activation: Activation) -> Result<ModelState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = Cursor {
        bytes: &bytes,
        offset: 0,
        path,
    };
    let magic: [u8; 4] = cursor.take(4, "magic bytes")?.try_into().expect("4 bytes");
    if magic != MODEL_MAGIC {
        return Err(cursor.malformed(0, format!("bad magic bytes {magic:?}")));
    }
    let version = cursor.read_u32("format version")?;
    if version != MODEL_FORMAT_VERSION {
        return Err(cursor.malformed(4, format!("unsupported format version {version}")));
    }
    let layer_count = cursor.read_u32("layer count")? as usize;
    if layer_count == 0 {
        return Err(cursor.malformed(8, "layer count must be positive".into()));
    }
    let mut dims = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let rows = cursor.read_u32("layer rows")? as usize;
        let cols = cursor.read_u32("layer cols")? as usize;
        if rows == 0 || cols == 0 {
            return Err(cursor.malformed(cursor.offset - 8, "zero layer dimension".into()));
        }
        dims.push((rows, cols));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for &(rows, cols) in &dims {
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weights.push(cursor.read_f64("weight")?);
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            bias.push(cursor.read_f64("bias")?);
        }
        layers.push((weights, bias));
    }
    if cursor.offset != bytes.len() as u64 {
        return Err(cursor.malformed(cursor.offset, "trailing bytes after parameters".into()));
    }
    ModelState::from_layers(layers, activation)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: u64,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let start = self.offset as usize;
        let end = start + n;
        if end > self.bytes.len() {
            return Err(self.malformed(self.offset, format!("file truncated reading {what}")));
        }
        self.offset = end as u64;
        Ok(&self.bytes[start..end])
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn read_f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn malformed(&self, offset: u64, message: String) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset,
            message,
        }
    }
}
