//! Model checkpoint container: magic "VSTM", format version u32, a
//! length-prefixed JSON header (model config + training version), then
//! named tensors (name, rows u64, cols u64, little-endian f64 data) and a
//! trailing CRC32 of all preceding bytes.

use super::vista::{ModelConfig, VistaModel};
use super::ModelError;
use crate::delivery::codec::crc32;
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"VSTM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    version: u64,
}

pub fn save_model(model: &VistaModel, path: &Path) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let header = serde_json::to_vec(&Header { config: model.cfg.clone(), version: model.version })?;
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);

    let mut tensors: Vec<(String, Matrix)> = Vec::new();
    model.visit_params(&mut |n, m| tensors.push((n, m.clone())));
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, m) in &tensors {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<VistaModel, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(CheckpointError::Corrupt("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(CheckpointError::Corrupt("checksum mismatch".into()));
    }
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if body.len() - *pos < n {
            return Err(CheckpointError::Corrupt("truncated".into()));
        }
        let s = &body[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let fmt = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if fmt != FORMAT_VERSION {
        return Err(CheckpointError::Corrupt(format!("unsupported format version {fmt}")));
    }
    let hlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(&mut pos, hlen)?)?;
    let count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());

    let mut model = VistaModel::new(header.config);
    model.version = header.version;
    let mut loaded = std::collections::BTreeMap::new();
    for _ in 0..count {
        let nlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, nlen)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("tensor name not utf8".into()))?;
        let rows = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        if rows.saturating_mul(cols) > (1 << 30) {
            return Err(CheckpointError::Corrupt(format!("tensor {name} claims {rows}x{cols}")));
        }
        let raw = take(&mut pos, rows * cols * 8)?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        loaded.insert(name, Matrix::from_raw(rows, cols, data));
    }
    if pos != body.len() {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    let mut missing = Vec::new();
    model.visit_params_mut(&mut |name, p| match loaded.get(&name) {
        Some(m) if m.same_shape(p) => *p = m.clone(),
        Some(m) => missing.push(format!("{name}: shape {} vs {}", m.shape_str(), p.shape_str())),
        None => missing.push(format!("{name}: absent")),
    });
    if !missing.is_empty() {
        return Err(CheckpointError::Corrupt(format!("tensor mismatch: {}", missing.join("; "))));
    }
    Ok(model)
}
