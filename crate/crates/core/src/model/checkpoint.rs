//! Binary parameter files.
//!
//! Layout, little-endian throughout:
//! `magic (8) | version u32 | config sha-256 (32) | config length u32 |
//! config JSON | tensor count u32 | per tensor: rows u32, cols u32, f32 data`.
//! Tensors follow [`ModelParams::tensors`] order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::ModelParams;
use crate::config::SpottingConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CTXSPOT\0";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut out: W, params: &ModelParams<f32>, cfg: &SpottingConfig) -> std::io::Result<()> {
    let config = serde_json::to_vec(cfg).expect("config serializes");
    let hash = hex::decode(cfg.hash()).expect("hash is hex");
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&hash)?;
    out.write_all(&(config.len() as u32).to_le_bytes())?;
    out.write_all(&config)?;
    let tensors = params.tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.nrows() as u32).to_le_bytes())?;
        out.write_all(&(t.ncols() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad("truncated file"))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelParams<f32>, SpottingConfig)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated file"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut hash = [0u8; 32];
    r.read_exact(&mut hash).map_err(|_| bad("truncated file"))?;
    let len = read_u32(&mut r)? as usize;
    let mut config = vec![0u8; len];
    r.read_exact(&mut config).map_err(|_| bad("truncated file"))?;
    let text = String::from_utf8(config).map_err(|_| bad("embedded config is not UTF-8"))?;
    let cfg = SpottingConfig::from_json_str(&text, Path::new("<checkpoint>"))?;
    if hex::encode(hash) != cfg.hash() {
        return Err(bad("config hash does not match the embedded config"));
    }
    let mut params = ModelParams::<f32>::init(&cfg, 0);
    let count = read_u32(&mut r)? as usize;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(bad(format!("{count} tensors, model has {}", slots.len())));
    }
    for (i, slot) in slots.iter_mut().enumerate() {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        if (rows, cols) != slot.dim() {
            return Err(bad(format!("tensor {i} is {rows}x{cols}, expected {:?}", slot.dim())));
        }
        let mut bytes = vec![0u8; rows * cols * 4];
        r.read_exact(&mut bytes).map_err(|_| bad("truncated file"))?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        **slot = Array2::from_shape_vec((rows, cols), data).expect("sized above");
    }
    drop(slots);
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok((params, cfg))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams<f32>, cfg: &SpottingConfig) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_checkpoint(&mut out, params, cfg)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, SpottingConfig)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
