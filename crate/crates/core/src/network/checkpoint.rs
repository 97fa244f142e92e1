//! `CKPT` container: magic, version, SHA-256 of the model config, parameter
//! count, then the parameters as little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{ModelConfig, ModelParams, Network};

pub const CKPT_MAGIC: [u8; 4] = *b"CKPT";
pub const CKPT_VERSION: u32 = 1;

/// SHA-256 over the canonical JSON form of the config.
pub fn config_digest(cfg: &ModelConfig) -> [u8; 32] {
    let json = serde_json::to_vec(cfg).expect("model config serializes");
    Sha256::digest(&json).into()
}

pub fn write_checkpoint<W: Write>(mut w: W, cfg: &ModelConfig, params: &ModelParams) -> Result<()> {
    w.write_all(&CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&config_digest(cfg))?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for &v in params.as_slice() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint for `net`, rejecting it if the stored config digest
/// differs from `net`'s.
pub fn read_checkpoint<R: Read>(mut r: R, net: &Network) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CKPT_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CKPT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)?;
    if digest != config_digest(net.config()) {
        return Err(Error::DigestMismatch);
    }
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    if count != net.param_count() {
        return Err(Error::DimensionMismatch {
            expected: net.param_count(),
            got: count,
        });
    }
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    net.params_from_vec(values)
}

pub fn save_checkpoint(path: impl AsRef<Path>, cfg: &ModelConfig, params: &ModelParams) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), cfg, params)
}

pub fn load_checkpoint(path: impl AsRef<Path>, net: &Network) -> Result<ModelParams> {
    read_checkpoint(BufReader::new(File::open(path)?), net)
}
