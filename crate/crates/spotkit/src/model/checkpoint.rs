//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "SPOTCKPT"
//! version  u32      1
//! cfg_len  u32      length of the config JSON
//! config   cfg_len  canonical serde_json of ModelConfig
//! digest   32 bytes sha256 of the config JSON
//! count    u32      number of tensors
//! manifest per tensor: name_len u16, name utf-8, rows u32, cols u32
//! payload  f64 little-endian, tensors in manifest order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ModelConfig, ParamSet};

const MAGIC: &[u8; 8] = b"SPOTCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a spotkit checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("config digest mismatch; file is corrupt")]
    DigestMismatch,
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] super::ModelError),
}

/// Serialize parameters into the checkpoint container.
pub fn write_checkpoint(params: &ParamSet, mut w: impl Write) -> Result<(), CheckpointError> {
    let config_json = serde_json::to_vec(&params.config)?;
    let digest = Sha256::digest(&config_json);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(config_json.len() as u32).to_le_bytes())?;
    w.write_all(&config_json)?;
    w.write_all(&digest)?;

    let names = params.tensor_names();
    let tensors = params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, m) in names.iter().zip(&tensors) {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(m.rows as u32).to_le_bytes())?;
        w.write_all(&(m.cols as u32).to_le_bytes())?;
    }
    for m in tensors {
        for v in &m.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Parse a checkpoint back into parameters, validating the header and every
/// tensor shape against the embedded config.
pub fn read_checkpoint(mut r: impl Read) -> Result<ParamSet, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    r.read_exact(&mut u32buf)?;
    let cfg_len = u32::from_le_bytes(u32buf) as usize;
    let mut config_json = vec![0u8; cfg_len];
    r.read_exact(&mut config_json)?;
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)?;
    if Sha256::digest(&config_json).as_slice() != digest {
        return Err(CheckpointError::DigestMismatch);
    }
    let config: ModelConfig = serde_json::from_slice(&config_json)?;

    r.read_exact(&mut u32buf)?;
    let count = u32::from_le_bytes(u32buf) as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let mut u16buf = [0u8; 2];
        r.read_exact(&mut u16buf)?;
        let name_len = u16::from_le_bytes(u16buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| CheckpointError::Format("tensor name is not utf-8".into()))?;
        r.read_exact(&mut u32buf)?;
        let rows = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let cols = u32::from_le_bytes(u32buf) as usize;
        manifest.push((name, rows, cols));
    }

    // materialize the shape from the config, then fill from the payload
    let mut params = ParamSet::init(&config, 0)?;
    let names = params.tensor_names();
    if names.len() != manifest.len() {
        return Err(CheckpointError::Format(format!(
            "expected {} tensors, manifest has {}",
            names.len(),
            manifest.len()
        )));
    }
    for (want_name, (got_name, _, _)) in names.iter().zip(&manifest) {
        if want_name != got_name {
            return Err(CheckpointError::Format(format!(
                "tensor order mismatch: expected {want_name:?}, found {got_name:?}"
            )));
        }
    }
    let tensors = params.tensors_mut();
    for (m, (name, rows, cols)) in tensors.into_iter().zip(&manifest) {
        if m.rows != *rows || m.cols != *cols {
            return Err(CheckpointError::Format(format!(
                "tensor {name:?} has shape {}x{} but config implies {}x{}",
                rows, cols, m.rows, m.cols
            )));
        }
        let mut buf = vec![0u8; m.data.len() * 8];
        r.read_exact(&mut buf)?;
        for (v, chunk) in m.data.iter_mut().zip(buf.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    Ok(params)
}

/// Write a checkpoint file.
pub fn save_checkpoint(params: &ParamSet, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(params, &mut w)?;
    Ok(())
}

/// Read a checkpoint file.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamSet, CheckpointError> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params() -> ParamSet {
        let cfg = ModelConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            mlp_factor: 2,
            max_len_stage1: 8,
            max_len_stage2: 8,
            vocab_size: 12,
            grid_g: 8,
            grid_c: 2,
            patch: 4,
        };
        ParamSet::init(&cfg, 77).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let params = tiny_params();
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = read_checkpoint(&b"NOTACKPTxxxx"[..]).unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic));
    }

    #[test]
    fn corrupted_config_is_rejected() {
        let params = tiny_params();
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        // flip a byte inside the config json
        buf[20] ^= 0xff;
        let err = read_checkpoint(buf.as_slice()).unwrap_err();
        assert!(matches!(
            err,
            CheckpointError::DigestMismatch | CheckpointError::Json(_)
        ));
    }
}
