//! Parameter checkpoints: magic `TCCP1`, a JSON config line, then named
//! tensors (name, shape, little-endian f32 data, row-major). Round-trips
//! are bit-exact.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{init_params, ModelConfig, ModelError, ModelParams};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"TCCP1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected TCCP1, found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("truncated checkpoint while reading {context}")]
    Truncated { context: &'static str },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint tensor {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn write_tensor(w: &mut impl Write, name: &str, t: &Tensor<f32>) -> Result<(), CheckpointError> {
    let name_bytes = name.as_bytes();
    w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
    w.write_all(name_bytes)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_or(
    r: &mut impl Read,
    buf: &mut [u8],
    context: &'static str,
) -> Result<(), CheckpointError> {
    r.read_exact(buf)
        .map_err(|_| CheckpointError::Truncated { context })
}

fn read_u32(r: &mut impl Read, context: &'static str) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, context)?;
    Ok(u32::from_le_bytes(b))
}

fn read_tensor(r: &mut impl Read) -> Result<(String, Tensor<f32>), CheckpointError> {
    let name_len = read_u32(r, "tensor name length")? as usize;
    if name_len > 4096 {
        return Err(CheckpointError::Malformed(format!(
            "tensor name of {name_len} bytes"
        )));
    }
    let mut name_bytes = vec![0u8; name_len];
    read_exact_or(r, &mut name_bytes, "tensor name")?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?;
    let rank = read_u32(r, "tensor rank")? as usize;
    if rank > 4 {
        return Err(CheckpointError::Malformed(format!("tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(r, "tensor shape")? as usize);
    }
    let count: usize = shape.iter().product();
    let mut bytes = vec![0u8; count * 4];
    read_exact_or(r, &mut bytes, "tensor data")?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let tensor =
        Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    Ok((name, tensor))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams<f32>,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    serde_json::to_writer(&mut w, &params.config)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    w.write_all(b"\n")?;
    let named = params.named_tensors();
    w.write_all(&((named.len() + 1) as u32).to_le_bytes())?;
    write_tensor(&mut w, "pos_table", &params.pos_table)?;
    for (name, t) in named {
        write_tensor(&mut w, &name, t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams<f32>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        read_exact_or(&mut r, &mut byte, "config header")?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 64 * 1024 {
            return Err(CheckpointError::Malformed("config header too long".into()));
        }
    }
    let config: ModelConfig = serde_json::from_slice(&header)
        .map_err(|e| CheckpointError::Malformed(format!("config: {e}")))?;

    let count = read_u32(&mut r, "tensor count")? as usize;
    let mut stored: HashMap<String, Tensor<f32>> = HashMap::with_capacity(count);
    for _ in 0..count {
        let (name, tensor) = read_tensor(&mut r)?;
        if stored.insert(name.clone(), tensor).is_some() {
            return Err(CheckpointError::Malformed(format!(
                "duplicate tensor {name}"
            )));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::Malformed("trailing data".into()));
    }

    // Build a skeleton with the right shapes, then fill each tensor by name.
    let mut params = init_params(&config)?;
    let mut take = |name: &str, expected: &[usize]| -> Result<Tensor<f32>, CheckpointError> {
        let t = stored
            .remove(name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
        if t.shape() != expected {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                found: t.shape().to_vec(),
                expected: expected.to_vec(),
            });
        }
        Ok(t)
    };

    params.pos_table = take("pos_table", &[config.w + 1, config.d_model])?;
    let names: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec()))
        .collect();
    for ((name, shape), slot) in names.iter().zip(params.tensors_mut()) {
        *slot = take(name, shape)?;
    }
    if let Some(extra) = stored.keys().next() {
        return Err(CheckpointError::Malformed(format!(
            "unexpected tensor {extra}"
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = init_params(&ModelConfig::tiny()).unwrap();
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(params, loaded);

        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn roundtrip_with_track_embedding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = ModelConfig {
            use_track_embedding: true,
            ..ModelConfig::tiny()
        };
        let params = init_params(&cfg).unwrap();
        assert!(params.track_embedding.is_some());
        save_checkpoint(&path, &params).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), params);
    }

    #[test]
    fn truncation_and_bad_magic_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = init_params(&ModelConfig::tiny()).unwrap();
        save_checkpoint(&path, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Truncated { .. })
        ));

        let mut corrupted = bytes.clone();
        corrupted[2] = b'?';
        std::fs::write(&path, &corrupted).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadMagic { .. })
        ));
    }
}
