//! Checkpoint persistence: per-tensor binary blobs plus a JSON manifest.
//!
//! Tensors round-trip bitwise. Loading validates shapes and the config hash,
//! so a checkpoint cannot silently load into a mismatched architecture.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{AgentParams, NetConfig, MATRIX_NAMES, VECTOR_NAMES};

const TENSOR_MAGIC: u32 = 0x4657_5442; // "FWTB"

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub step: u64,
    pub config: NetConfig,
    pub config_hash: u64,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn config_hash(config: &NetConfig) -> u64 {
    fnv1a64(serde_json::to_string(config).unwrap().as_bytes())
}

fn write_tensor(path: &Path, rows: usize, cols: usize, data: &[f32]) -> Result<()> {
    let mut payload = Vec::with_capacity(16 + data.len() * 4 + 8);
    payload.extend_from_slice(&TENSOR_MAGIC.to_le_bytes());
    payload.extend_from_slice(&(rows as u32).to_le_bytes());
    payload.extend_from_slice(&(cols as u32).to_le_bytes());
    payload.extend_from_slice(&0u32.to_le_bytes());
    for &x in data {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    let checksum = fnv1a64(&payload);
    payload.extend_from_slice(&checksum.to_le_bytes());
    fs::write(path, payload)?;
    Ok(())
}

fn read_tensor(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 24 {
        return Err(Error::Checkpoint(format!("{}: truncated", path.display())));
    }
    let (payload, checksum_bytes) = bytes.split_at(bytes.len() - 8);
    let expected = u64::from_le_bytes(checksum_bytes.try_into().unwrap());
    if fnv1a64(payload) != expected {
        return Err(Error::Checkpoint(format!(
            "{}: checksum failure",
            path.display()
        )));
    }
    let magic = u32::from_le_bytes(payload[0..4].try_into().unwrap());
    if magic != TENSOR_MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let rows = u32::from_le_bytes(payload[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(payload[8..12].try_into().unwrap()) as usize;
    if payload.len() != 16 + rows * cols * 4 {
        return Err(Error::Checkpoint(format!("{}: truncated", path.display())));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows * cols {
        let off = 16 + i * 4;
        data.push(f32::from_le_bytes(payload[off..off + 4].try_into().unwrap()));
    }
    Ok((rows, cols, data))
}

/// Write params (weights, biases, mask) into `dir`.
pub fn checkpoint_save(params: &AgentParams<f32>, step: u64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    let mut dump =
        |name: String, rows: usize, cols: usize, data: &[f32]| -> Result<()> {
            write_tensor(&dir.join(format!("{name}.bin")), rows, cols, data)?;
            tensors.push(TensorEntry {
                name,
                rows,
                cols,
                dtype: "f32".into(),
            });
            Ok(())
        };
    for (name, m) in MATRIX_NAMES.iter().zip(params.matrices()) {
        dump(
            (*name).to_owned(),
            m.nrows(),
            m.ncols(),
            m.as_slice().expect("contiguous"),
        )?;
    }
    for (name, v) in VECTOR_NAMES.iter().zip(params.vectors()) {
        dump(
            (*name).to_owned(),
            1,
            v.len(),
            v.as_slice().expect("contiguous"),
        )?;
    }
    for (name, m) in MATRIX_NAMES.iter().zip(params.mask.matrices()) {
        dump(
            format!("mask.{name}"),
            m.nrows(),
            m.ncols(),
            m.as_slice().expect("contiguous"),
        )?;
    }
    let manifest = CheckpointManifest {
        format_version: crate::telemetry::FORMAT_VERSION,
        step,
        config: params.config.clone(),
        config_hash: config_hash(&params.config),
        tensors,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn checkpoint_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    Ok(manifest)
}

/// Load params from `dir`, validating the architecture against `expected`.
pub fn checkpoint_load(dir: &Path, expected: &NetConfig) -> Result<(AgentParams<f32>, u64)> {
    let manifest = checkpoint_manifest(dir)?;
    if &manifest.config != expected {
        return Err(Error::Checkpoint(format!(
            "config mismatch: checkpoint {:?}, expected {:?}",
            manifest.config, expected
        )));
    }
    if manifest.config_hash != config_hash(expected) {
        return Err(Error::Checkpoint("config hash mismatch".into()));
    }
    let mut params = AgentParams::<f32>::zeros(expected.clone());
    let load_matrix = |name: &str, m: &mut Array2<f32>| -> Result<()> {
        let (rows, cols, data) = read_tensor(&dir.join(format!("{name}.bin")))?;
        if rows != m.nrows() || cols != m.ncols() {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {rows}x{cols}, expected {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        *m = Array2::from_shape_vec((rows, cols), data).expect("shape checked");
        Ok(())
    };
    let load_vector = |name: &str, v: &mut Array1<f32>| -> Result<()> {
        let (rows, cols, data) = read_tensor(&dir.join(format!("{name}.bin")))?;
        if rows != 1 || cols != v.len() {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {rows}x{cols}, expected 1x{}",
                v.len()
            )));
        }
        *v = Array1::from_vec(data);
        Ok(())
    };
    for (name, m) in MATRIX_NAMES.iter().zip(params.matrices_mut()) {
        load_matrix(name, m)?;
    }
    for (name, v) in VECTOR_NAMES.iter().zip(params.vectors_mut()) {
        load_vector(name, v)?;
    }
    for (name, m) in MATRIX_NAMES.iter().zip(params.mask.matrices_mut()) {
        load_matrix(&format!("mask.{name}"), m)?;
    }
    Ok((params, manifest.step))
}
