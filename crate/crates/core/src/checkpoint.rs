//! Checkpoint format: a JSON manifest plus one raw little-endian `f64` file
//! per weight matrix (row-major), each hash-verified on load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rnn::NetworkParams;
use crate::task::{TaskKind, CHANNEL_ORDER, N_ACTIONS, N_INPUTS};
use crate::trace::Paradigm;

pub const FORMAT: &str = "rnnlab-checkpoint";
pub const VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub n_hidden: usize,
    pub n_inputs: usize,
    pub n_actions: usize,
    pub channel_order: Vec<String>,
    pub delta: f64,
    pub seed: u64,
    pub task: TaskKind,
    pub paradigm: Paradigm,
    pub update: usize,
    pub accuracy: f64,
    pub arrays: Vec<ArrayEntry>,
}

/// Run metadata stored alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointInfo {
    pub seed: u64,
    pub task: TaskKind,
    pub paradigm: Paradigm,
    pub update: usize,
    pub accuracy: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn encode(m: &Mat) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.data.len() * 8);
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8], rows: usize, cols: usize) -> Result<Mat> {
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "expected {} bytes for {rows}x{cols}, found {}",
            rows * cols * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Mat::from_vec(rows, cols, data))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the checkpoint into `dir` (created if missing).
pub fn save(dir: &Path, params: &NetworkParams, info: &CheckpointInfo) -> Result<CheckpointManifest> {
    params.check_shapes()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = ["w_hh", "w_ih", "w_ho", "w_hv"];
    let mut arrays = Vec::with_capacity(4);
    for (name, m) in names.iter().zip(params.tensors()) {
        let file = format!("{name}.f64");
        let bytes = encode(m);
        write_file(&dir.join(&file), &bytes)?;
        arrays.push(ArrayEntry {
            name: name.to_string(),
            file,
            rows: m.rows,
            cols: m.cols,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: VERSION,
        n_hidden: params.n_hidden(),
        n_inputs: N_INPUTS,
        n_actions: N_ACTIONS,
        channel_order: CHANNEL_ORDER.iter().map(|s| s.to_string()).collect(),
        delta: params.delta,
        seed: info.seed,
        task: info.task,
        paradigm: info.paradigm,
        update: info.update,
        accuracy: info.accuracy,
        arrays,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_file(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: CheckpointManifest = serde_json::from_str(&text)?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint {} v{}",
            m.format, m.version
        )));
    }
    if m.channel_order != CHANNEL_ORDER {
        return Err(Error::Format("unexpected input channel order".into()));
    }
    Ok(m)
}

/// Loads and hash-verifies a checkpoint.
pub fn load(dir: &Path) -> Result<(NetworkParams, CheckpointManifest)> {
    let m = read_manifest(dir)?;
    let mut mats = Vec::with_capacity(4);
    for name in ["w_hh", "w_ih", "w_ho", "w_hv"] {
        let entry = m
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Format(format!("missing array {name}")))?;
        let path: PathBuf = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::HashMismatch { path });
        }
        mats.push(decode(&bytes, entry.rows, entry.cols)?);
    }
    let mut it = mats.into_iter();
    let params = NetworkParams {
        w_hh: it.next().unwrap(),
        w_ih: it.next().unwrap(),
        w_ho: it.next().unwrap(),
        w_hv: it.next().unwrap(),
        delta: m.delta,
    };
    params.check_shapes()?;
    if params.n_hidden() != m.n_hidden {
        return Err(Error::Shape("manifest n_hidden disagrees with arrays".into()));
    }
    Ok((params, m))
}

/// True when the checkpoint exists and every array hash-verifies.
pub fn verify(dir: &Path) -> bool {
    load(dir).is_ok()
}
