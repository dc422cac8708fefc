//! Versioned binary checkpoint container.
//!
//! A checkpoint is a single file: an 8-byte magic (which doubles as the
//! format version), a JSON header describing what the parameters are
//! (stage kind, topology version, channel schedule, seed, lineage), then a
//! table of named `f64` tensors in little-endian byte order, sorted by name
//! so identical state always serializes to identical bytes. A checkpoint's
//! identity is the SHA-256 of its file bytes; artifacts reference each other
//! by that id (a sampler records the GLO checkpoint it was trained against,
//! and inference refuses mismatched pairs).
//!
//! All file writes in this crate go through [`write_atomic`]: data is
//! written to a sibling temporary file and renamed into place, so readers
//! never observe a half-written artifact.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SFCKPT01";

/// Descriptive header stored inside every checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointHeader {
    /// Which trainer produced this: "glo", "sampler", or "fed".
    pub kind: String,
    /// Topology stamp the parameters were built against.
    pub topology_version: String,
    /// Decoder channel schedule (empty for non-decoder checkpoints).
    pub channel_schedule: Vec<usize>,
    /// RNG seed of the producing run.
    pub seed: u64,
    /// Iterations completed when the checkpoint was written.
    pub iteration: u64,
    /// Optimizer step counter (for resuming adaptive optimizers).
    pub opt_step_count: u64,
    /// Checkpoint id of the artifact this one was trained against
    /// (sampler → GLO), if any.
    pub trained_against: Option<String>,
    /// Active ablation flags, sorted.
    pub ablation: Vec<String>,
    /// Final training loss at write time, if meaningful.
    pub final_loss: Option<f64>,
    /// Free-form metadata (kept ordered for reproducible bytes).
    pub notes: BTreeMap<String, String>,
}

impl CheckpointHeader {
    pub fn new(kind: &str, topology_version: &str, seed: u64) -> Self {
        CheckpointHeader {
            kind: kind.to_string(),
            topology_version: topology_version.to_string(),
            channel_schedule: Vec::new(),
            seed,
            iteration: 0,
            opt_step_count: 0,
            trained_against: None,
            ablation: Vec::new(),
            final_loss: None,
            notes: BTreeMap::new(),
        }
    }
}

/// Write `bytes` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{ext}.tmp"),
        None => "tmp".to_string(),
    });
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Serialize a checkpoint to bytes (exposed for hashing in tests).
pub fn encode_checkpoint(
    header: &CheckpointHeader,
    tensors: &[(String, ArrayD<f64>)],
) -> Result<Vec<u8>> {
    let mut sorted: Vec<&(String, ArrayD<f64>)> = tensors.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::InvalidParameter(format!(
                "duplicate tensor name '{}' in checkpoint",
                w[0].0
            )));
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let header_json = serde_json::to_vec(header)?;
    buf.write_u32::<LittleEndian>(header_json.len() as u32)?;
    buf.extend_from_slice(&header_json);
    buf.write_u32::<LittleEndian>(sorted.len() as u32)?;
    for (name, tensor) in sorted {
        let name_bytes = name.as_bytes();
        buf.write_u32::<LittleEndian>(name_bytes.len() as u32)?;
        buf.extend_from_slice(name_bytes);
        buf.write_u32::<LittleEndian>(tensor.ndim() as u32)?;
        for &d in tensor.shape() {
            buf.write_u64::<LittleEndian>(d as u64)?;
        }
        let flat = tensor
            .as_slice_memory_order()
            .ok_or_else(|| Error::InvalidParameter("non-contiguous tensor".into()))?;
        for &x in flat {
            buf.write_f64::<LittleEndian>(x)?;
        }
    }
    Ok(buf)
}

/// Write a checkpoint and return its id (SHA-256 of the file bytes).
pub fn write_checkpoint(
    path: &Path,
    header: &CheckpointHeader,
    tensors: &[(String, ArrayD<f64>)],
) -> Result<String> {
    let bytes = encode_checkpoint(header, tensors)?;
    write_atomic(path, &bytes)?;
    Ok(hex_sha256(&bytes))
}

/// Read a checkpoint, returning its header, tensors, and id.
pub fn read_checkpoint(
    path: &Path,
) -> Result<(CheckpointHeader, BTreeMap<String, ArrayD<f64>>, String)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::MissingArtifact(format!("checkpoint {}: {e}", path.display())))?;
    let id = hex_sha256(&bytes);
    let mut cur = std::io::Cursor::new(&bytes[..]);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic)
        .map_err(|_| Error::CorruptData("checkpoint shorter than its magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::VersionMismatch(format!(
            "checkpoint magic {:?} unsupported (this build reads {:?})",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC),
        )));
    }
    let header_len = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::CorruptData("truncated checkpoint header length".into()))?
        as usize;
    let mut header_json = vec![0u8; header_len];
    cur.read_exact(&mut header_json)
        .map_err(|_| Error::CorruptData("truncated checkpoint header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&header_json)
        .map_err(|e| Error::CorruptData(format!("checkpoint header: {e}")))?;
    let count = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::CorruptData("truncated tensor count".into()))? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::CorruptData("truncated tensor name length".into()))?
            as usize;
        let mut name_bytes = vec![0u8; name_len];
        cur.read_exact(&mut name_bytes)
            .map_err(|_| Error::CorruptData("truncated tensor name".into()))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::CorruptData("tensor name not UTF-8".into()))?;
        let ndim = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::CorruptData("truncated tensor rank".into()))?
            as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(
                cur.read_u64::<LittleEndian>()
                    .map_err(|_| Error::CorruptData("truncated tensor dims".into()))?
                    as usize,
            );
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(
                cur.read_f64::<LittleEndian>()
                    .map_err(|_| Error::CorruptData("truncated tensor data".into()))?,
            );
        }
        let tensor = ArrayD::from_shape_vec(IxDyn(&dims), data)
            .map_err(|e| Error::CorruptData(format!("tensor '{name}': {e}")))?;
        tensors.insert(name, tensor);
    }
    Ok((header, tensors, id))
}

/// SHA-256 of a file on disk, hex-encoded — the artifact's identity.
pub fn file_id(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    Ok(hex_sha256(&bytes))
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
