//! Checkpoint file: an 8-byte magic, a little-endian `u64` header length, a
//! UTF-8 JSON header, then one little-endian `f32` blob holding every tensor
//! at the offsets listed in the header.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PTOMOCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Param,
    Buffer,
    Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    /// Offset into the blob, in elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub spec_hash: String,
    pub parameter_count: usize,
    pub tensors: Vec<TensorEntry>,
    /// Total blob length, in elements.
    pub blob_len: usize,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Named arrays of a model plus any extra state stored alongside it.
#[derive(Debug, Clone, Default)]
pub struct Weights {
    pub spec_hash: String,
    pub tensors: Vec<(String, TensorKind, Tensor<f32>)>,
}

impl Weights {
    pub fn from_model(model: &Model<f32>) -> Self {
        let mut tensors: Vec<_> = model
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), TensorKind::Param, p.value.clone()))
            .collect();
        tensors.extend(
            model
                .buffers()
                .into_iter()
                .map(|b| (b.name.clone(), TensorKind::Buffer, b.value.clone())),
        );
        Weights {
            spec_hash: model.spec().spec_hash(),
            tensors,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(_, k, _)| *k == TensorKind::Param)
            .map(|(_, _, t)| t.len())
            .sum()
    }
}

/// Writes the model and optional extra tensors (e.g. optimizer moments).
pub fn save_checkpoint(
    model: &Model<f32>,
    path: impl AsRef<Path>,
    extra: &[(String, &Tensor<f32>)],
    meta: serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    let mut weights = Weights::from_model(model);
    weights.tensors.extend(
        extra
            .iter()
            .map(|(name, t)| (name.clone(), TensorKind::Extra, (*t).clone())),
    );
    let mut entries = Vec::with_capacity(weights.tensors.len());
    let mut offset = 0;
    for (name, kind, t) in &weights.tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            kind: *kind,
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
    }
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        spec: *model.spec(),
        spec_hash: weights.spec_hash.clone(),
        parameter_count: model.parameter_count(),
        tensors: entries,
        blob_len: offset,
        meta,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut bytes = Vec::with_capacity(16 + header_bytes.len() + 4 * offset);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_bytes);
    for (_, _, t) in &weights.tensors {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("ckpt.tmp");
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A loaded checkpoint: the model, the extra tensors and the header metadata.
pub struct Checkpoint {
    pub model: Model<f32>,
    pub extra: BTreeMap<String, Tensor<f32>>,
    pub meta: serde_json::Value,
}

pub fn read_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse(path, &bytes)?.0)
}

fn parse<'a>(path: &Path, bytes: &'a [u8]) -> Result<(CheckpointHeader, &'a [u8])> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad checkpoint magic"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() < header_len {
        return Err(Error::format(path, "truncated checkpoint header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[..header_len])
        .map_err(|e| Error::format(path, format!("bad checkpoint header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {}", header.format_version),
        ));
    }
    let blob = &body[header_len..];
    if blob.len() != 4 * header.blob_len {
        return Err(Error::format(
            path,
            format!(
                "blob holds {} bytes, header declares {} f32 values",
                blob.len(),
                header.blob_len
            ),
        ));
    }
    Ok((header, blob))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, blob) = parse(path, &bytes)?;
    if header.spec.spec_hash() != header.spec_hash {
        return Err(Error::SpecMismatch(format!(
            "{}: stored spec hash does not match stored spec",
            path.display()
        )));
    }
    let mut model = Model::<f32>::new(header.spec, 0)?;

    let mut by_name: BTreeMap<&str, (&TensorEntry, Vec<f32>)> = BTreeMap::new();
    for entry in &header.tensors {
        let len: usize = entry.shape.iter().product();
        let end = entry.offset + len;
        if end > header.blob_len {
            return Err(Error::format(path, format!("tensor {} exceeds blob", entry.name)));
        }
        let data = blob[4 * entry.offset..4 * end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        by_name.insert(entry.name.as_str(), (entry, data));
    }

    let mut take = |name: &str, kind: TensorKind, target: &mut Tensor<f32>| -> Result<()> {
        let (entry, data) = by_name
            .remove(name)
            .ok_or_else(|| Error::SpecMismatch(format!("checkpoint lacks tensor {name}")))?;
        if entry.kind != kind || entry.shape != target.shape() {
            return Err(Error::SpecMismatch(format!(
                "tensor {name}: stored {:?} {:?}, model expects {:?} {:?}",
                entry.kind,
                entry.shape,
                kind,
                target.shape()
            )));
        }
        target.data_mut().copy_from_slice(&data);
        Ok(())
    };
    for p in model.params_mut() {
        take(&p.name.clone(), TensorKind::Param, &mut p.value)?;
    }
    for b in model.buffers_mut() {
        take(&b.name.clone(), TensorKind::Buffer, &mut b.value)?;
    }

    let mut extra = BTreeMap::new();
    for (name, (entry, data)) in by_name {
        if entry.kind != TensorKind::Extra {
            return Err(Error::SpecMismatch(format!("unexpected model tensor {name}")));
        }
        extra.insert(name.to_string(), Tensor::from_vec(&entry.shape, data));
    }
    Ok(Checkpoint {
        model,
        extra,
        meta: header.meta,
    })
}

/// Loads a checkpoint and insists it was written for `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ModelSpec) -> Result<Checkpoint> {
    let path = path.as_ref();
    let header = read_header(path)?;
    if header.spec != *expected {
        return Err(Error::SpecMismatch(format!(
            "{} holds {:?}, expected {:?}",
            path.display(),
            header.spec,
            expected
        )));
    }
    load_checkpoint(path)
}
