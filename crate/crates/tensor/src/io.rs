//! On-disk model format.
//!
//! A model named `stem` is three files: `stem.spec.json` (the
//! [`ModelSpec`]), `stem.params.bin` (every parameter as little-endian
//! `f32`, concatenated in layer order) and `stem.params.json`, a sidecar
//! mapping parameter names to byte offsets and shapes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::model::Model;
use crate::spec::ModelSpec;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    /// Byte offset into the blob.
    pub offset: usize,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamIndex {
    pub dtype: String,
    pub total_bytes: usize,
    pub params: Vec<ParamEntry>,
}

pub fn encode_params(model: &Model<f32>) -> (Vec<u8>, ParamIndex) {
    let mut blob = Vec::with_capacity(model.parameter_count() * 4);
    let mut params = Vec::new();
    for (name, p) in model.named_params() {
        params.push(ParamEntry {
            name,
            offset: blob.len(),
            shape: p.shape().to_vec(),
        });
        for v in p.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let index = ParamIndex {
        dtype: "f32le".into(),
        total_bytes: blob.len(),
        params,
    };
    (blob, index)
}

pub fn decode_params(spec: ModelSpec, blob: &[u8], index: &ParamIndex) -> Result<Model<f32>> {
    if index.dtype != "f32le" {
        return Err(TensorError::Format(format!("unsupported dtype {}", index.dtype)));
    }
    if index.total_bytes != blob.len() {
        return Err(TensorError::Format(format!(
            "blob has {} bytes, index declares {}",
            blob.len(),
            index.total_bytes
        )));
    }
    let template = Model::<f32>::zeroed(spec.clone())?;
    let expected = template.named_params();
    if expected.len() != index.params.len() {
        return Err(TensorError::Format(format!(
            "index lists {} parameters, model has {}",
            index.params.len(),
            expected.len()
        )));
    }
    let mut groups: Vec<Vec<Tensor<f32>>> = template.params().iter().map(|_| Vec::new()).collect();
    let mut flat = index.params.iter();
    for (layer, group) in template.params().iter().enumerate() {
        for p in group {
            let entry = flat.next().expect("length checked");
            if entry.shape != p.shape() {
                return Err(TensorError::Format(format!("{}: shape {:?} != {:?}", entry.name, entry.shape, p.shape())));
            }
            let len = p.len() * 4;
            let bytes = blob
                .get(entry.offset..entry.offset + len)
                .ok_or_else(|| TensorError::Format(format!("{}: offset out of range", entry.name)))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            groups[layer].push(Tensor::new(entry.shape.clone(), data)?);
        }
    }
    Model::from_parts(spec, groups)
}

pub fn paths(dir: &Path, stem: &str) -> [PathBuf; 3] {
    [
        dir.join(format!("{stem}.spec.json")),
        dir.join(format!("{stem}.params.bin")),
        dir.join(format!("{stem}.params.json")),
    ]
}

pub fn save_model(model: &Model<f32>, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let [spec_path, blob_path, index_path] = paths(dir, stem);
    let (blob, index) = encode_params(model);
    fs::write(spec_path, model.spec().to_json()?)?;
    fs::write(blob_path, blob)?;
    fs::write(index_path, serde_json::to_string_pretty(&index)?)?;
    Ok(())
}

pub fn load_model(dir: &Path, stem: &str) -> Result<Model<f32>> {
    let [spec_path, blob_path, index_path] = paths(dir, stem);
    let spec = ModelSpec::from_json(&fs::read_to_string(spec_path)?)?;
    let blob = fs::read(blob_path)?;
    let index: ParamIndex = serde_json::from_str(&fs::read_to_string(index_path)?)?;
    decode_params(spec, &blob, &index)
}
