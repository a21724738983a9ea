//! Checkpoint file format: an 8-byte little-endian header length, a JSON
//! header `{formatVersion, config, tensors: [{name, shape, dtype, offset}]}`,
//! then the raw little-endian buffers in manifest order. Round trips are
//! bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::dtype::Dtype;
use crate::error::AdError;
use crate::tensor::Tensor;

#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    format_version: u32,
    config: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    dtype: String,
    offset: u64,
}

pub fn save_checkpoint<T: Dtype>(
    path: &Path,
    config: &serde_json::Value,
    tensors: &[(String, &Tensor<T>)],
) -> Result<(), AdError> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape(),
            dtype: T::NAME.to_string(),
            offset,
        });
        offset += (t.len() * T::BYTE_WIDTH) as u64;
    }
    let header = Header { format_version: 1, config: config.clone(), tensors: entries };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| AdError::Format(e.to_string()))?;

    let mut out = fs::File::create(path)?;
    out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    let mut buf = Vec::with_capacity(offset as usize);
    for (_, t) in tensors {
        for &v in t.data() {
            T::write_le(v, &mut buf);
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint<T: Dtype>(
    path: &Path,
) -> Result<(serde_json::Value, Vec<(String, Tensor<T>)>), AdError> {
    let mut file = fs::File::open(path)?;
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| AdError::Format(e.to_string()))?;
    if header.format_version != 1 {
        return Err(AdError::Format(format!("unsupported version {}", header.format_version)));
    }
    let mut data = Vec::new();
    file.read_to_end(&mut data)?;

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        if entry.dtype != T::NAME {
            return Err(AdError::DtypeMismatch { expected: T::NAME, found: entry.dtype });
        }
        let count = entry.shape[0] * entry.shape[1];
        let start = entry.offset as usize;
        let end = start + count * T::BYTE_WIDTH;
        if end > data.len() {
            return Err(AdError::Format(format!("tensor {} exceeds data section", entry.name)));
        }
        let values: Vec<T> =
            data[start..end].chunks_exact(T::BYTE_WIDTH).map(T::read_le).collect();
        tensors.push((entry.name, Tensor::new(entry.shape[0], entry.shape[1], values)));
    }
    Ok((header.config, tensors))
}
