// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flat tensor container (safetensors layout).
//!
//! ```text
//! [u64 LE header length N][N bytes UTF-8 JSON header][raw LE f32 payloads]
//! ```
//!
//! The header maps each tensor name to
//! `{"dtype": "F32", "shape": [...], "data_offsets": [begin, end]}`, with
//! offsets relative to the first payload byte. An optional `__metadata__`
//! entry is ignored on read.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

const METADATA_KEY: &str = "__metadata__";

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

pub fn parse_container(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    if bytes.len() < 8 {
        return Err(Error::Container("file shorter than the 8-byte header length".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let payload_start = 8usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| {
            Error::Container(format!("header length {header_len} exceeds file size"))
        })?;
    let header: BTreeMap<String, serde_json::Value> =
        serde_json::from_slice(&bytes[8..payload_start]).map_err(|e| Error::json("container header", e))?;
    let payload = &bytes[payload_start..];

    let mut tensors = BTreeMap::new();
    for (name, value) in header {
        if name == METADATA_KEY {
            continue;
        }
        let entry: Entry = serde_json::from_value(value)
            .map_err(|e| Error::json(format!("container entry `{name}`"), e))?;
        if !entry.dtype.eq_ignore_ascii_case("f32") {
            return Err(Error::Container(format!(
                "tensor `{name}` has dtype {}, only F32 is supported",
                entry.dtype
            )));
        }
        let [begin, end] = entry.data_offsets;
        if begin > end || end > payload.len() {
            return Err(Error::Container(format!(
                "tensor `{name}` offsets [{begin}, {end}) fall outside the {}-byte payload",
                payload.len()
            )));
        }
        let numel: usize = entry.shape.iter().product();
        if end - begin != numel * 4 {
            return Err(Error::Container(format!(
                "tensor `{name}` spans {} bytes but shape {:?} needs {}",
                end - begin,
                entry.shape,
                numel * 4
            )));
        }
        tensors.insert(name, Tensor::from_le_bytes(entry.shape, &payload[begin..end])?);
    }
    Ok(tensors)
}

pub fn read_container(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_container(&bytes)
}

/// Serializes tensors in name order; the header is space-padded to a
/// multiple of 8 bytes.
pub fn container_bytes(tensors: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut header = BTreeMap::new();
    let mut offset = 0;
    for (name, t) in tensors {
        let len = t.numel() * 4;
        header.insert(
            name.clone(),
            Entry {
                dtype: "F32".into(),
                shape: t.shape().to_vec(),
                data_offsets: [offset, offset + len],
            },
        );
        offset += len;
    }
    let mut header_json = serde_json::to_vec(&header).expect("header serializes");
    while header_json.len() % 8 != 0 {
        header_json.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + header_json.len() + offset);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for t in tensors.values() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

pub fn write_container(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    std::fs::write(path, container_bytes(tensors)).map_err(|e| Error::io(path, e))
}
