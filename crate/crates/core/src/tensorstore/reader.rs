//! Checkpoint opening and per-tensor reads.

use super::convert::{bf16_bits_to_f32, f16_bits_to_f32};
use super::{DType, Metadata, Result, TensorInfo, TensorStoreError, MAX_HEADER_BYTES};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

#[derive(Deserialize)]
struct HeaderEntry {
    dtype: DType,
    shape: Vec<usize>,
    data_offsets: [u64; 2],
}

#[derive(Deserialize)]
struct ShardIndex {
    #[serde(default)]
    #[allow(dead_code)]
    metadata: serde_json::Value,
    weight_map: BTreeMap<String, String>,
}

struct Shard {
    path: PathBuf,
    /// Absolute file offset where the data region begins (8 + header len).
    data_start: u64,
}

struct Entry {
    shard: usize,
    info: TensorInfo,
}

/// An opened checkpoint: one file or a shard set. Tensor payloads are read
/// on demand; opening only parses headers. Immutable and shareable across
/// threads once opened.
pub struct CheckpointHandle {
    shards: Vec<Shard>,
    index: BTreeMap<String, Entry>,
    metadata: Metadata,
}

/// Open a checkpoint from a single safetensors file or a shard-index file.
/// Paths ending in `.json` are treated as shard indexes.
pub fn open_checkpoint(path: impl AsRef<Path>) -> Result<CheckpointHandle> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "json") {
        open_sharded(path)
    } else {
        open_single(path)
    }
}

fn open_single(path: &Path) -> Result<CheckpointHandle> {
    let mut handle = CheckpointHandle {
        shards: Vec::new(),
        index: BTreeMap::new(),
        metadata: Metadata::new(),
    };
    let (entries, metadata) = parse_shard(path, &mut handle.shards)?;
    handle.metadata = metadata;
    for info in entries {
        handle
            .index
            .insert(info.name.clone(), Entry { shard: 0, info });
    }
    Ok(handle)
}

fn open_sharded(index_path: &Path) -> Result<CheckpointHandle> {
    let text = std::fs::read_to_string(index_path)?;
    let index: ShardIndex = serde_json::from_str(&text)
        .map_err(|e| TensorStoreError::MalformedHeader(format!("shard index: {e}")))?;
    let dir = index_path.parent().unwrap_or_else(|| Path::new("."));

    let mut handle = CheckpointHandle {
        shards: Vec::new(),
        index: BTreeMap::new(),
        metadata: Metadata::new(),
    };
    let mut shard_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut shard_tensors: Vec<BTreeMap<String, TensorInfo>> = Vec::new();

    for (tensor, shard_name) in &index.weight_map {
        let shard_id = match shard_ids.get(shard_name) {
            Some(&id) => id,
            None => {
                let shard_path = dir.join(shard_name);
                if !shard_path.is_file() {
                    return Err(TensorStoreError::MissingShard {
                        shard: shard_name.clone(),
                        referenced_by: index_path.display().to_string(),
                    });
                }
                let (entries, meta) = parse_shard(&shard_path, &mut handle.shards)?;
                // First shard's metadata wins; shards rarely disagree.
                if handle.metadata.is_empty() {
                    handle.metadata = meta;
                }
                let id = handle.shards.len() - 1;
                shard_ids.insert(shard_name.clone(), id);
                shard_tensors.push(entries.into_iter().map(|i| (i.name.clone(), i)).collect());
                id
            }
        };
        let info = shard_tensors[shard_id]
            .get(tensor)
            .cloned()
            .ok_or_else(|| {
                TensorStoreError::MalformedHeader(format!(
                    "shard index maps {tensor} to {shard_name}, but the shard does not contain it"
                ))
            })?;
        handle.index.insert(
            tensor.clone(),
            Entry {
                shard: shard_id,
                info,
            },
        );
    }
    Ok(handle)
}

/// Parse one safetensors file, push its shard record, and return its tensor
/// entries plus metadata.
fn parse_shard(path: &Path, shards: &mut Vec<Shard>) -> Result<(Vec<TensorInfo>, Metadata)> {
    let mut file = File::open(path)?;
    let file_len = file.metadata()?.len();

    let mut len_bytes = [0u8; 8];
    if file_len < 8 {
        return Err(TensorStoreError::MalformedHeader(format!(
            "{}: file too small for length prefix",
            path.display()
        )));
    }
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes);
    if header_len > MAX_HEADER_BYTES {
        return Err(TensorStoreError::MalformedHeader(format!(
            "{}: header length {header_len} exceeds cap",
            path.display()
        )));
    }
    if header_len.checked_add(8).is_none_or(|end| end > file_len) {
        return Err(TensorStoreError::MalformedHeader(format!(
            "{}: header length {header_len} exceeds file size {file_len}",
            path.display()
        )));
    }

    let mut header_bytes = vec![0u8; header_len as usize];
    file.read_exact(&mut header_bytes)?;
    let header_text = std::str::from_utf8(&header_bytes).map_err(|_| {
        TensorStoreError::MalformedHeader(format!("{}: header is not UTF-8", path.display()))
    })?;
    let raw: BTreeMap<String, serde_json::Value> = serde_json::from_str(header_text)
        .map_err(|e| TensorStoreError::MalformedHeader(format!("{}: {e}", path.display())))?;

    let data_start = 8 + header_len;
    let data_len = file_len - data_start;

    let mut metadata = Metadata::new();
    let mut entries = Vec::new();
    for (name, value) in raw {
        if name == "__metadata__" {
            metadata = serde_json::from_value(value).map_err(|e| {
                TensorStoreError::MalformedHeader(format!("{}: __metadata__: {e}", path.display()))
            })?;
            continue;
        }
        let entry: HeaderEntry = serde_json::from_value(value).map_err(|e| {
            TensorStoreError::MalformedHeader(format!("{}: tensor {name}: {e}", path.display()))
        })?;
        let [begin, end] = entry.data_offsets;
        let numel: usize = entry.shape.iter().product();
        let expected = (numel as u64) * (entry.dtype.byte_size() as u64);
        if end < begin || end - begin != expected {
            return Err(TensorStoreError::MalformedHeader(format!(
                "{}: tensor {name}: offsets ({begin},{end}) inconsistent with {} x {}",
                path.display(),
                numel,
                entry.dtype
            )));
        }
        if end > data_len {
            return Err(TensorStoreError::MalformedHeader(format!(
                "{}: tensor {name}: offsets ({begin},{end}) extend past data region of {data_len} bytes",
                path.display()
            )));
        }
        entries.push(TensorInfo {
            name,
            dtype: entry.dtype,
            shape: entry.shape,
            data_offsets: (begin, end),
        });
    }

    // Non-empty spans must not overlap.
    let mut spans: Vec<&TensorInfo> = entries.iter().filter(|i| i.byte_len() > 0).collect();
    spans.sort_by_key(|i| i.data_offsets.0);
    for pair in spans.windows(2) {
        if pair[0].data_offsets.1 > pair[1].data_offsets.0 {
            return Err(TensorStoreError::OverlappingOffsets {
                a: pair[0].name.clone(),
                b: pair[1].name.clone(),
            });
        }
    }

    shards.push(Shard {
        path: path.to_path_buf(),
        data_start,
    });
    Ok((entries, metadata))
}

impl CheckpointHandle {
    /// All tensors, sorted by name.
    pub fn list_tensors(&self) -> Vec<TensorInfo> {
        self.index.values().map(|e| e.info.clone()).collect()
    }

    /// Sorted tensor names.
    pub fn tensor_names(&self) -> Vec<String> {
        self.index.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn tensor_info(&self, name: &str) -> Result<&TensorInfo> {
        self.index
            .get(name)
            .map(|e| &e.info)
            .ok_or_else(|| TensorStoreError::UnknownTensor(name.to_string()))
    }

    /// Raw payload bytes for one tensor, exactly as stored.
    pub fn read_raw(&self, name: &str) -> Result<(TensorInfo, Vec<u8>)> {
        let entry = self
            .index
            .get(name)
            .ok_or_else(|| TensorStoreError::UnknownTensor(name.to_string()))?;
        let shard = &self.shards[entry.shard];
        let mut file = File::open(&shard.path)?;
        file.seek(SeekFrom::Start(
            shard.data_start + entry.info.data_offsets.0,
        ))?;
        let mut buf = vec![0u8; entry.info.byte_len() as usize];
        file.read_exact(&mut buf)?;
        Ok((entry.info.clone(), buf))
    }

    /// Decode one tensor's payload to f32 values. BF16 widens bitwise, F16
    /// uses standard half-precision decoding, F64 narrows with rounding.
    /// Integer and boolean tensors are rejected.
    pub fn read_tensor(&self, name: &str) -> Result<(TensorInfo, Vec<f32>)> {
        let (info, bytes) = self.read_raw(name)?;
        if !info.dtype.is_float() {
            return Err(TensorStoreError::UnsupportedDType {
                name: name.to_string(),
                dtype: info.dtype,
            });
        }
        let values = decode_f32(info.dtype, &bytes);
        Ok((info, values))
    }
}

fn decode_f32(dtype: DType, bytes: &[u8]) -> Vec<f32> {
    match dtype {
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        DType::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]) as f32)
            .collect(),
        DType::F16 => bytes
            .chunks_exact(2)
            .map(|c| f16_bits_to_f32(u16::from_le_bytes([c[0], c[1]])))
            .collect(),
        DType::BF16 => bytes
            .chunks_exact(2)
            .map(|c| bf16_bits_to_f32(u16::from_le_bytes([c[0], c[1]])))
            .collect(),
        _ => unreachable!("caller checks is_float"),
    }
}
