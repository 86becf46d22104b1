//! Checkpoint writing.
//!
//! Header JSON is emitted with sorted keys so identical inputs produce
//! identical bytes; payload offsets follow the caller's emission order.

use super::convert::{f32_to_bf16_bits, f32_to_f16_bits};
use super::{DType, Metadata, Result, TensorStoreError};
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Tensor payload handed to the writer: f32 values (cast to the declared
/// dtype with round-to-nearest-even) or raw little-endian bytes.
#[derive(Debug, Clone)]
pub enum TensorData {
    F32(Vec<f32>),
    Raw(Vec<u8>),
}

/// One tensor to write.
#[derive(Debug, Clone)]
pub struct TensorWrite {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl TensorWrite {
    pub fn f32(name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            dtype: DType::F32,
            shape,
            data: TensorData::F32(values),
        }
    }

    pub fn raw(name: impl Into<String>, dtype: DType, shape: Vec<usize>, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            dtype,
            shape,
            data: TensorData::Raw(bytes),
        }
    }
}

/// Incremental single-writer. Declared tensors fix the header up front;
/// payloads are then streamed one at a time in declaration order.
pub struct CheckpointWriter {
    out: BufWriter<File>,
    /// (name, expected payload bytes) in declaration order.
    pending: Vec<(String, u64)>,
    next: usize,
}

impl CheckpointWriter {
    /// Write the header for the declared tensors and return a writer
    /// expecting their payloads in order.
    pub fn create(
        path: impl AsRef<Path>,
        tensors: &[(String, DType, Vec<usize>)],
        metadata: &Metadata,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (name, _, _) in tensors {
            if !seen.insert(name.as_str()) {
                return Err(TensorStoreError::DuplicateName(name.clone()));
            }
        }

        // Offsets in declaration order; header keys sorted by serde_json.
        let mut header = serde_json::Map::new();
        if !metadata.is_empty() {
            header.insert(
                "__metadata__".into(),
                serde_json::to_value(metadata).unwrap(),
            );
        }
        let mut offset = 0u64;
        let mut pending = Vec::with_capacity(tensors.len());
        for (name, dtype, shape) in tensors {
            let numel: usize = shape.iter().product();
            let len = (numel as u64) * (dtype.byte_size() as u64);
            header.insert(
                name.clone(),
                serde_json::json!({
                    "dtype": dtype.name(),
                    "shape": shape,
                    "data_offsets": [offset, offset + len],
                }),
            );
            pending.push((name.clone(), len));
            offset += len;
        }

        let mut header_bytes = serde_json::to_vec(&header).expect("header serialization");
        // Space-pad so the data region starts at an 8-byte-aligned offset.
        while !(8 + header_bytes.len()).is_multiple_of(8) {
            header_bytes.push(b' ');
        }

        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        out.write_all(&header_bytes)?;
        Ok(Self {
            out,
            pending,
            next: 0,
        })
    }

    /// Write the payload for the next declared tensor.
    pub fn write_payload(&mut self, bytes: &[u8]) -> Result<()> {
        let (name, expected) = self
            .pending
            .get(self.next)
            .cloned()
            .unwrap_or_else(|| panic!("payload written past declared tensor list"));
        if bytes.len() as u64 != expected {
            return Err(TensorStoreError::LengthMismatch {
                name,
                got: bytes.len(),
                expected: expected as usize,
                unit: "bytes",
            });
        }
        self.out.write_all(bytes)?;
        self.next += 1;
        Ok(())
    }

    /// Flush and close. Fails if any declared payload is missing.
    pub fn finish(mut self) -> Result<()> {
        if self.next != self.pending.len() {
            let (name, _) = &self.pending[self.next];
            return Err(TensorStoreError::LengthMismatch {
                name: name.clone(),
                got: 0,
                expected: self.pending.len() - self.next,
                unit: "missing payloads",
            });
        }
        self.out.flush()?;
        Ok(())
    }
}

/// Write a complete checkpoint in one call. Payloads are packed contiguously
/// in the given order.
pub fn write_checkpoint(
    path: impl AsRef<Path>,
    tensors: &[TensorWrite],
    metadata: &Metadata,
) -> Result<()> {
    let mut payloads = Vec::with_capacity(tensors.len());
    let mut specs = Vec::with_capacity(tensors.len());
    for t in tensors {
        let numel: usize = t.shape.iter().product();
        let bytes = match &t.data {
            TensorData::Raw(bytes) => {
                let expected = numel * t.dtype.byte_size();
                if bytes.len() != expected {
                    return Err(TensorStoreError::LengthMismatch {
                        name: t.name.clone(),
                        got: bytes.len(),
                        expected,
                        unit: "bytes",
                    });
                }
                bytes.clone()
            }
            TensorData::F32(values) => {
                if values.len() != numel {
                    return Err(TensorStoreError::LengthMismatch {
                        name: t.name.clone(),
                        got: values.len(),
                        expected: numel,
                        unit: "elements",
                    });
                }
                encode_f32(&t.name, t.dtype, values)?
            }
        };
        specs.push((t.name.clone(), t.dtype, t.shape.clone()));
        payloads.push(bytes);
    }

    let mut writer = CheckpointWriter::create(path, &specs, metadata)?;
    for bytes in &payloads {
        writer.write_payload(bytes)?;
    }
    writer.finish()
}

/// Encode f32 values into the little-endian representation of `dtype`,
/// rounding to nearest-even where the target is narrower.
pub fn encode_f32(name: &str, dtype: DType, values: &[f32]) -> Result<Vec<u8>> {
    let mut bytes = Vec::with_capacity(values.len() * dtype.byte_size());
    match dtype {
        DType::F32 => {
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        DType::F64 => {
            for v in values {
                bytes.extend_from_slice(&(*v as f64).to_le_bytes());
            }
        }
        DType::F16 => {
            for v in values {
                bytes.extend_from_slice(&f32_to_f16_bits(*v).to_le_bytes());
            }
        }
        DType::BF16 => {
            for v in values {
                bytes.extend_from_slice(&f32_to_bf16_bits(*v).to_le_bytes());
            }
        }
        other => {
            return Err(TensorStoreError::UnsupportedDType {
                name: name.to_string(),
                dtype: other,
            })
        }
    }
    Ok(bytes)
}
