//! Reader/writer for safetensors-format checkpoint files.
//!
//! File layout:
//!   [8 bytes LE u64: header length N]
//!   [N bytes: UTF-8 JSON header, space-padded so data starts 8-byte aligned]
//!   [tensor payloads, packed contiguously]
//!
//! The header maps tensor names to {"dtype", "shape", "data_offsets"} with
//! offsets relative to the start of the data region. An optional
//! "__metadata__" entry carries a string-to-string map. Sharded checkpoints
//! use a JSON index file {"metadata": {...}, "weight_map": {name: shard}}.

mod convert;
mod reader;
mod writer;

pub use convert::{
    bf16_bits_to_f32, f16_bits_to_f32, f32_to_bf16_bits, f32_to_f16_bits, f32_truncate_to_bf16_bits,
};
pub use reader::{open_checkpoint, CheckpointHandle};
pub use writer::{encode_f32, write_checkpoint, CheckpointWriter, TensorData, TensorWrite};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Headers larger than this are rejected outright.
pub const MAX_HEADER_BYTES: u64 = 100 * 1024 * 1024;

/// Element type of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    F64,
    F32,
    F16,
    BF16,
    I64,
    I32,
    I16,
    I8,
    U8,
    #[serde(rename = "BOOL")]
    Bool,
}

impl DType {
    /// Bytes per element.
    pub fn byte_size(self) -> usize {
        match self {
            DType::F64 | DType::I64 => 8,
            DType::F32 | DType::I32 => 4,
            DType::F16 | DType::BF16 | DType::I16 => 2,
            DType::I8 | DType::U8 | DType::Bool => 1,
        }
    }

    /// Floating-point dtypes participate in merge arithmetic; integer and
    /// boolean tensors are listable and copyable but not decodable to f32.
    pub fn is_float(self) -> bool {
        matches!(self, DType::F64 | DType::F32 | DType::F16 | DType::BF16)
    }

    /// Serialized header name ("F32", "BF16", "BOOL", ...).
    pub fn name(self) -> &'static str {
        match self {
            DType::F64 => "F64",
            DType::F32 => "F32",
            DType::F16 => "F16",
            DType::BF16 => "BF16",
            DType::I64 => "I64",
            DType::I32 => "I32",
            DType::I16 => "I16",
            DType::I8 => "I8",
            DType::U8 => "U8",
            DType::Bool => "BOOL",
        }
    }
}

impl std::fmt::Display for DType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Name, dtype, shape and byte span of one tensor inside a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub dtype: DType,
    /// Row-major dimensions. Empty shape denotes a scalar (1 element).
    pub shape: Vec<usize>,
    /// (begin, end) byte offsets into the data region.
    pub data_offsets: (u64, u64),
}

impl TensorInfo {
    /// Number of elements (product of dimensions; 1 for a scalar).
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Payload size in bytes.
    pub fn byte_len(&self) -> u64 {
        self.data_offsets.1 - self.data_offsets.0
    }
}

/// String-to-string checkpoint metadata ("__metadata__" in the header).
pub type Metadata = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum TensorStoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("overlapping offsets between tensors {a} and {b}")]
    OverlappingOffsets { a: String, b: String },
    #[error("missing shard {shard} referenced by {referenced_by}")]
    MissingShard {
        shard: String,
        referenced_by: String,
    },
    #[error("unknown tensor: {0}")]
    UnknownTensor(String),
    #[error("unsupported dtype {dtype} for arithmetic decode of tensor {name}")]
    UnsupportedDType { name: String, dtype: DType },
    #[error("duplicate tensor name: {0}")]
    DuplicateName(String),
    #[error("length mismatch for tensor {name}: got {got} {unit}, expected {expected}")]
    LengthMismatch {
        name: String,
        got: usize,
        expected: usize,
        unit: &'static str,
    },
}

pub type Result<T> = std::result::Result<T, TensorStoreError>;
