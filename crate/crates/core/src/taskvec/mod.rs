//! Task-vector computation and selective linear merging of checkpoints.
//!
//! A task vector is the elementwise parameter difference between a
//! fine-tuned model and the base model it was trained from. Merging combines
//! a base checkpoint with weighted task vectors, touching only the tensors a
//! [`ParamPolicy`] classifies as `Merge` (the language backbone); vision
//! encoder and projector tensors are copied byte-for-byte from the
//! vision-language donor.

mod delta;
mod merge;
mod policy;

pub use delta::{apply_deltas, checkpoint_fingerprint, compute_task_vector, TaskVectorDelta};
pub use merge::{linear_merge, ulp_distance, MergeSummary};
pub use policy::{glob_match, ParamAction, ParamPolicy, PolicyRule};

use crate::tensorstore::TensorStoreError;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

/// Additional donor checkpoint for the generalized (more than two donors)
/// merge form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Donor {
    pub path: PathBuf,
    pub weight: f64,
}

/// Output storage dtype for merged tensors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputDType {
    /// Each merged tensor keeps the dtype it has in the VLM checkpoint.
    #[default]
    SameAsVlm,
    F32,
}

/// Declarative description of one merge: input checkpoints, the merge
/// coefficient, parameter policy and output location.
///
/// With no explicit donors, merged tensors follow
/// `base + lambda * (vlm - base) + (1 - lambda) * (code - base)`.
/// Explicit donors replace the vlm/code pair in the arithmetic; the VLM
/// still supplies the output tensor set and all copied tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeRecipe {
    pub base: PathBuf,
    pub vlm: PathBuf,
    pub code: PathBuf,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub donors: Vec<Donor>,
    #[serde(default)]
    pub policy: ParamPolicy,
    #[serde(default)]
    pub output_dtype: OutputDType,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl MergeRecipe {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| TaskVecError::InvalidRecipe(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum TaskVecError {
    #[error(transparent)]
    Store(#[from] TensorStoreError),
    #[error("shape mismatch for tensor {name}: {left:?} vs {right:?}")]
    ShapeMismatch {
        name: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor {name} missing from {checkpoint} checkpoint")]
    MissingTensor { name: String, checkpoint: String },
    #[error("delta fingerprint {actual} does not match base checkpoint {expected}")]
    FingerprintMismatch { expected: String, actual: String },
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
}

pub type Result<T> = std::result::Result<T, TaskVecError>;
