//! Task-vector deltas: computing, persisting and re-applying them.

use super::{ParamAction, ParamPolicy, Result, TaskVecError};
use crate::tensorstore::{
    open_checkpoint, write_checkpoint, CheckpointHandle, CheckpointWriter, Metadata, TensorWrite,
};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

const FINGERPRINT_KEY: &str = "base_fingerprint";

/// Digest of a checkpoint's tensor names and shapes. Two checkpoints with the
/// same fingerprint are structurally interchangeable as merge inputs.
pub fn checkpoint_fingerprint(handle: &CheckpointHandle) -> String {
    let mut hasher = Sha256::new();
    for info in handle.list_tensors() {
        hasher.update(info.name.as_bytes());
        hasher.update([0u8]);
        for dim in &info.shape {
            hasher.update(dim.to_le_bytes());
        }
        hasher.update([0xFFu8]);
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A materialized per-tensor delta set: one F32 tensor per merged parameter,
/// named identically to the source, plus the fingerprint of the base it was
/// diffed against.
#[derive(Debug, Clone)]
pub struct TaskVectorDelta {
    pub base_fingerprint: String,
    /// name -> (shape, values), sorted by name.
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl TaskVectorDelta {
    /// Persist as an ordinary checkpoint of F32 tensors with the fingerprint
    /// in the file metadata.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut metadata = Metadata::new();
        metadata.insert(FINGERPRINT_KEY.into(), self.base_fingerprint.clone());
        let tensors: Vec<TensorWrite> = self
            .tensors
            .iter()
            .map(|(name, (shape, values))| {
                TensorWrite::f32(name.clone(), shape.clone(), values.clone())
            })
            .collect();
        write_checkpoint(path, &tensors, &metadata)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let handle = open_checkpoint(path)?;
        let base_fingerprint = handle
            .metadata()
            .get(FINGERPRINT_KEY)
            .cloned()
            .unwrap_or_default();
        let mut tensors = BTreeMap::new();
        for name in handle.tensor_names() {
            let (info, values) = handle.read_tensor(&name)?;
            tensors.insert(name, (info.shape, values));
        }
        Ok(Self {
            base_fingerprint,
            tensors,
        })
    }
}

/// Compute the task vector of a fine-tuned checkpoint against its base:
/// `delta = ft - base`, elementwise, for every tensor the policy classifies
/// as `Merge`. A merge tensor absent from either side is an error.
pub fn compute_task_vector(
    ft: &CheckpointHandle,
    base: &CheckpointHandle,
    policy: &ParamPolicy,
) -> Result<TaskVectorDelta> {
    let mut names: Vec<String> = ft
        .tensor_names()
        .into_iter()
        .chain(base.tensor_names())
        .filter(|n| policy.classify(n) == ParamAction::Merge)
        .collect();
    names.sort();
    names.dedup();

    let mut tensors = BTreeMap::new();
    for name in names {
        if !ft.contains(&name) {
            return Err(TaskVecError::MissingTensor {
                name,
                checkpoint: "fine-tuned".into(),
            });
        }
        if !base.contains(&name) {
            return Err(TaskVecError::MissingTensor {
                name,
                checkpoint: "base".into(),
            });
        }
        let (ft_info, ft_values) = ft.read_tensor(&name)?;
        let (base_info, base_values) = base.read_tensor(&name)?;
        if ft_info.shape != base_info.shape {
            return Err(TaskVecError::ShapeMismatch {
                name,
                left: ft_info.shape,
                right: base_info.shape,
            });
        }
        let delta: Vec<f32> = ft_values
            .iter()
            .zip(&base_values)
            .map(|(f, b)| (*f as f64 - *b as f64) as f32)
            .collect();
        tensors.insert(name, (ft_info.shape, delta));
    }

    Ok(TaskVectorDelta {
        base_fingerprint: checkpoint_fingerprint(base),
        tensors,
    })
}

/// Apply weighted deltas on top of a base checkpoint:
/// `out = base + sum(w_i * delta_i)` per merge tensor, accumulated in f64
/// and rounded once to f32. Non-merge tensors are copied byte-for-byte from
/// the base; `Drop` tensors are omitted. Merged tensors are stored in the
/// base tensor's dtype.
pub fn apply_deltas(
    base: &CheckpointHandle,
    weighted: &[(&TaskVectorDelta, f64)],
    policy: &ParamPolicy,
    output: impl AsRef<Path>,
) -> Result<()> {
    let fingerprint = checkpoint_fingerprint(base);
    for (delta, _) in weighted {
        if delta.base_fingerprint != fingerprint {
            return Err(TaskVecError::FingerprintMismatch {
                expected: fingerprint,
                actual: delta.base_fingerprint.clone(),
            });
        }
    }

    let infos = base.list_tensors();
    let mut specs = Vec::new();
    let mut actions = Vec::new();
    for info in &infos {
        let action = policy.classify(&info.name);
        if action == ParamAction::Drop {
            continue;
        }
        specs.push((info.name.clone(), info.dtype, info.shape.clone()));
        actions.push((info.clone(), action));
    }

    let mut writer = CheckpointWriter::create(output, &specs, &Metadata::new())?;
    for (info, action) in actions {
        let payload =
            if action == ParamAction::Merge {
                let (_, base_values) = base.read_tensor(&info.name)?;
                let mut acc: Vec<f64> = vec![0.0; base_values.len()];
                for (delta, weight) in weighted {
                    let (shape, values) = delta.tensors.get(&info.name).ok_or_else(|| {
                        TaskVecError::MissingTensor {
                            name: info.name.clone(),
                            checkpoint: "delta".into(),
                        }
                    })?;
                    if *shape != info.shape {
                        return Err(TaskVecError::ShapeMismatch {
                            name: info.name.clone(),
                            left: info.shape.clone(),
                            right: shape.clone(),
                        });
                    }
                    for (a, d) in acc.iter_mut().zip(values) {
                        *a += weight * (*d as f64);
                    }
                }
                let merged: Vec<f32> = base_values
                    .iter()
                    .zip(&acc)
                    .map(|(b, s)| (*b as f64 + s) as f32)
                    .collect();
                crate::tensorstore::encode_f32(&info.name, info.dtype, &merged)?
            } else {
                base.read_raw(&info.name)?.1
            };
        writer.write_payload(&payload)?;
    }
    writer.finish()?;
    Ok(())
}
