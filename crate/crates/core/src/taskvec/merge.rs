//! Fused linear merge of a base, a vision-language and a code checkpoint.

use super::{MergeRecipe, OutputDType, ParamAction, Result, TaskVecError};
use crate::tensorstore::{
    encode_f32, open_checkpoint, CheckpointHandle, CheckpointWriter, DType, Metadata,
};
use serde::Serialize;

/// Per-action tensor counts and any non-fatal warnings from one merge.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MergeSummary {
    pub lambda: Option<f64>,
    pub merged: usize,
    pub copied_from_vlm: usize,
    pub copied_from_base: usize,
    pub dropped: usize,
    pub tensors_written: usize,
    pub warnings: Vec<String>,
}

/// Number of representable f32 values strictly between `a` and `b`, plus one
/// if they differ; 0 means bit-identical up to signed zero. Verification
/// helper used by tests.
pub fn ulp_distance(a: f32, b: f32) -> u64 {
    // Map the float ordering onto a monotonic integer line.
    fn key(v: f32) -> i64 {
        let bits = v.to_bits() as i32;
        (if bits < 0 {
            i32::MIN.wrapping_sub(bits)
        } else {
            bits
        }) as i64
    }
    if a.is_nan() || b.is_nan() {
        return if a.to_bits() == b.to_bits() {
            0
        } else {
            u64::MAX
        };
    }
    key(a).abs_diff(key(b))
}

/// Sources feeding one merge: the three named checkpoints or an explicit
/// donor list. Donor weights apply to `donor - base` task vectors.
struct MergeInputs {
    base: CheckpointHandle,
    vlm: CheckpointHandle,
    donors: Vec<(CheckpointHandle, f64, String)>,
    /// Two-donor (vlm, code) form, eligible for the endpoint short-circuit.
    lambda_form: Option<f64>,
}

/// Merge per the recipe and write the output checkpoint.
///
/// For each tensor of the VLM checkpoint, in name order:
/// - `Merge`: `out = base + sum(w_i * (donor_i - base))` with weights
///   `(lambda, 1 - lambda)` in the two-donor form. Elementwise arithmetic
///   runs in f64 and rounds once to f32, then casts to the output dtype
///   (round-to-nearest-even). At `lambda` exactly 1 or 0 the tensor is
///   byte-copied from the VLM or code checkpoint instead.
/// - `CopyFromVlm` / `CopyFromBase`: payload bytes copied unchanged.
/// - `Drop`: omitted from the output.
pub fn linear_merge(recipe: &MergeRecipe) -> Result<MergeSummary> {
    let output = recipe
        .output
        .as_ref()
        .ok_or_else(|| TaskVecError::InvalidRecipe("recipe has no output path".into()))?;
    let inputs = open_inputs(recipe)?;
    let mut summary = MergeSummary {
        lambda: inputs.lambda_form,
        ..MergeSummary::default()
    };

    let weight_sum: f64 = inputs.donors.iter().map(|(_, w, _)| w).sum();
    if (weight_sum - 1.0).abs() > 1e-6 {
        summary
            .warnings
            .push(format!("donor weights sum to {weight_sum}, not 1"));
    }

    let infos = inputs.vlm.list_tensors();
    let mut planned = Vec::new();
    for info in infos {
        let action = recipe.policy.classify(&info.name);
        match action {
            ParamAction::Drop => summary.dropped += 1,
            ParamAction::CopyFromVlm => {
                summary.copied_from_vlm += 1;
                planned.push((info, action));
            }
            ParamAction::CopyFromBase => {
                if !inputs.base.contains(&info.name) {
                    return Err(TaskVecError::MissingTensor {
                        name: info.name,
                        checkpoint: "base".into(),
                    });
                }
                summary.copied_from_base += 1;
                planned.push((info, action));
            }
            ParamAction::Merge => {
                summary.merged += 1;
                planned.push((info, action));
            }
        }
    }

    // Header dtypes must be known before any payload is written.
    let endpoint = endpoint_donor(&inputs);
    let mut specs = Vec::with_capacity(planned.len());
    for (info, action) in &planned {
        let dtype = match action {
            ParamAction::Merge => match endpoint {
                Some(donor_idx) => {
                    inputs.donors[donor_idx]
                        .0
                        .tensor_info(&info.name)
                        .map_err(|_| TaskVecError::MissingTensor {
                            name: info.name.clone(),
                            checkpoint: inputs.donors[donor_idx].2.clone(),
                        })?
                        .dtype
                }
                None => match recipe.output_dtype {
                    OutputDType::SameAsVlm => info.dtype,
                    OutputDType::F32 => DType::F32,
                },
            },
            ParamAction::CopyFromBase => inputs.base.tensor_info(&info.name)?.dtype,
            _ => info.dtype,
        };
        let shape = match (action, endpoint) {
            (ParamAction::Merge, Some(donor_idx)) => inputs.donors[donor_idx]
                .0
                .tensor_info(&info.name)?
                .shape
                .clone(),
            (ParamAction::CopyFromBase, _) => inputs.base.tensor_info(&info.name)?.shape.clone(),
            _ => info.shape.clone(),
        };
        specs.push((info.name.clone(), dtype, shape));
    }

    let mut writer = CheckpointWriter::create(output, &specs, &Metadata::new())?;
    for ((info, action), (_, out_dtype, _)) in planned.iter().zip(&specs) {
        let payload = match action {
            ParamAction::CopyFromVlm => inputs.vlm.read_raw(&info.name)?.1,
            ParamAction::CopyFromBase => inputs.base.read_raw(&info.name)?.1,
            ParamAction::Merge => match endpoint {
                Some(donor_idx) => inputs.donors[donor_idx].0.read_raw(&info.name)?.1,
                None => {
                    let merged = merge_tensor(&inputs, &info.name, &info.shape)?;
                    encode_f32(&info.name, *out_dtype, &merged)?
                }
            },
            ParamAction::Drop => unreachable!(),
        };
        writer.write_payload(&payload)?;
    }
    writer.finish()?;
    summary.tensors_written = specs.len();
    Ok(summary)
}

/// In the two-donor form, lambda exactly 1 or 0 short-circuits to a byte
/// copy of the corresponding donor. Floating-point `base + (donor - base)`
/// does not reproduce the donor bitwise in general; the endpoint semantics
/// is "that model", so make it literal.
fn endpoint_donor(inputs: &MergeInputs) -> Option<usize> {
    match inputs.lambda_form {
        Some(1.0) => Some(0),
        Some(0.0) => Some(1),
        _ => None,
    }
}

fn merge_tensor(inputs: &MergeInputs, name: &str, vlm_shape: &[usize]) -> Result<Vec<f32>> {
    if !inputs.base.contains(name) {
        return Err(TaskVecError::MissingTensor {
            name: name.into(),
            checkpoint: "base".into(),
        });
    }
    let (base_info, base_values) = inputs.base.read_tensor(name)?;
    if base_info.shape != vlm_shape {
        return Err(TaskVecError::ShapeMismatch {
            name: name.into(),
            left: vlm_shape.to_vec(),
            right: base_info.shape,
        });
    }

    let mut acc: Vec<f64> = vec![0.0; base_values.len()];
    for (donor, weight, label) in &inputs.donors {
        if !donor.contains(name) {
            return Err(TaskVecError::MissingTensor {
                name: name.into(),
                checkpoint: label.clone(),
            });
        }
        let (info, values) = donor.read_tensor(name)?;
        if info.shape != vlm_shape {
            return Err(TaskVecError::ShapeMismatch {
                name: name.into(),
                left: vlm_shape.to_vec(),
                right: info.shape,
            });
        }
        for ((a, v), b) in acc.iter_mut().zip(&values).zip(&base_values) {
            *a += weight * (*v as f64 - *b as f64);
        }
    }
    Ok(base_values
        .iter()
        .zip(&acc)
        .map(|(b, s)| (*b as f64 + s) as f32)
        .collect())
}

fn open_inputs(recipe: &MergeRecipe) -> Result<MergeInputs> {
    let base = open_checkpoint(&recipe.base)?;
    let vlm = open_checkpoint(&recipe.vlm)?;

    if recipe.donors.is_empty() {
        let lambda = recipe
            .lambda
            .ok_or_else(|| TaskVecError::InvalidRecipe("recipe has no lambda".into()))?;
        if !(0.0..=1.0).contains(&lambda) || lambda.is_nan() {
            return Err(TaskVecError::InvalidRecipe(format!(
                "lambda {lambda} outside [0, 1]"
            )));
        }
        let code = open_checkpoint(&recipe.code)?;
        let donors = vec![
            (open_checkpoint(&recipe.vlm)?, lambda, "vlm".to_string()),
            (code, 1.0 - lambda, "code".to_string()),
        ];
        Ok(MergeInputs {
            base,
            vlm,
            donors,
            lambda_form: Some(lambda),
        })
    } else {
        let mut donors = Vec::new();
        for (i, donor) in recipe.donors.iter().enumerate() {
            if !donor.weight.is_finite() {
                return Err(TaskVecError::InvalidRecipe(format!(
                    "donor {} weight {} is not finite",
                    donor.path.display(),
                    donor.weight
                )));
            }
            donors.push((
                open_checkpoint(&donor.path)?,
                donor.weight,
                format!("donor[{i}]"),
            ));
        }
        Ok(MergeInputs {
            base,
            vlm,
            donors,
            lambda_form: None,
        })
    }
}
