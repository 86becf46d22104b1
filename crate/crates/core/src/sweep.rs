//! Merge-coefficient sweeps: generate one merged candidate per lambda and
//! select the best lambda from an externally produced score table.

use crate::taskvec::{linear_merge, MergeRecipe, MergeSummary};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// A lambda grid over a recipe template. The template's `lambda` and
/// `output` fields are ignored; each candidate gets its own.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub template: MergeRecipe,
    pub lambdas: Vec<f64>,
    pub output_dir: PathBuf,
}

/// Scores keyed by lambda, higher is better.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    #[serde(default)]
    pub metric: String,
    pub scores: BTreeMap<String, f64>,
}

impl ScoreTable {
    pub fn from_json(text: &str) -> Result<Self, SweepError> {
        serde_json::from_str(text).map_err(|e| SweepError::MalformedScores(e.to_string()))
    }

    /// Score for a lambda, matching entries by parsed numeric value.
    pub fn get(&self, lambda: f64) -> Option<f64> {
        self.scores
            .iter()
            .find(|(k, _)| k.parse::<f64>().ok() == Some(lambda))
            .map(|(_, v)| *v)
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("no score for lambda {0}")]
    MissingScore(f64),
    #[error("score for lambda {lambda} is not finite: {value}")]
    InvalidScore { lambda: f64, value: f64 },
    #[error("malformed score table: {0}")]
    MalformedScores(String),
    #[error(transparent)]
    Merge(#[from] crate::taskvec::TaskVecError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn validate_lambdas(lambdas: &[f64]) -> Result<(), SweepError> {
    if lambdas.is_empty() {
        return Err(SweepError::InvalidPlan("empty lambda list".into()));
    }
    for l in lambdas {
        if !(0.0..=1.0).contains(l) || l.is_nan() {
            return Err(SweepError::InvalidPlan(format!(
                "lambda {l} outside [0, 1]"
            )));
        }
    }
    for (i, a) in lambdas.iter().enumerate() {
        if lambdas[i + 1..].contains(a) {
            return Err(SweepError::InvalidPlan(format!("duplicate lambda {a}")));
        }
    }
    Ok(())
}

/// Deterministic candidate filename for one lambda.
pub fn candidate_filename(lambda: f64) -> String {
    format!("merge_lambda_{lambda:.4}.safetensors")
}

/// Run one merge per lambda, writing candidates into the plan's output
/// directory. Returns the output paths with their merge summaries, in plan
/// order.
pub fn generate_candidates(plan: &SweepPlan) -> Result<Vec<(PathBuf, MergeSummary)>, SweepError> {
    validate_lambdas(&plan.lambdas)?;
    std::fs::create_dir_all(&plan.output_dir)?;
    let mut outputs = Vec::with_capacity(plan.lambdas.len());
    for &lambda in &plan.lambdas {
        let path = plan.output_dir.join(candidate_filename(lambda));
        let mut recipe = plan.template.clone();
        recipe.lambda = Some(lambda);
        recipe.donors.clear();
        recipe.output = Some(path.clone());
        let summary = linear_merge(&recipe)?;
        outputs.push((path, summary));
    }
    Ok(outputs)
}

/// The lambda with the highest score; ties break toward the larger lambda,
/// which retains more of the vision-language task vector.
pub fn select_best(lambdas: &[f64], scores: &ScoreTable) -> Result<f64, SweepError> {
    validate_lambdas(lambdas)?;
    let mut best: Option<(f64, f64)> = None;
    for &lambda in lambdas {
        let score = scores.get(lambda).ok_or(SweepError::MissingScore(lambda))?;
        if !score.is_finite() {
            return Err(SweepError::InvalidScore {
                lambda,
                value: score,
            });
        }
        best = match best {
            None => Some((lambda, score)),
            Some((bl, bs)) if score > bs || (score == bs && lambda > bl) => Some((lambda, score)),
            keep => keep,
        };
    }
    Ok(best.expect("non-empty lambdas").0)
}

/// Convenience wrapper for score tables loaded from disk.
pub fn select_best_from_file(lambdas: &[f64], path: impl AsRef<Path>) -> Result<f64, SweepError> {
    let text = std::fs::read_to_string(path)?;
    select_best(lambdas, &ScoreTable::from_json(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskvec::{OutputDType, ParamPolicy};
    use crate::tensorstore::{open_checkpoint, write_checkpoint, Metadata, TensorWrite};
    use tempfile::tempdir;

    fn table(entries: &[(&str, f64)]) -> ScoreTable {
        ScoreTable {
            metric: "pass_rate".into(),
            scores: entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn tiny_plan(dir: &std::path::Path, lambdas: Vec<f64>) -> SweepPlan {
        for name in ["base", "vlm", "code"] {
            write_checkpoint(
                dir.join(format!("{name}.safetensors")),
                &[
                    TensorWrite::f32("model.w", vec![2], vec![1.0, 2.0]),
                    TensorWrite::f32("visual.w", vec![1], vec![3.0]),
                ],
                &Metadata::new(),
            )
            .unwrap();
        }
        SweepPlan {
            template: MergeRecipe {
                base: dir.join("base.safetensors"),
                vlm: dir.join("vlm.safetensors"),
                code: dir.join("code.safetensors"),
                lambda: None,
                donors: vec![],
                policy: ParamPolicy::default(),
                output_dtype: OutputDType::default(),
                output: None,
            },
            lambdas,
            output_dir: dir.join("candidates"),
        }
    }

    #[test]
    fn four_lambdas_produce_four_candidates() {
        let dir = tempdir().unwrap();
        let plan = tiny_plan(dir.path(), vec![0.7, 0.8, 0.85, 0.9]);
        let outputs = generate_candidates(&plan).unwrap();
        assert_eq!(outputs.len(), 4);
        let names: Vec<String> = outputs
            .iter()
            .map(|(p, _)| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec![
                "merge_lambda_0.7000.safetensors",
                "merge_lambda_0.8000.safetensors",
                "merge_lambda_0.8500.safetensors",
                "merge_lambda_0.9000.safetensors",
            ]
        );
        for (path, _) in &outputs {
            assert!(open_checkpoint(path).unwrap().contains("model.w"));
        }
    }

    #[test]
    fn single_lambda_produces_one_file() {
        let dir = tempdir().unwrap();
        let plan = tiny_plan(dir.path(), vec![0.5]);
        assert_eq!(generate_candidates(&plan).unwrap().len(), 1);
    }

    #[test]
    fn empty_lambda_list_is_invalid() {
        let dir = tempdir().unwrap();
        let plan = tiny_plan(dir.path(), vec![]);
        assert!(matches!(
            generate_candidates(&plan),
            Err(SweepError::InvalidPlan(_))
        ));
    }

    #[test]
    fn duplicate_lambdas_are_invalid() {
        let dir = tempdir().unwrap();
        let plan = tiny_plan(dir.path(), vec![0.7, 0.7]);
        assert!(matches!(
            generate_candidates(&plan),
            Err(SweepError::InvalidPlan(_))
        ));
    }

    #[test]
    fn candidates_are_byte_deterministic() {
        let dir = tempdir().unwrap();
        let plan = tiny_plan(dir.path(), vec![0.85]);
        let first = generate_candidates(&plan).unwrap();
        let bytes_a = std::fs::read(&first[0].0).unwrap();
        let second = generate_candidates(&plan).unwrap();
        let bytes_b = std::fs::read(&second[0].0).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn argmax_picks_the_highest_score() {
        let scores = table(&[("0.7", 11.0), ("0.8", 9.5), ("0.85", 9.1), ("0.9", 8.8)]);
        let best = select_best(&[0.7, 0.8, 0.85, 0.9], &scores).unwrap();
        assert_eq!(best, 0.7);
    }

    #[test]
    fn ties_break_toward_larger_lambda() {
        let scores = table(&[("0.7", 10.0), ("0.9", 10.0)]);
        assert_eq!(select_best(&[0.7, 0.9], &scores).unwrap(), 0.9);
        assert_eq!(select_best(&[0.9, 0.7], &scores).unwrap(), 0.9);
    }

    #[test]
    fn unscored_lambda_is_reported() {
        let scores = table(&[("0.7", 11.0)]);
        let err = select_best(&[0.7, 0.8], &scores).unwrap_err();
        assert!(matches!(err, SweepError::MissingScore(l) if l == 0.8));
    }

    #[test]
    fn selection_invariant_under_monotone_transforms() {
        let lambdas = [0.7, 0.8, 0.85, 0.9];
        let raw = [11.0, 9.5, 12.25, 8.8];
        let base_table = ScoreTable {
            metric: String::new(),
            scores: lambdas
                .iter()
                .zip(raw)
                .map(|(l, s)| (l.to_string(), s))
                .collect(),
        };
        let baseline = select_best(&lambdas, &base_table).unwrap();
        let transforms: Vec<Box<dyn Fn(f64) -> f64>> = vec![
            Box::new(|s| 2.0 * s + 5.0),
            Box::new(|s| s.exp() / 1e4),
            Box::new(|s| s.powi(3)),
        ];
        for transform in transforms {
            let transformed = ScoreTable {
                metric: String::new(),
                scores: lambdas
                    .iter()
                    .zip(raw)
                    .map(|(l, s)| (l.to_string(), transform(s)))
                    .collect(),
            };
            assert_eq!(select_best(&lambdas, &transformed).unwrap(), baseline);
        }
    }

    #[test]
    fn score_table_parses_external_format() {
        let table = ScoreTable::from_json(
            r#"{"metric": "pass_rate", "scores": {"0.7": 11.0, "0.85": 9.1}}"#,
        )
        .unwrap();
        assert_eq!(table.get(0.7), Some(11.0));
        assert_eq!(table.get(0.85), Some(9.1));
        assert_eq!(table.get(0.8), None);
    }
}
