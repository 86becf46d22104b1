//! Score aggregation, binarization and pairwise agreement.

use super::{QuestionSet, Result, ScorerError};
use serde::Serialize;
use std::collections::BTreeMap;

/// One criterion's contribution to a question score.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub kind: String,
    pub weight: f64,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// A scored question: the weighted-mean score and its breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct QuestionResult {
    pub score: f64,
    pub category: String,
    pub criteria: Vec<CriterionResult>,
}

/// A question left out of aggregation, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct SkipEntry {
    pub id: String,
    pub reason: String,
}

/// The full scoring report. All maps are ordered so serialization is
/// byte-deterministic.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub threshold: f64,
    pub overall: f64,
    pub total_questions: usize,
    pub total_scored: usize,
    pub category_counts: BTreeMap<String, usize>,
    pub per_category: BTreeMap<String, f64>,
    pub per_question: BTreeMap<String, QuestionResult>,
    pub binary: BTreeMap<String, bool>,
    pub skipped: Vec<SkipEntry>,
}

/// Round to 2 decimals, half away from zero.
pub fn round2(value: f64) -> f64 {
    (value * 100.0).round() / 100.0
}

/// Build the report: overall unweighted mean over scored questions,
/// per-category means over each category's scored questions, counts from the
/// loaded question set, and pass/fail labels at the threshold. Every scored
/// id must exist in the question set.
pub fn aggregate(
    scored: BTreeMap<String, QuestionResult>,
    set: &QuestionSet,
    skipped: Vec<SkipEntry>,
    threshold: f64,
) -> Result<ScoreReport> {
    for id in scored.keys() {
        if set.get(id).is_none() {
            return Err(ScorerError::UnknownQuestionId(id.clone()));
        }
    }

    let total_scored = scored.len();
    let overall = if total_scored == 0 {
        0.0
    } else {
        scored.values().map(|q| q.score).sum::<f64>() / total_scored as f64
    };

    let mut category_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for result in scored.values() {
        let entry = category_sums
            .entry(result.category.clone())
            .or_insert((0.0, 0));
        entry.0 += result.score;
        entry.1 += 1;
    }
    let per_category = category_sums
        .into_iter()
        .map(|(cat, (sum, n))| (cat, sum / n as f64))
        .collect();

    let binary = binarize(&scored, threshold);
    Ok(ScoreReport {
        threshold,
        overall,
        total_questions: set.len(),
        total_scored,
        category_counts: set.category_counts(),
        per_category,
        per_question: scored,
        binary,
        skipped,
    })
}

/// Pass/fail labels: pass iff score >= threshold.
pub fn binarize(
    scored: &BTreeMap<String, QuestionResult>,
    threshold: f64,
) -> BTreeMap<String, bool> {
    scored
        .iter()
        .map(|(id, result)| (id.clone(), result.score >= threshold))
        .collect()
}

/// Percentage of ids on which two binary labelers agree, to 2 decimals.
/// Both labelings must cover the same id set.
pub fn pairwise_agreement(a: &BTreeMap<String, bool>, b: &BTreeMap<String, bool>) -> Result<f64> {
    if a.len() != b.len() || a.keys().ne(b.keys()) {
        let only_a: Vec<&String> = a.keys().filter(|k| !b.contains_key(*k)).take(3).collect();
        let only_b: Vec<&String> = b.keys().filter(|k| !a.contains_key(*k)).take(3).collect();
        return Err(ScorerError::IdSetMismatch(format!(
            "{} vs {} ids (a-only sample {only_a:?}, b-only sample {only_b:?})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(ScorerError::IdSetMismatch("empty label sets".into()));
    }
    let agreeing = a.iter().filter(|(id, label)| b[*id] == **label).count();
    Ok(round2(100.0 * agreeing as f64 / a.len() as f64))
}
