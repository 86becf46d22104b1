//! Question scoring: criterion dispatch, skip policy and the parallel
//! scoring loop.

use super::report::{aggregate, CriterionResult, QuestionResult, ScoreReport, SkipEntry};
use super::{
    encode_question_image, parse_judge_reply, run_unit_tests, score_keyword, BenchmarkQuestion,
    EvalCriterion, QuestionSet, Result, ScorerError,
};
use crate::judgeclient::{ContentPart, JudgeClient, JudgeRequest};
use std::collections::BTreeMap;

/// What to do with questions whose unit-test runtime is unavailable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkipPolicy {
    /// Exclude from aggregation and list in the report.
    #[default]
    Exclude,
    /// Score the affected criterion 0 and keep the question.
    Zero,
}

impl std::str::FromStr for SkipPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exclude" => Ok(SkipPolicy::Exclude),
            "zero" => Ok(SkipPolicy::Zero),
            other => Err(format!(
                "unknown skip policy {other:?} (expected exclude|zero)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreOptions {
    pub threshold: f64,
    pub skip_policy: SkipPolicy,
    pub max_parallel: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            threshold: 50.0,
            skip_policy: SkipPolicy::default(),
            max_parallel: 4,
        }
    }
}

/// Outcome for one question: scored, or skipped with a reason.
#[derive(Debug, Clone)]
pub enum QuestionVerdict {
    Scored(QuestionResult),
    Skipped(String),
}

fn judge_criterion_score(
    question: &BenchmarkQuestion,
    response: &str,
    template: Option<&str>,
    judge: &JudgeClient,
) -> Result<CriterionResult> {
    let (image_b64, media_type) = encode_question_image(question)?;
    let prompt = super::judge::instantiate_template(
        template.unwrap_or(super::JUDGE_PROMPT_TEMPLATE),
        question,
        response,
        &image_b64,
    );
    let request = JudgeRequest::user(
        judge.model(),
        vec![
            ContentPart::Text(prompt),
            ContentPart::ImageB64 {
                media_type: media_type.into(),
                data: image_b64,
            },
        ],
    );
    let reply = judge.send(&request)?;
    let scores = parse_judge_reply(&reply.text)?;
    judge.record_scores(
        &request.digest(),
        scores.correctness,
        scores.completeness,
        scores.total,
    );
    let mut flags = Vec::new();
    if scores.total_mismatch {
        flags.push("judge total disagrees with dimension sum".to_string());
    }
    if reply.from_cache {
        flags.push("judge reply served from cache".to_string());
    }
    Ok(CriterionResult {
        kind: "judge".into(),
        weight: 0.0,
        score: scores.total,
        flags,
    })
}

fn evaluate_criterion(
    question: &BenchmarkQuestion,
    criterion: &EvalCriterion,
    response: &str,
    judge: Option<&JudgeClient>,
) -> Result<CriterionResult> {
    match criterion {
        EvalCriterion::Keyword { expr } => Ok(CriterionResult {
            kind: "keyword".into(),
            weight: 0.0,
            score: score_keyword(response, expr)?,
            flags: Vec::new(),
        }),
        EvalCriterion::UnitTest { spec } => {
            let outcome = run_unit_tests(response, spec)?;
            let mut flags = Vec::new();
            if outcome.no_code {
                flags.push("no code block found".to_string());
            }
            if outcome.teardown_failed {
                flags.push("teardown script failed".to_string());
            }
            for (i, case) in outcome.cases.iter().enumerate() {
                if case.timed_out {
                    flags.push(format!("case {i} timed out"));
                }
            }
            Ok(CriterionResult {
                kind: "unit_test".into(),
                weight: 0.0,
                score: outcome.score,
                flags,
            })
        }
        EvalCriterion::Judge { spec } => {
            let judge = judge.ok_or_else(|| {
                ScorerError::Judge(crate::judgeclient::JudgeError::NotConfigured(
                    "question requires a judge but no judge client is configured".into(),
                ))
            })?;
            judge_criterion_score(question, response, spec.prompt_template.as_deref(), judge)
        }
    }
}

/// Score one question: the weighted mean of its criterion scores. A
/// criterion whose runtime is unavailable turns the whole question into a
/// skip under [`SkipPolicy::Exclude`], or scores 0 under
/// [`SkipPolicy::Zero`]. Other criterion failures propagate, tagged with the
/// criterion index.
pub fn score_question(
    question: &BenchmarkQuestion,
    response: &str,
    judge: Option<&JudgeClient>,
    skip_policy: SkipPolicy,
) -> Result<QuestionVerdict> {
    let mut criteria = Vec::with_capacity(question.criteria.len());
    for (index, wc) in question.criteria.iter().enumerate() {
        match evaluate_criterion(question, &wc.criterion, response, judge) {
            Ok(mut result) => {
                result.weight = wc.weight;
                criteria.push(result);
            }
            Err(ScorerError::RuntimeUnavailable(language)) => match skip_policy {
                SkipPolicy::Exclude => {
                    return Ok(QuestionVerdict::Skipped(format!(
                        "runtime unavailable for language {language}"
                    )))
                }
                SkipPolicy::Zero => criteria.push(CriterionResult {
                    kind: wc.criterion.kind().into(),
                    weight: wc.weight,
                    score: 0.0,
                    flags: vec![format!("runtime unavailable for language {language}")],
                }),
            },
            Err(source) => {
                return Err(ScorerError::Criterion {
                    index,
                    source: Box::new(source),
                })
            }
        }
    }

    let score = if criteria.len() == 1 {
        criteria[0].score
    } else {
        let total_weight: f64 = criteria.iter().map(|c| c.weight).sum();
        criteria.iter().map(|c| c.weight * c.score).sum::<f64>() / total_weight
    };
    Ok(QuestionVerdict::Scored(QuestionResult {
        score,
        category: question.category.name().into(),
        criteria,
    }))
}

/// Score every question with a response, in parallel up to
/// `options.max_parallel`, and aggregate. Questions without a response are
/// skipped and listed; responses for unknown ids are an error. Results are
/// joined and aggregated in question order, so the report does not depend on
/// scheduling.
pub fn score_all(
    set: &QuestionSet,
    responses: &BTreeMap<String, String>,
    judge: Option<&JudgeClient>,
    options: &ScoreOptions,
) -> Result<ScoreReport> {
    for id in responses.keys() {
        if set.get(id).is_none() {
            return Err(ScorerError::UnknownQuestionId(id.clone()));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_parallel.max(1))
        .build()
        .map_err(|e| ScorerError::SandboxViolation(format!("thread pool: {e}")))?;

    let verdicts: Vec<(usize, Result<QuestionVerdict>)> = pool.install(|| {
        use rayon::prelude::*;
        set.questions()
            .par_iter()
            .enumerate()
            .map(|(idx, question)| {
                let verdict = match responses.get(&question.id) {
                    Some(response) => {
                        score_question(question, response, judge, options.skip_policy)
                    }
                    None => Ok(QuestionVerdict::Skipped("no response".into())),
                };
                (idx, verdict)
            })
            .collect()
    });

    let mut ordered = verdicts;
    ordered.sort_by_key(|(idx, _)| *idx);

    let mut scored = BTreeMap::new();
    let mut skipped = Vec::new();
    for (idx, verdict) in ordered {
        let id = &set.questions()[idx].id;
        match verdict? {
            QuestionVerdict::Scored(result) => {
                scored.insert(id.clone(), result);
            }
            QuestionVerdict::Skipped(reason) => skipped.push(SkipEntry {
                id: id.clone(),
                reason,
            }),
        }
    }
    aggregate(scored, set, skipped, options.threshold)
}
