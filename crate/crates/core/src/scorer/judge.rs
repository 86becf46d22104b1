//! Judge prompt construction and reply parsing.

use super::{BenchmarkQuestion, Result, ScorerError};
use base64::Engine;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

/// Prompt sent to the judge model. Two rubric dimensions, 50 points each;
/// the reply is expected to end with per-dimension scores and a total.
pub const JUDGE_PROMPT_TEMPLATE: &str = "\
You are a professional code assistant evaluation expert. Your task is to assess the quality of a model-generated answer to a programming-related question by comparing it with the gold reference answer. The question includes both text and a screenshot image (which may contain code, error messages, or UI context). You must consider both modalities when evaluating the answer.

Please first read the question (text + image), then read the model-generated answer, and compare it carefully with the reference (gold) answer.

You must provide clear and detailed justifications before assigning scores. The scoring dimensions are weighted as follows: Correctness (50 points) and Completeness (50 points).

Below is a programming question-answering example.

[Question]
{question}

[Note]
The screenshot image provided alongside this question is part of the question context. You must use it to fully understand the problem being asked.

[Screenshot Image]
{base64_image}

[Model Answer]
{model_answer}

[Reference Answer]
{reference_answer}

Please evaluate the model's answer based on the following two dimensions:

1. Correctness (0-50): Is the answer factually accurate and technically correct? Does it address the problem without errors or misleading information?
2. Completeness (0-50): Does the answer cover all critical elements present in the reference answer? Are any key details missing?

---

Justification:
1. Correctness: <Your reasoning here>
2. Completeness: <Your reasoning here>

Scores:
- Correctness: X/50
- Completeness: X/50

Total Score: X/100
";

/// Judge criterion configuration. The rubric is fixed (correctness and
/// completeness, 50 points each); only the prompt template can be swapped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct JudgeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<String>,
}

fn media_type(path: &std::path::Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_lowercase)
        .as_deref()
    {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/png",
    }
}

/// Read and base64-encode the question's first image.
pub fn encode_question_image(question: &BenchmarkQuestion) -> Result<(String, &'static str)> {
    let path = question.image_paths.first().ok_or_else(|| {
        ScorerError::MissingImage(format!("question {} has no image", question.id))
    })?;
    let bytes = std::fs::read(path)
        .map_err(|e| ScorerError::MissingImage(format!("{}: {e}", path.display())))?;
    Ok((
        base64::engine::general_purpose::STANDARD.encode(bytes),
        media_type(path),
    ))
}

/// Instantiate the judge template with the question, its image, the model
/// answer and the reference answer. Identical inputs produce identical
/// bytes.
pub fn build_judge_prompt(question: &BenchmarkQuestion, response: &str) -> Result<String> {
    build_judge_prompt_with(question, response, None)
}

pub fn build_judge_prompt_with(
    question: &BenchmarkQuestion,
    response: &str,
    template_override: Option<&str>,
) -> Result<String> {
    let (image_b64, _) = encode_question_image(question)?;
    Ok(instantiate_template(
        template_override.unwrap_or(JUDGE_PROMPT_TEMPLATE),
        question,
        response,
        &image_b64,
    ))
}

pub(super) fn instantiate_template(
    template: &str,
    question: &BenchmarkQuestion,
    response: &str,
    image_b64: &str,
) -> String {
    template
        .replace("{question}", &question.prompt)
        .replace("{base64_image}", image_b64)
        .replace("{model_answer}", response)
        .replace("{reference_answer}", &question.reference_answer)
}

/// Parsed rubric scores from a judge reply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JudgeScores {
    pub correctness: f64,
    pub completeness: f64,
    pub total: f64,
    /// Set when the reply stated a total different from the dimension sum;
    /// the stated total is taken as authoritative.
    pub total_mismatch: bool,
}

static CORRECTNESS_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)correctness[\*_`]*(?:\s+score)?[\*_`]*\s*[:：]\s*[\*_`]*\s*(\d+(?:\.\d+)?)\s*/\s*50",
    )
    .unwrap()
});
static COMPLETENESS_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)completeness[\*_`]*(?:\s+score)?[\*_`]*\s*[:：]\s*[\*_`]*\s*(\d+(?:\.\d+)?)\s*/\s*50",
    )
    .unwrap()
});
static TOTAL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)total\s+score[\*_`]*\s*[:：]\s*[\*_`]*\s*(\d+(?:\.\d+)?)(?:\s*/\s*100)?")
        .unwrap()
});

fn last_match(regex: &Regex, reply: &str) -> Option<f64> {
    regex
        .captures_iter(reply)
        .last()
        .and_then(|c| c.get(1))
        .and_then(|m| m.as_str().parse::<f64>().ok())
}

/// Extract the last correctness, completeness and total score statements
/// from a judge reply, tolerating markdown emphasis. A missing total falls
/// back to the dimension sum; a stated total that disagrees with the sum is
/// kept and flagged.
pub fn parse_judge_reply(reply: &str) -> Result<JudgeScores> {
    let correctness = last_match(&CORRECTNESS_RE, reply);
    let completeness = last_match(&COMPLETENESS_RE, reply);
    let stated_total = last_match(&TOTAL_RE, reply);

    let (Some(correctness), Some(completeness)) = (correctness, completeness) else {
        return Err(ScorerError::UnparseableReply(
            "no correctness/completeness score lines found".into(),
        ));
    };
    let correctness = correctness.clamp(0.0, 50.0);
    let completeness = completeness.clamp(0.0, 50.0);
    let sum = correctness + completeness;
    let (total, total_mismatch) = match stated_total {
        Some(t) => {
            let t = t.clamp(0.0, 100.0);
            (t, (t - sum).abs() > 1e-9)
        }
        None => (sum, false),
    };
    Ok(JudgeScores {
        correctness,
        completeness,
        total,
        total_mismatch,
    })
}
