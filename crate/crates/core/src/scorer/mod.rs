//! Scoring of model responses to visually-grounded programming questions:
//! weighted keyword rules, sandboxed unit tests and an LLM judge, aggregated
//! per category and overall, with binarization for agreement analysis.

mod extract;
mod judge;
mod keyword;
mod pipeline;
mod report;
mod sandbox;

pub use extract::extract_code;
pub use judge::{
    build_judge_prompt, build_judge_prompt_with, encode_question_image, parse_judge_reply,
    JudgeScores, JudgeSpec, JUDGE_PROMPT_TEMPLATE,
};
pub use keyword::{score_keyword, KeywordNode};
pub use pipeline::{score_all, score_question, QuestionVerdict, ScoreOptions, SkipPolicy};
pub use report::{
    aggregate, binarize, pairwise_agreement, round2, CriterionResult, QuestionResult, ScoreReport,
    SkipEntry,
};
pub use sandbox::{run_unit_tests, CaseResult, Limits, TestCase, UnitTestOutcome, UnitTestSpec};

use crate::judgeclient::JudgeError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// High-level programming domain of a benchmark question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    FrontEnd,
    BackEnd,
    DSML,
    ITOps,
    MobileDesktop,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::FrontEnd,
        Category::BackEnd,
        Category::DSML,
        Category::ITOps,
        Category::MobileDesktop,
    ];

    /// Languages belonging to each category in the benchmark taxonomy.
    pub fn languages(self) -> &'static [&'static str] {
        match self {
            Category::FrontEnd => &["CSS", "HTML", "JavaScript"],
            Category::BackEnd => &["Java", "PHP", "Go", "Ruby", "Rust", "C++"],
            Category::DSML => &["Python", "R"],
            Category::ITOps => &["Bash"],
            Category::MobileDesktop => &["Dart"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::FrontEnd => "FrontEnd",
            Category::BackEnd => "BackEnd",
            Category::DSML => "DSML",
            Category::ITOps => "ITOps",
            Category::MobileDesktop => "MobileDesktop",
        }
    }
}

/// One scoring criterion plus its weight within the question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedCriterion {
    #[serde(flatten)]
    pub criterion: EvalCriterion,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

/// The three evaluation prongs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalCriterion {
    Keyword {
        expr: KeywordNode,
    },
    UnitTest {
        spec: UnitTestSpec,
    },
    Judge {
        #[serde(default)]
        spec: JudgeSpec,
    },
}

impl EvalCriterion {
    pub fn kind(&self) -> &'static str {
        match self {
            EvalCriterion::Keyword { .. } => "keyword",
            EvalCriterion::UnitTest { .. } => "unit_test",
            EvalCriterion::Judge { .. } => "judge",
        }
    }
}

/// One benchmark item: prompt, images, reference answer and its weighted
/// scoring criteria.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkQuestion {
    pub id: String,
    pub category: Category,
    pub language: String,
    pub prompt: String,
    #[serde(default)]
    pub image_paths: Vec<PathBuf>,
    pub criteria: Vec<WeightedCriterion>,
    #[serde(default)]
    pub reference_answer: String,
}

impl BenchmarkQuestion {
    /// Invariants every loaded question must satisfy.
    fn validate(&self) -> std::result::Result<(), String> {
        if self.criteria.is_empty() {
            return Err("criteria list is empty".into());
        }
        let mut total = 0.0;
        for (i, wc) in self.criteria.iter().enumerate() {
            if wc.weight < 0.0 || !wc.weight.is_finite() {
                return Err(format!("criterion {i} weight {} invalid", wc.weight));
            }
            total += wc.weight;
            match &wc.criterion {
                EvalCriterion::Keyword { expr } => {
                    keyword::compile(expr).map_err(|e| format!("criterion {i}: {e}"))?;
                }
                EvalCriterion::UnitTest { spec } => {
                    spec.validate().map_err(|e| format!("criterion {i}: {e}"))?;
                }
                EvalCriterion::Judge { .. } => {}
            }
        }
        if total <= 0.0 {
            return Err("criterion weights sum to zero".into());
        }
        let known = self
            .category
            .languages()
            .iter()
            .any(|l| l.eq_ignore_ascii_case(&self.language));
        if !known {
            return Err(format!(
                "language {:?} does not belong to category {}",
                self.language,
                self.category.name()
            ));
        }
        Ok(())
    }
}

/// A loaded question file with id lookup.
#[derive(Debug, Clone)]
pub struct QuestionSet {
    questions: Vec<BenchmarkQuestion>,
    index: BTreeMap<String, usize>,
}

impl QuestionSet {
    pub fn questions(&self) -> &[BenchmarkQuestion] {
        &self.questions
    }

    pub fn get(&self, id: &str) -> Option<&BenchmarkQuestion> {
        self.index.get(id).map(|i| &self.questions[*i])
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// Question counts per category, for reconciliation against the
    /// published distribution.
    pub fn category_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for q in &self.questions {
            *counts.entry(q.category.name().to_string()).or_insert(0) += 1;
        }
        counts
    }
}

/// Parse a JSON-lines question file. Blank lines are allowed; any malformed
/// or invalid line fails with its 1-based line number.
pub fn load_questions_from_reader(reader: impl BufRead) -> Result<QuestionSet> {
    let mut questions = Vec::new();
    let mut index = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| ScorerError::Schema {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let question: BenchmarkQuestion =
            serde_json::from_str(&line).map_err(|e| ScorerError::Schema {
                line: lineno,
                message: e.to_string(),
            })?;
        question.validate().map_err(|message| ScorerError::Schema {
            line: lineno,
            message,
        })?;
        if index.contains_key(&question.id) {
            return Err(ScorerError::Schema {
                line: lineno,
                message: format!("duplicate question id {:?}", question.id),
            });
        }
        index.insert(question.id.clone(), questions.len());
        questions.push(question);
    }
    Ok(QuestionSet { questions, index })
}

pub fn load_questions(path: impl AsRef<Path>) -> Result<QuestionSet> {
    let file = std::fs::File::open(path)?;
    load_questions_from_reader(std::io::BufReader::new(file))
}

#[derive(Debug, Deserialize)]
struct ResponseLine {
    id: String,
    response: String,
}

/// Parse a JSON-lines responses file ({"id", "response"} per line).
pub fn load_responses_from_reader(reader: impl BufRead) -> Result<BTreeMap<String, String>> {
    let mut responses = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| ScorerError::Schema {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ResponseLine =
            serde_json::from_str(&line).map_err(|e| ScorerError::Schema {
                line: lineno,
                message: e.to_string(),
            })?;
        if responses
            .insert(parsed.id.clone(), parsed.response)
            .is_some()
        {
            return Err(ScorerError::Schema {
                line: lineno,
                message: format!("duplicate response id {:?}", parsed.id),
            });
        }
    }
    Ok(responses)
}

pub fn load_responses(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let file = std::fs::File::open(path)?;
    load_responses_from_reader(std::io::BufReader::new(file))
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("schema violation at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("invalid keyword rule: {0}")]
    InvalidRule(String),
    #[error("invalid regex: {0}")]
    InvalidRegex(String),
    #[error("no code block found in response")]
    NoCodeFound,
    #[error("runtime unavailable for language {0}")]
    RuntimeUnavailable(String),
    #[error("sandbox violation: {0}")]
    SandboxViolation(String),
    #[error("missing image: {0}")]
    MissingImage(String),
    #[error("unparseable judge reply: {0}")]
    UnparseableReply(String),
    #[error("unknown question id: {0}")]
    UnknownQuestionId(String),
    #[error("label id sets differ: {0}")]
    IdSetMismatch(String),
    #[error("criterion {index}: {source}")]
    Criterion {
        index: usize,
        #[source]
        source: Box<ScorerError>,
    },
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ScorerError>;
