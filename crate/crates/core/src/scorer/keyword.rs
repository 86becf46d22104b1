//! Weighted keyword rules: boolean trees of literal and regex matches.
//!
//! Weights live on top-level conjuncts only: the children of a root `and`
//! node, or the root itself when it is not an `and`. The score is
//! `100 * satisfied_weight / total_weight`.

use super::{Result, ScorerError};
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// A node of the keyword expression tree. `not` carries no weight of its
/// own; a weighted negation puts the weight on the enclosing conjunct.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum KeywordNode {
    Literal {
        text: String,
        #[serde(default)]
        case_sensitive: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight: Option<f64>,
    },
    Regex {
        pattern: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight: Option<f64>,
    },
    And {
        children: Vec<KeywordNode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight: Option<f64>,
    },
    Or {
        children: Vec<KeywordNode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight: Option<f64>,
    },
    Not {
        child: Box<KeywordNode>,
    },
}

impl KeywordNode {
    fn weight(&self) -> Option<f64> {
        match self {
            KeywordNode::Literal { weight, .. }
            | KeywordNode::Regex { weight, .. }
            | KeywordNode::And { weight, .. }
            | KeywordNode::Or { weight, .. } => *weight,
            KeywordNode::Not { .. } => None,
        }
    }
}

enum Matcher {
    /// Pre-normalized needle; lowercased unless case-sensitive.
    Literal {
        needle: String,
        case_sensitive: bool,
    },
    Regex(Regex),
    And(Vec<Matcher>),
    Or(Vec<Matcher>),
    Not(Box<Matcher>),
}

pub(super) struct CompiledRule {
    conjuncts: Vec<(Matcher, f64)>,
    total_weight: f64,
}

/// Compile and validate a rule tree. Rejects weights below the top level,
/// non-finite or negative weights, an all-zero weight set, and invalid
/// regexes.
pub(super) fn compile(root: &KeywordNode) -> Result<CompiledRule> {
    let top: Vec<&KeywordNode> = match root {
        KeywordNode::And { children, .. } => children.iter().collect(),
        other => vec![other],
    };
    if top.is_empty() {
        return Err(ScorerError::InvalidRule("empty conjunct list".into()));
    }
    let mut conjuncts = Vec::with_capacity(top.len());
    let mut total_weight = 0.0;
    for node in top {
        let weight = node.weight().unwrap_or(1.0);
        if !weight.is_finite() || weight < 0.0 {
            return Err(ScorerError::InvalidRule(format!(
                "conjunct weight {weight} invalid"
            )));
        }
        total_weight += weight;
        conjuncts.push((build_matcher(node, true)?, weight));
    }
    if total_weight <= 0.0 {
        return Err(ScorerError::InvalidRule(
            "conjunct weights sum to zero".into(),
        ));
    }
    Ok(CompiledRule {
        conjuncts,
        total_weight,
    })
}

fn build_matcher(node: &KeywordNode, top_level: bool) -> Result<Matcher> {
    if !top_level && node.weight().is_some() {
        return Err(ScorerError::InvalidRule(
            "weights below top-level conjuncts are unsupported".into(),
        ));
    }
    match node {
        KeywordNode::Literal {
            text,
            case_sensitive,
            ..
        } => {
            let normalized: String = text.nfc().collect();
            Ok(Matcher::Literal {
                needle: if *case_sensitive {
                    normalized
                } else {
                    normalized.to_lowercase()
                },
                case_sensitive: *case_sensitive,
            })
        }
        KeywordNode::Regex { pattern, .. } => Ok(Matcher::Regex(
            Regex::new(pattern).map_err(|e| ScorerError::InvalidRegex(e.to_string()))?,
        )),
        KeywordNode::And { children, .. } => Ok(Matcher::And(
            children
                .iter()
                .map(|c| build_matcher(c, false))
                .collect::<Result<_>>()?,
        )),
        KeywordNode::Or { children, .. } => Ok(Matcher::Or(
            children
                .iter()
                .map(|c| build_matcher(c, false))
                .collect::<Result<_>>()?,
        )),
        KeywordNode::Not { child } => Ok(Matcher::Not(Box::new(build_matcher(child, false)?))),
    }
}

struct Haystack {
    /// NFC-normalized response; regexes run against this unmodified.
    normalized: String,
    lowercased: String,
}

impl Matcher {
    fn matches(&self, hay: &Haystack) -> bool {
        match self {
            Matcher::Literal {
                needle,
                case_sensitive,
            } => {
                if *case_sensitive {
                    hay.normalized.contains(needle.as_str())
                } else {
                    hay.lowercased.contains(needle.as_str())
                }
            }
            Matcher::Regex(regex) => regex.is_match(&hay.normalized),
            Matcher::And(children) => children.iter().all(|c| c.matches(hay)),
            Matcher::Or(children) => children.iter().any(|c| c.matches(hay)),
            Matcher::Not(child) => !child.matches(hay),
        }
    }
}

impl CompiledRule {
    pub(super) fn score(&self, response: &str) -> f64 {
        let normalized: String = response.nfc().collect();
        let hay = Haystack {
            lowercased: normalized.to_lowercase(),
            normalized,
        };
        let satisfied: f64 = self
            .conjuncts
            .iter()
            .filter(|(matcher, _)| matcher.matches(&hay))
            .map(|(_, w)| w)
            .sum();
        100.0 * satisfied / self.total_weight
    }
}

/// Score a response against a keyword rule: each top-level conjunct counts
/// its weight when satisfied.
pub fn score_keyword(response: &str, expr: &KeywordNode) -> Result<f64> {
    Ok(compile(expr)?.score(response))
}
