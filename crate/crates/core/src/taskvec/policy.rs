//! Parameter-name policy: which tensors are merged and which are copied.

use serde::{Deserialize, Serialize};

/// What to do with one tensor during a merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamAction {
    /// Combine arithmetically across checkpoints.
    Merge,
    /// Copy payload bytes from the vision-language checkpoint.
    CopyFromVlm,
    /// Copy payload bytes from the base checkpoint.
    CopyFromBase,
    /// Leave out of the output entirely.
    Drop,
}

/// One ordered rule: a glob pattern over tensor names and the action taken
/// when it matches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyRule {
    pub pattern: String,
    pub action: ParamAction,
}

/// Ordered first-match-wins rules with a default for unmatched names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamPolicy {
    pub rules: Vec<PolicyRule>,
    pub default: ParamAction,
}

impl Default for ParamPolicy {
    /// Merge the language backbone and head, keep everything visual from the
    /// VLM. Matches the tensor naming of the supported model family; fully
    /// overridable per recipe.
    fn default() -> Self {
        let rule = |pattern: &str, action| PolicyRule {
            pattern: pattern.to_string(),
            action,
        };
        ParamPolicy {
            rules: vec![
                rule("visual.*", ParamAction::CopyFromVlm),
                rule("model.*", ParamAction::Merge),
                rule("lm_head.*", ParamAction::Merge),
            ],
            default: ParamAction::CopyFromVlm,
        }
    }
}

impl ParamPolicy {
    /// Classify one tensor name: first matching rule wins, otherwise the
    /// default action.
    pub fn classify(&self, name: &str) -> ParamAction {
        for rule in &self.rules {
            if glob_match(&rule.pattern, name) {
                return rule.action;
            }
        }
        self.default
    }
}

/// Wildcard match over a whole tensor name. `*` matches any run of
/// characters (dots included), `?` matches exactly one.
pub fn glob_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let n: Vec<char> = name.chars().collect();
    let (mut pi, mut ni) = (0usize, 0usize);
    let (mut star, mut star_ni) = (None, 0usize);
    while ni < n.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == n[ni]) {
            pi += 1;
            ni += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some(pi);
            star_ni = ni;
            pi += 1;
        } else if let Some(s) = star {
            // Extend the last '*' by one more character.
            pi = s + 1;
            star_ni += 1;
            ni = star_ni;
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glob_basics() {
        assert!(glob_match("model.*", "model.layers.0.mlp.down_proj.weight"));
        assert!(glob_match("*", "anything"));
        assert!(glob_match("*.weight", "visual.blocks.3.attn.qkv.weight"));
        assert!(glob_match("model.layers.?.bias", "model.layers.7.bias"));
        assert!(!glob_match("model.*", "visual.patch_embed.proj.weight"));
        assert!(!glob_match("model.layers.?.bias", "model.layers.12.bias"));
        assert!(glob_match("", ""));
        assert!(!glob_match("", "x"));
        assert!(glob_match("**", "model.embed_tokens.weight"));
    }

    #[test]
    fn default_policy_matches_expected_actions() {
        let policy = ParamPolicy::default();
        assert_eq!(
            policy.classify("model.layers.0.mlp.down_proj.weight"),
            ParamAction::Merge
        );
        assert_eq!(
            policy.classify("visual.blocks.3.attn.qkv.weight"),
            ParamAction::CopyFromVlm
        );
        assert_eq!(policy.classify("lm_head.weight"), ParamAction::Merge);
        assert_eq!(
            policy.classify("model.embed_tokens.weight"),
            ParamAction::Merge
        );
        // Unmatched names fall back to the default action.
        assert_eq!(policy.classify("rotary.inv_freq"), ParamAction::CopyFromVlm);
    }

    #[test]
    fn first_match_wins() {
        let policy = ParamPolicy {
            rules: vec![
                PolicyRule {
                    pattern: "model.norm.*".into(),
                    action: ParamAction::CopyFromBase,
                },
                PolicyRule {
                    pattern: "model.*".into(),
                    action: ParamAction::Merge,
                },
            ],
            default: ParamAction::Drop,
        };
        assert_eq!(
            policy.classify("model.norm.weight"),
            ParamAction::CopyFromBase
        );
        assert_eq!(policy.classify("model.layers.1.bias"), ParamAction::Merge);
        assert_eq!(policy.classify("other"), ParamAction::Drop);
    }

    #[test]
    fn policy_json_roundtrip() {
        let policy = ParamPolicy::default();
        let json = serde_json::to_string(&policy).unwrap();
        assert!(json.contains("copy_from_vlm"));
        let back: ParamPolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(back.classify("visual.x"), ParamAction::CopyFromVlm);
        assert_eq!(back.classify("model.x"), ParamAction::Merge);
    }
}
