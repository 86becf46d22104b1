//! Pulling fenced code blocks out of model responses.

use super::{Result, ScorerError};

/// Canonical form of a fence tag or question language, folding common
/// aliases so "py" matches "Python" and "sh" matches "Bash".
fn canonical(tag: &str) -> String {
    let lower = tag.trim().to_lowercase();
    match lower.as_str() {
        "py" | "python3" => "python".into(),
        "js" | "node" => "javascript".into(),
        "ts" => "typescript".into(),
        "sh" | "bash" | "shell" | "zsh" => "shell".into(),
        "c++" | "cxx" => "cpp".into(),
        "rb" => "ruby".into(),
        "rs" => "rust".into(),
        "golang" => "go".into(),
        other => other.into(),
    }
}

/// Return the last fenced code block whose tag matches `language`; untagged
/// blocks match any language. An unterminated final fence runs to the end of
/// the response, since generated answers are often truncated.
pub fn extract_code(response: &str, language: &str) -> Result<String> {
    let mut blocks: Vec<(String, String)> = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in response.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") {
            match current.take() {
                Some((tag, body)) => blocks.push((tag, body.join("\n"))),
                None => {
                    let tag = trimmed.trim_start_matches('`').trim().to_string();
                    current = Some((tag, Vec::new()));
                }
            }
            continue;
        }
        if let Some((_, body)) = &mut current {
            body.push(line);
        }
    }
    if let Some((tag, body)) = current {
        blocks.push((tag, body.join("\n")));
    }

    let wanted = canonical(language);
    blocks
        .into_iter()
        .rev()
        .find(|(tag, _)| tag.is_empty() || canonical(tag) == wanted)
        .map(|(_, body)| body)
        .ok_or(ScorerError::NoCodeFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block_is_returned() {
        let response = "Here is the fix:\n```python\nprint('hi')\n```\nDone.";
        assert_eq!(extract_code(response, "Python").unwrap(), "print('hi')");
    }

    #[test]
    fn last_matching_block_wins() {
        let response = "```python\nfirst\n```\ntext\n```python\nsecond\n```";
        assert_eq!(extract_code(response, "python").unwrap(), "second");
    }

    #[test]
    fn untagged_blocks_match_any_language() {
        let response = "```\nanything goes\n```";
        assert_eq!(extract_code(response, "Dart").unwrap(), "anything goes");
    }

    #[test]
    fn tag_aliases_fold_together() {
        let response = "```py\nx = 1\n```";
        assert_eq!(extract_code(response, "Python").unwrap(), "x = 1");
        let response = "```sh\necho hi\n```";
        assert_eq!(extract_code(response, "Bash").unwrap(), "echo hi");
    }

    #[test]
    fn mismatched_tags_are_skipped() {
        let response = "```java\nclass A {}\n```\n```python\npass\n```";
        assert_eq!(extract_code(response, "Java").unwrap(), "class A {}");
    }

    #[test]
    fn prose_only_yields_no_code() {
        assert!(matches!(
            extract_code("no fences here at all", "Python"),
            Err(ScorerError::NoCodeFound)
        ));
        assert!(matches!(
            extract_code("```rust\nfn main() {}\n```", "Python"),
            Err(ScorerError::NoCodeFound)
        ));
    }

    #[test]
    fn unterminated_block_runs_to_end() {
        let response = "```python\nline1\nline2";
        assert_eq!(extract_code(response, "python").unwrap(), "line1\nline2");
    }
}
