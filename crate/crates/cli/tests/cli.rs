//! CLI behavior: output shapes, exit codes, input immutability and
//! determinism.

mod common;

use common::{checkpoint_family, run, stderr_of, stdout_of, write_recipe};
use mergeval_core::tensorstore::{write_checkpoint, Metadata, TensorWrite};
use sha2::{Digest, Sha256};
use std::path::Path;
use tempfile::tempdir;

fn file_digest(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap();
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[test]
fn inspect_lists_every_tensor() {
    let dir = tempdir().unwrap();
    write_checkpoint(
        dir.path().join("two.safetensors"),
        &[
            TensorWrite::f32("a", vec![2], vec![1.0, 2.0]),
            TensorWrite::f32("b", vec![1], vec![3.0]),
        ],
        &Metadata::new(),
    )
    .unwrap();
    let output = run(&["inspect", "two.safetensors"], dir.path());
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(text.contains("a") && text.contains("b"));
    assert!(text.contains("2 tensors"));
}

#[test]
fn inspect_json_is_a_parseable_array() {
    let dir = tempdir().unwrap();
    write_checkpoint(
        dir.path().join("one.safetensors"),
        &[TensorWrite::f32("t", vec![3], vec![1.0, 2.0, 3.0])],
        &Metadata::new(),
    )
    .unwrap();
    let output = run(&["inspect", "one.safetensors", "--json"], dir.path());
    assert!(output.status.success());
    let rows: Vec<serde_json::Value> = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["dtype"], "F32");
    assert_eq!(rows[0]["bytes"], 12);
}

#[test]
fn missing_checkpoint_exits_2() {
    let dir = tempdir().unwrap();
    let output = run(&["inspect", "missing.safetensors"], dir.path());
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn truncated_checkpoint_exits_2() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("bad.safetensors"), b"\xff\xff\xff").unwrap();
    let output = run(&["inspect", "bad.safetensors"], dir.path());
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn merge_reports_action_counts() {
    let dir = tempdir().unwrap();
    checkpoint_family(dir.path(), 1);
    let recipe = write_recipe(dir.path(), 0.7, "merged.safetensors");
    let output = run(
        &["merge", "--recipe", recipe.to_str().unwrap(), "--json"],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
    let summary: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(summary["lambda"], 0.7);
    assert_eq!(summary["merged"], 4);
    assert_eq!(summary["copied_from_vlm"], 2);
}

#[test]
fn out_of_range_lambda_exits_4() {
    let dir = tempdir().unwrap();
    checkpoint_family(dir.path(), 2);
    let recipe = write_recipe(dir.path(), 1.2, "merged.safetensors");
    let output = run(&["merge", "--recipe", recipe.to_str().unwrap()], dir.path());
    assert_eq!(output.status.code(), Some(4));
    assert!(stderr_of(&output).contains("invalid recipe"));
}

#[test]
fn shape_mismatch_exits_3_naming_the_tensor() {
    let dir = tempdir().unwrap();
    checkpoint_family(dir.path(), 3);
    // Replace the VLM with one whose head has a different vocab size.
    write_checkpoint(
        dir.path().join("vlm.safetensors"),
        &[
            TensorWrite::f32("model.embed_tokens.weight", vec![10], vec![0.0; 10]),
            TensorWrite::f32("lm_head.weight", vec![10], vec![0.0; 10]),
        ],
        &Metadata::new(),
    )
    .unwrap();
    let recipe = write_recipe(dir.path(), 0.5, "merged.safetensors");
    let output = run(&["merge", "--recipe", recipe.to_str().unwrap()], dir.path());
    assert_eq!(output.status.code(), Some(3));
    // The first mismatched tensor in name order is reported.
    assert!(
        stderr_of(&output).contains("lm_head.weight"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn merge_is_byte_deterministic_across_runs() {
    let dir = tempdir().unwrap();
    checkpoint_family(dir.path(), 4);
    let recipe = write_recipe(dir.path(), 0.7, "merged.safetensors");
    assert!(
        run(&["merge", "--recipe", recipe.to_str().unwrap()], dir.path())
            .status
            .success()
    );
    let first = file_digest(&dir.path().join("merged.safetensors"));
    assert!(
        run(&["merge", "--recipe", recipe.to_str().unwrap()], dir.path())
            .status
            .success()
    );
    assert_eq!(first, file_digest(&dir.path().join("merged.safetensors")));
}

#[test]
fn read_only_commands_leave_inputs_untouched() {
    let dir = tempdir().unwrap();
    let (base, vlm, code) = checkpoint_family(dir.path(), 5);
    std::fs::write(
        dir.path().join("scores.json"),
        r#"{"metric": "m", "scores": {"0.7": 1.0, "0.9": 2.0}}"#,
    )
    .unwrap();
    let watched = [base, vlm, code, dir.path().join("scores.json")];
    let before: Vec<String> = watched.iter().map(|p| file_digest(p)).collect();

    assert!(run(&["inspect", "base.safetensors"], dir.path())
        .status
        .success());
    assert!(run(
        &[
            "sweep",
            "select",
            "--lambdas",
            "0.7,0.9",
            "--scores",
            "scores.json"
        ],
        dir.path()
    )
    .status
    .success());

    let after: Vec<String> = watched.iter().map(|p| file_digest(p)).collect();
    assert_eq!(before, after);
}

#[test]
fn sweep_select_prints_the_best_lambda() {
    let dir = tempdir().unwrap();
    std::fs::write(
        dir.path().join("scores.json"),
        r#"{"metric": "pass", "scores": {"0.7": 11.0, "0.8": 9.5, "0.85": 9.1, "0.9": 8.8}}"#,
    )
    .unwrap();
    let output = run(
        &[
            "sweep",
            "select",
            "--lambdas",
            "0.7,0.8,0.85,0.9",
            "--scores",
            "scores.json",
            "--json",
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(value["best_lambda"], 0.7);
}

#[test]
fn unscored_lambda_exits_5() {
    let dir = tempdir().unwrap();
    std::fs::write(
        dir.path().join("scores.json"),
        r#"{"scores": {"0.7": 1.0}}"#,
    )
    .unwrap();
    let output = run(
        &[
            "sweep",
            "select",
            "--lambdas",
            "0.7,0.8",
            "--scores",
            "scores.json",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(5));
}

fn write_score_fixtures(dir: &Path) {
    std::fs::write(dir.join("shot.png"), b"png bytes").unwrap();
    let question = serde_json::json!({
        "id": "q1",
        "category": "DSML",
        "language": "Python",
        "prompt": "plot question",
        "image_paths": [dir.join("shot.png")],
        "criteria": [
            {"kind": "keyword", "expr": {"op": "literal", "text": "stackplot"}, "weight": 1.0},
            {"kind": "judge", "weight": 1.0}
        ],
        "reference_answer": "use stackplot"
    });
    std::fs::write(dir.join("questions.jsonl"), format!("{question}\n")).unwrap();
    std::fs::write(
        dir.join("responses.jsonl"),
        "{\"id\": \"q1\", \"response\": \"try stackplot\"}\n",
    )
    .unwrap();
}

#[test]
fn score_writes_a_report_with_binary_labels() {
    let dir = tempdir().unwrap();
    write_score_fixtures(dir.path());
    let output = run(
        &[
            "score",
            "--questions",
            "questions.jsonl",
            "--responses",
            "responses.jsonl",
            "--report",
            "report.json",
            "--threshold",
            "50",
            "--mock-judge",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["threshold"], 50.0);
    assert!(report["binary"]["q1"].is_boolean());
    assert_eq!(report["total_scored"], 1);
}

#[test]
fn malformed_question_line_exits_5_with_line_number() {
    let dir = tempdir().unwrap();
    write_score_fixtures(dir.path());
    let good = std::fs::read_to_string(dir.path().join("questions.jsonl")).unwrap();
    std::fs::write(
        dir.path().join("questions.jsonl"),
        format!("{good}not json\n"),
    )
    .unwrap();
    let output = run(
        &[
            "score",
            "--questions",
            "questions.jsonl",
            "--responses",
            "responses.jsonl",
            "--report",
            "report.json",
            "--mock-judge",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(5));
    assert!(
        stderr_of(&output).contains("line 2"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn judge_needed_but_unconfigured_exits_4() {
    let dir = tempdir().unwrap();
    write_score_fixtures(dir.path());
    let output = run(
        &[
            "score",
            "--questions",
            "questions.jsonl",
            "--responses",
            "responses.jsonl",
            "--report",
            "report.json",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn unreachable_judge_endpoint_exits_6() {
    let dir = tempdir().unwrap();
    write_score_fixtures(dir.path());
    let output = std::process::Command::new(common::BIN)
        .args([
            "score",
            "--questions",
            "questions.jsonl",
            "--responses",
            "responses.jsonl",
            "--report",
            "report.json",
        ])
        .current_dir(dir.path())
        .env("JUDGE_API_BASE", "http://127.0.0.1:9") // discard port: refused
        .env("JUDGE_API_KEY", "k")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(6), "{}", stderr_of(&output));
}

#[test]
fn config_file_can_select_the_mock_judge() {
    let dir = tempdir().unwrap();
    write_score_fixtures(dir.path());
    std::fs::write(
        dir.path().join("config.json"),
        r#"{"judge": {"mock": true}}"#,
    )
    .unwrap();
    let output = run(
        &[
            "score",
            "--config",
            "config.json",
            "--questions",
            "questions.jsonl",
            "--responses",
            "responses.jsonl",
            "--report",
            "report.json",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
}

#[test]
fn zero_parallelism_is_a_config_error() {
    let dir = tempdir().unwrap();
    write_score_fixtures(dir.path());
    let output = run(
        &[
            "score",
            "--max-parallel",
            "0",
            "--questions",
            "questions.jsonl",
            "--responses",
            "responses.jsonl",
            "--report",
            "report.json",
            "--mock-judge",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn agree_accepts_labels_and_full_reports() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("a.json"), r#"{"x": true, "y": false}"#).unwrap();
    std::fs::write(dir.path().join("b.json"), r#"{"x": true, "y": true}"#).unwrap();
    let output = run(
        &["agree", "--a", "a.json", "--b", "b.json", "--json"],
        dir.path(),
    );
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(value["agreement"], 50.0);

    std::fs::write(
        dir.path().join("report.json"),
        r#"{"overall": 1.0, "binary": {"x": true, "y": false}}"#,
    )
    .unwrap();
    let output = run(
        &["agree", "--a", "report.json", "--b", "a.json", "--json"],
        dir.path(),
    );
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(value["agreement"], 100.0);
}

#[test]
fn agree_id_mismatch_exits_5() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("a.json"), r#"{"x": true}"#).unwrap();
    std::fs::write(dir.path().join("b.json"), r#"{"y": true}"#).unwrap();
    let output = run(&["agree", "--a", "a.json", "--b", "b.json"], dir.path());
    assert_eq!(output.status.code(), Some(5));
}

#[test]
fn dedup_reports_matched_reference_ids() {
    let dir = tempdir().unwrap();
    std::fs::write(
        dir.path().join("corpus.jsonl"),
        "{\"id\": \"dup\", \"text\": \"plot a stacked area chart with matplotlib\"}\n{\"id\": \"keep\", \"text\": \"postgres index btree vacuum autovacuum tuning\"}\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("refs.jsonl"),
        "{\"id\": \"bench-1\", \"text\": \"plot a stacked area chart with matplotlib\"}\n",
    )
    .unwrap();
    let output = run(
        &[
            "dedup",
            "--corpus",
            "corpus.jsonl",
            "--refs",
            "refs.jsonl",
            "--threshold",
            "0.9",
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(value["removed"][0]["id"], "dup");
    assert_eq!(value["removed"][0]["matched_ref"], "bench-1");
    assert_eq!(value["retained"][0], "keep");
}

#[test]
fn dedup_threshold_out_of_range_exits_4() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("corpus.jsonl"), "").unwrap();
    std::fs::write(dir.path().join("refs.jsonl"), "").unwrap();
    let output = run(
        &[
            "dedup",
            "--corpus",
            "corpus.jsonl",
            "--refs",
            "refs.jsonl",
            "--threshold",
            "1.5",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(4));
}
