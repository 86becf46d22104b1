//! Subcommand implementations and the error-to-exit-code mapping.

use crate::cli::{Cli, Command, ScoreArgs, SweepCommand};
use mergeval_core::dedup;
use mergeval_core::judgeclient::{JudgeClient, JudgeClientConfig, JudgeError, MockTransport};
use mergeval_core::scorer::{self, ScoreOptions, ScorerError, SkipPolicy};
use mergeval_core::sweep::{self, ScoreTable, SweepError, SweepPlan};
use mergeval_core::taskvec::{self, MergeRecipe, ParamPolicy, TaskVecError};
use mergeval_core::tensorstore::{open_checkpoint, TensorStoreError};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Exit codes: 0 success, 2 I/O, 3 shape/tensor, 4 config, 5 schema,
/// 6 judge transport.
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    fn new(exit_code: i32, message: impl Into<String>) -> Self {
        Self {
            exit_code,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(4, message)
    }

    fn schema(message: impl Into<String>) -> Self {
        Self::new(5, message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<TensorStoreError> for CliError {
    fn from(e: TensorStoreError) -> Self {
        let code = match &e {
            TensorStoreError::Io(_)
            | TensorStoreError::MalformedHeader(_)
            | TensorStoreError::OverlappingOffsets { .. }
            | TensorStoreError::MissingShard { .. } => 2,
            TensorStoreError::UnknownTensor(_)
            | TensorStoreError::UnsupportedDType { .. }
            | TensorStoreError::DuplicateName(_)
            | TensorStoreError::LengthMismatch { .. } => 3,
        };
        Self::new(code, e.to_string())
    }
}

impl From<TaskVecError> for CliError {
    fn from(e: TaskVecError) -> Self {
        match e {
            TaskVecError::Store(inner) => inner.into(),
            TaskVecError::InvalidRecipe(msg) => Self::config(format!("invalid recipe: {msg}")),
            other => Self::new(3, other.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Merge(inner) => inner.into(),
            SweepError::Io(inner) => inner.into(),
            SweepError::InvalidPlan(msg) => Self::config(format!("invalid plan: {msg}")),
            other => Self::schema(other.to_string()),
        }
    }
}

impl From<JudgeError> for CliError {
    fn from(e: JudgeError) -> Self {
        match e {
            JudgeError::NotConfigured(msg) => Self::config(msg),
            JudgeError::Io(inner) => inner.into(),
            other => Self::new(6, other.to_string()),
        }
    }
}

impl From<ScorerError> for CliError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::Criterion { index, source } => {
                let inner: CliError = (*source).into();
                Self::new(
                    inner.exit_code,
                    format!("criterion {index}: {}", inner.message),
                )
            }
            ScorerError::Judge(inner) => inner.into(),
            ScorerError::Io(inner) => inner.into(),
            ScorerError::MissingImage(msg) => Self::io(format!("missing image: {msg}")),
            ScorerError::SandboxViolation(msg) => Self::io(format!("sandbox violation: {msg}")),
            other => Self::schema(other.to_string()),
        }
    }
}

/// Optional config file merged under command-line flags.
#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub log_level: Option<String>,
    #[serde(default)]
    pub max_parallel: Option<usize>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub judge: JudgeOverrides,
}

#[derive(Debug, Default, Deserialize)]
pub struct JudgeOverrides {
    #[serde(default)]
    pub api_base: Option<String>,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub mock: bool,
}

struct Resolved {
    json: bool,
    debug: bool,
    max_parallel: usize,
    cache_dir: Option<PathBuf>,
    seed: u64,
    judge: JudgeOverrides,
}

fn resolve(cli: &Cli) -> Result<Resolved, CliError> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let log_level = if cli.log_level != "info" {
        cli.log_level.clone()
    } else {
        file.log_level.unwrap_or_else(|| cli.log_level.clone())
    };
    if !matches!(log_level.as_str(), "quiet" | "info" | "debug") {
        return Err(CliError::config(format!("unknown log level {log_level:?}")));
    }

    let max_parallel = cli.max_parallel.or(file.max_parallel).unwrap_or(4);
    if max_parallel == 0 {
        return Err(CliError::config("max-parallel must be at least 1"));
    }

    Ok(Resolved {
        json: cli.json,
        debug: log_level == "debug",
        max_parallel,
        cache_dir: cli.cache_dir.clone().or(file.cache_dir),
        seed: cli.seed,
        judge: file.judge,
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let resolved = resolve(&cli)?;
    match &cli.command {
        Command::Inspect { checkpoint } => cmd_inspect(checkpoint, &resolved),
        Command::Diff {
            base,
            ft,
            output,
            policy,
        } => cmd_diff(base, ft, output, policy.as_deref(), &resolved),
        Command::Merge { recipe } => cmd_merge(recipe, &resolved),
        Command::Sweep { command } => match command {
            SweepCommand::Plan {
                template,
                lambdas,
                output_dir,
            } => cmd_sweep_plan(template, lambdas, output_dir, &resolved),
            SweepCommand::Select { lambdas, scores } => {
                cmd_sweep_select(lambdas, scores, &resolved)
            }
        },
        Command::Score(args) => cmd_score(args, &resolved),
        Command::Agree { a, b } => cmd_agree(a, b, &resolved),
        Command::Dedup {
            corpus,
            refs,
            threshold,
            report,
        } => cmd_dedup(corpus, refs, *threshold, report.as_deref(), &resolved),
    }
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

fn cmd_inspect(checkpoint: &Path, resolved: &Resolved) -> Result<(), CliError> {
    let handle = open_checkpoint(checkpoint)?;
    let rows: Vec<serde_json::Value> = handle
        .list_tensors()
        .iter()
        .map(|info| {
            serde_json::json!({
                "name": info.name,
                "dtype": info.dtype.name(),
                "shape": info.shape,
                "bytes": info.byte_len(),
            })
        })
        .collect();
    if resolved.json {
        print_json(&rows);
    } else {
        println!(
            "{:<48} {:>6} {:>16} {:>12}",
            "name", "dtype", "shape", "bytes"
        );
        for info in handle.list_tensors() {
            println!(
                "{:<48} {:>6} {:>16} {:>12}",
                info.name,
                info.dtype.name(),
                format!("{:?}", info.shape),
                info.byte_len()
            );
        }
        println!("{} tensors", handle.len());
    }
    Ok(())
}

fn load_policy(path: Option<&Path>) -> Result<ParamPolicy, CliError> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("policy {}: {e}", path.display())))
        }
        None => Ok(ParamPolicy::default()),
    }
}

fn cmd_diff(
    base: &Path,
    ft: &Path,
    output: &Path,
    policy: Option<&Path>,
    resolved: &Resolved,
) -> Result<(), CliError> {
    let policy = load_policy(policy)?;
    let base_handle = open_checkpoint(base)?;
    let ft_handle = open_checkpoint(ft)?;
    let delta = taskvec::compute_task_vector(&ft_handle, &base_handle, &policy)?;
    delta.save(output)?;
    let summary = serde_json::json!({
        "tensors": delta.tensors.len(),
        "base_fingerprint": delta.base_fingerprint,
        "output": output,
    });
    if resolved.json {
        print_json(&summary);
    } else {
        println!(
            "wrote {} delta tensors to {} (base fingerprint {})",
            delta.tensors.len(),
            output.display(),
            &delta.base_fingerprint[..16.min(delta.base_fingerprint.len())]
        );
    }
    Ok(())
}

fn cmd_merge(recipe_path: &Path, resolved: &Resolved) -> Result<(), CliError> {
    let text = std::fs::read_to_string(recipe_path)?;
    let recipe = MergeRecipe::from_json(&text)?;
    if resolved.debug {
        eprintln!("merging per {}", recipe_path.display());
    }
    let summary = taskvec::linear_merge(&recipe)?;
    for warning in &summary.warnings {
        eprintln!("warning: {warning}");
    }
    if resolved.json {
        print_json(&summary);
    } else {
        let lambda = summary
            .lambda
            .map(|l| format!("{l}"))
            .unwrap_or_else(|| "explicit donors".into());
        println!(
            "merged {} tensors (lambda {lambda}), copied {} from vlm, {} from base, dropped {}",
            summary.merged, summary.copied_from_vlm, summary.copied_from_base, summary.dropped
        );
    }
    Ok(())
}

fn cmd_sweep_plan(
    template: &Path,
    lambdas: &[f64],
    output_dir: &Path,
    resolved: &Resolved,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(template)?;
    let recipe = MergeRecipe::from_json(&text)?;
    let plan = SweepPlan {
        template: recipe,
        lambdas: lambdas.to_vec(),
        output_dir: output_dir.to_path_buf(),
    };
    let outputs = sweep::generate_candidates(&plan)?;
    let rows: Vec<serde_json::Value> = plan
        .lambdas
        .iter()
        .zip(&outputs)
        .map(|(lambda, (path, summary))| {
            serde_json::json!({"lambda": lambda, "output": path, "merged": summary.merged})
        })
        .collect();
    if resolved.json {
        print_json(&rows);
    } else {
        for (lambda, (path, _)) in plan.lambdas.iter().zip(&outputs) {
            println!("{lambda} -> {}", path.display());
        }
    }
    Ok(())
}

fn cmd_sweep_select(lambdas: &[f64], scores: &Path, resolved: &Resolved) -> Result<(), CliError> {
    let text = std::fs::read_to_string(scores)?;
    let table = ScoreTable::from_json(&text)?;
    let best = sweep::select_best(lambdas, &table)?;
    if resolved.json {
        print_json(&serde_json::json!({"best_lambda": best}));
    } else {
        println!("{best}");
    }
    Ok(())
}

fn build_judge(args: &ScoreArgs, resolved: &Resolved) -> Result<JudgeClient, CliError> {
    let config = JudgeClientConfig {
        model: resolved
            .judge
            .model
            .clone()
            .or_else(|| std::env::var(mergeval_core::judgeclient::ENV_MODEL).ok())
            .unwrap_or_else(|| "gpt-4o".into()),
        jitter_seed: resolved.seed,
        cache_dir: resolved.cache_dir.clone(),
        transcript_path: args.transcript.clone(),
        ..JudgeClientConfig::default()
    };
    if args.mock_judge || resolved.judge.mock {
        return Ok(JudgeClient::new(MockTransport::deterministic(), config)?);
    }
    let base = resolved
        .judge
        .api_base
        .clone()
        .or_else(|| std::env::var(mergeval_core::judgeclient::ENV_API_BASE).ok())
        .ok_or_else(|| {
            CliError::config("judge endpoint unset: pass --mock-judge, set JUDGE_API_BASE, or configure judge.api_base")
        })?;
    let key = resolved
        .judge
        .api_key
        .clone()
        .or_else(|| std::env::var(mergeval_core::judgeclient::ENV_API_KEY).ok())
        .ok_or_else(|| CliError::config("JUDGE_API_KEY unset"))?;
    let transport =
        mergeval_core::judgeclient::HttpTransport::new(base, key, Duration::from_secs(120));
    Ok(JudgeClient::new(transport, config)?)
}

fn cmd_score(args: &ScoreArgs, resolved: &Resolved) -> Result<(), CliError> {
    let questions = scorer::load_questions(&args.questions)?;
    let responses = scorer::load_responses(&args.responses)?;
    let needs_judge = questions.questions().iter().any(|q| {
        q.criteria
            .iter()
            .any(|c| matches!(c.criterion, scorer::EvalCriterion::Judge { .. }))
    });
    let judge = if needs_judge {
        Some(build_judge(args, resolved)?)
    } else {
        None
    };
    let skip_policy: SkipPolicy = args.skip_policy.parse().map_err(CliError::config)?;
    let options = ScoreOptions {
        threshold: args.threshold,
        skip_policy,
        max_parallel: resolved.max_parallel,
    };
    if resolved.debug {
        eprintln!(
            "scoring {} questions with {} responses at parallelism {}",
            questions.len(),
            responses.len(),
            options.max_parallel
        );
    }
    let report = scorer::score_all(&questions, &responses, judge.as_ref(), &options)?;
    let rendered = serde_json::to_string_pretty(&report).expect("serializable report");
    std::fs::write(&args.report, format!("{rendered}\n"))?;
    if resolved.json {
        print_json(&serde_json::json!({
            "report": args.report,
            "overall": report.overall,
            "scored": report.total_scored,
            "skipped": report.skipped.len(),
        }));
    } else {
        println!(
            "scored {}/{} questions, overall {:.2}; report at {}",
            report.total_scored,
            report.total_questions,
            report.overall,
            args.report.display()
        );
        if !report.skipped.is_empty() {
            println!("skipped {} question(s):", report.skipped.len());
            for entry in &report.skipped {
                println!("  {}: {}", entry.id, entry.reason);
            }
        }
    }
    Ok(())
}

/// Labels are either a bare {"id": bool} object or a full score report,
/// whose "binary" field is used.
fn load_labels(path: &Path) -> Result<BTreeMap<String, bool>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    let object = value.get("binary").unwrap_or(&value);
    serde_json::from_value(object.clone())
        .map_err(|e| CliError::schema(format!("{}: expected id->bool labels: {e}", path.display())))
}

fn cmd_agree(a: &Path, b: &Path, resolved: &Resolved) -> Result<(), CliError> {
    let labels_a = load_labels(a)?;
    let labels_b = load_labels(b)?;
    let agreement = scorer::pairwise_agreement(&labels_a, &labels_b)?;
    if resolved.json {
        print_json(&serde_json::json!({"agreement": agreement, "items": labels_a.len()}));
    } else {
        println!("{agreement:.2}%");
    }
    Ok(())
}

fn load_id_text(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        text: String,
    }
    let file = std::fs::File::open(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| {
            CliError::schema(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        rows.push((parsed.id, parsed.text));
    }
    Ok(rows)
}

fn cmd_dedup(
    corpus_path: &Path,
    refs_path: &Path,
    threshold: f64,
    report: Option<&Path>,
    resolved: &Resolved,
) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::config(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let corpus = load_id_text(corpus_path)?;
    let refs = load_id_text(refs_path)?;
    let ref_texts: Vec<String> = refs.iter().map(|(_, text)| text.clone()).collect();
    let outcome = dedup::dedup_against(&corpus, &ref_texts, threshold);

    let removed: Vec<serde_json::Value> = outcome
        .removed
        .iter()
        .map(|r| {
            serde_json::json!({
                "id": r.id,
                "matched_ref": refs[r.matched_ref].0,
                "similarity": r.similarity,
            })
        })
        .collect();
    let rendered = serde_json::json!({
        "threshold": threshold,
        "corpus": corpus.len(),
        "refs": refs.len(),
        "retained": outcome.retained,
        "removed": removed,
    });
    match report {
        Some(path) => {
            std::fs::write(
                path,
                format!("{}\n", serde_json::to_string_pretty(&rendered).unwrap()),
            )?;
            if resolved.json {
                print_json(&serde_json::json!({
                    "report": path,
                    "retained": outcome.retained.len(),
                    "removed": outcome.removed.len(),
                }));
            } else {
                println!(
                    "retained {}, removed {}; report at {}",
                    outcome.retained.len(),
                    outcome.removed.len(),
                    path.display()
                );
            }
        }
        None => print_json(&rendered),
    }
    Ok(())
}
