//! Sandboxed unit-test execution for untrusted generated code.
//!
//! Each test case runs in its own temporary working directory with a
//! stripped environment, an address-space limit and a wall-clock deadline;
//! timeouts kill the whole process group. Teardown always runs.

use super::{extract_code, Result, ScorerError};
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

const MAX_CAPTURED_OUTPUT: usize = 1 << 20;

/// Wall-clock and memory limits for one test case.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Limits {
    pub wall_ms: u64,
    pub memory_mb: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            wall_ms: 10_000,
            memory_mb: 512,
        }
    }
}

/// One test case: stdin and arguments in, expected stdout back. Output
/// comparison ignores trailing whitespace on both sides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestCase {
    #[serde(default)]
    pub stdin: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub expected_stdout: String,
}

/// Executable check for a code answer: the assembled program is
/// `setup_script + extracted code + driver`, run once per case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitTestSpec {
    pub language: String,
    /// Function or command the answer must provide, as stated to the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_requirement: Option<String>,
    #[serde(default)]
    pub setup_script: String,
    #[serde(default)]
    pub teardown_script: String,
    /// Harness code appended after the answer; reads each case's input and
    /// prints the observed output.
    #[serde(default)]
    pub driver: String,
    pub cases: Vec<TestCase>,
    #[serde(default)]
    pub limits: Limits,
}

impl UnitTestSpec {
    pub(super) fn validate(&self) -> std::result::Result<(), String> {
        if self.cases.is_empty() {
            return Err("unit test has no cases".into());
        }
        if self.limits.wall_ms == 0 || self.limits.memory_mb == 0 {
            return Err("unit test limits must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub passed: bool,
    pub timed_out: bool,
    pub exit_code: Option<i32>,
    pub stdout: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitTestOutcome {
    /// 100 * passed / total; 0 when the response contains no code.
    pub score: f64,
    pub no_code: bool,
    pub cases: Vec<CaseResult>,
    pub teardown_failed: bool,
}

/// Interpreter command and source extension per supported language.
/// Compiled languages have no single runtime to resolve and report
/// RuntimeUnavailable instead.
fn interpreter_for(language: &str) -> Option<(&'static str, &'static str)> {
    match language.to_lowercase().as_str() {
        "python" | "py" | "python3" => Some(("python3", "py")),
        "bash" | "sh" | "shell" => Some(("bash", "sh")),
        "javascript" | "js" | "node" => Some(("node", "js")),
        "ruby" | "rb" => Some(("ruby", "rb")),
        "php" => Some(("php", "php")),
        "r" => Some(("Rscript", "r")),
        "perl" => Some(("perl", "pl")),
        _ => None,
    }
}

fn on_path(program: &str) -> bool {
    let Some(paths) = std::env::var_os("PATH") else {
        return false;
    };
    std::env::split_paths(&paths).any(|dir| dir.join(program).is_file())
}

/// Run the spec's cases against the code block extracted from a response.
/// A response without code scores 0 with the `no_code` flag set; a language
/// whose runtime cannot be resolved is a [`ScorerError::RuntimeUnavailable`],
/// reported distinctly from test failure.
pub fn run_unit_tests(response: &str, spec: &UnitTestSpec) -> Result<UnitTestOutcome> {
    let code = match extract_code(response, &spec.language) {
        Ok(code) => code,
        Err(ScorerError::NoCodeFound) => {
            return Ok(UnitTestOutcome {
                score: 0.0,
                no_code: true,
                cases: Vec::new(),
                teardown_failed: false,
            })
        }
        Err(other) => return Err(other),
    };
    let (interpreter, extension) = interpreter_for(&spec.language)
        .filter(|(program, _)| on_path(program))
        .ok_or_else(|| ScorerError::RuntimeUnavailable(spec.language.clone()))?;

    let program = format!("{}\n{}\n{}", spec.setup_script, code, spec.driver);
    let mut results = Vec::with_capacity(spec.cases.len());
    let mut teardown_failed = false;
    for case in &spec.cases {
        let dir = tempfile::tempdir().map_err(|e| ScorerError::SandboxViolation(e.to_string()))?;
        let source = dir.path().join(format!("main.{extension}"));
        std::fs::write(&source, &program)?;

        let result = run_case(interpreter, &source, case, spec.limits, dir.path())?;
        results.push(result);

        if !spec.teardown_script.is_empty() {
            let teardown = dir.path().join(format!("teardown.{extension}"));
            std::fs::write(&teardown, &spec.teardown_script)?;
            let ok = run_case(
                interpreter,
                &teardown,
                &TestCase {
                    stdin: String::new(),
                    args: vec![],
                    expected_stdout: String::new(),
                },
                spec.limits,
                dir.path(),
            )
            .map(|r| r.exit_code == Some(0))
            .unwrap_or(false);
            if !ok {
                teardown_failed = true;
            }
        }
    }

    let passed = results.iter().filter(|r| r.passed).count();
    Ok(UnitTestOutcome {
        score: 100.0 * passed as f64 / results.len() as f64,
        no_code: false,
        cases: results,
        teardown_failed,
    })
}

fn run_case(
    interpreter: &str,
    source: &std::path::Path,
    case: &TestCase,
    limits: Limits,
    workdir: &std::path::Path,
) -> Result<CaseResult> {
    let mut command = Command::new(interpreter);
    command
        .arg(source)
        .args(&case.args)
        .current_dir(workdir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .env_clear();
    // Environment allowlist: untrusted code sees nothing of the host beyond
    // what it needs to run.
    for key in ["PATH", "LANG", "LC_ALL"] {
        if let Ok(value) = std::env::var(key) {
            command.env(key, value);
        }
    }
    command.env("HOME", workdir);

    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        let memory_bytes = limits.memory_mb.saturating_mul(1 << 20);
        // SAFETY: pre_exec runs in the forked child before exec; setsid and
        // setrlimit are async-signal-safe.
        unsafe {
            command.pre_exec(move || {
                if libc::setsid() == -1 {
                    return Err(std::io::Error::last_os_error());
                }
                let limit = libc::rlimit {
                    rlim_cur: memory_bytes,
                    rlim_max: memory_bytes,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &limit) == -1 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }

    let mut child = command
        .spawn()
        .map_err(|e| ScorerError::SandboxViolation(format!("spawn {interpreter}: {e}")))?;

    if let Some(mut stdin) = child.stdin.take() {
        use std::io::Write;
        let _ = stdin.write_all(case.stdin.as_bytes());
    }
    let stdout_reader = capture(child.stdout.take());
    let stderr_reader = capture(child.stderr.take());

    let deadline = Instant::now() + Duration::from_millis(limits.wall_ms);
    let mut timed_out = false;
    let status = loop {
        match child.try_wait()? {
            Some(status) => break Some(status),
            None if Instant::now() >= deadline => {
                kill_process_group(&child);
                timed_out = true;
                let _ = child.wait();
                break None;
            }
            None => std::thread::sleep(Duration::from_millis(5)),
        }
    };

    let stdout = stdout_reader.join().unwrap_or_default();
    let _ = stderr_reader.join();

    let exit_code = status.and_then(|s| s.code());
    let passed = !timed_out
        && status.is_some_and(|s| s.success())
        && stdout.trim_end() == case.expected_stdout.trim_end();
    Ok(CaseResult {
        passed,
        timed_out,
        exit_code,
        stdout,
    })
}

fn capture(pipe: Option<impl Read + Send + 'static>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut output = String::new();
        if let Some(mut pipe) = pipe {
            let mut buf = Vec::new();
            let _ = pipe
                .by_ref()
                .take(MAX_CAPTURED_OUTPUT as u64)
                .read_to_end(&mut buf);
            // Drain anything past the cap so the child never blocks on a
            // full pipe.
            let mut sink = [0u8; 4096];
            while matches!(pipe.read(&mut sink), Ok(n) if n > 0) {}
            output = String::from_utf8_lossy(&buf).into_owned();
        }
        output
    })
}

#[cfg(unix)]
fn kill_process_group(child: &Child) {
    // setsid made the child its own process group leader.
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
}

#[cfg(not(unix))]
fn kill_process_group(child: &Child) {
    let _ = child;
}
