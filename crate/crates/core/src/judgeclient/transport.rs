//! Pluggable wire layer: a real HTTP transport and mocks for tests.

use super::JudgeRequest;
use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

/// Raw HTTP-level outcome of one attempt.
#[derive(Debug, Clone)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

/// One dispatch attempt. Implementations must be shareable across scoring
/// threads. `Err` is reserved for connection-level failures; HTTP error
/// statuses come back as responses.
pub trait JudgeTransport: Send + Sync {
    fn execute(&self, req: &JudgeRequest) -> std::result::Result<TransportResponse, String>;
}

/// POSTs chat-completions requests to `{base}/chat/completions`.
pub struct HttpTransport {
    agent: ureq::Agent,
    base: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(base: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::config::Config::builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        Self {
            agent,
            base: base.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
        }
    }
}

impl JudgeTransport for HttpTransport {
    fn execute(&self, req: &JudgeRequest) -> std::result::Result<TransportResponse, String> {
        let url = format!("{}/chat/completions", self.base);
        let mut response = self
            .agent
            .post(&url)
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(req.to_wire_json())
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(TransportResponse { status, body })
    }
}

/// What a [`MockTransport`] returns on one call.
#[derive(Debug, Clone)]
pub enum MockStep {
    Reply(u16, String),
    NetworkError(String),
}

enum MockMode {
    /// Consume scripted steps in order; the last step repeats.
    Scripted(Mutex<VecDeque<MockStep>>),
    /// Derive a rubric-shaped reply from the request digest. Deterministic:
    /// the same request always yields the same scores.
    Deterministic,
}

/// In-process transport used by tests and `--mock-judge` runs.
pub struct MockTransport {
    mode: MockMode,
    calls: Mutex<u32>,
}

impl MockTransport {
    pub fn scripted(steps: Vec<MockStep>) -> Self {
        Self {
            mode: MockMode::Scripted(Mutex::new(steps.into())),
            calls: Mutex::new(0),
        }
    }

    /// A single canned assistant reply.
    pub fn replying(text: &str) -> Self {
        Self::scripted(vec![MockStep::Reply(200, completion_body(text))])
    }

    pub fn deterministic() -> Self {
        Self {
            mode: MockMode::Deterministic,
            calls: Mutex::new(0),
        }
    }

    /// Number of execute() calls seen so far.
    pub fn calls(&self) -> u32 {
        *self.calls.lock().unwrap()
    }
}

/// Wrap assistant text in a chat-completions response body.
pub fn completion_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}]
    })
    .to_string()
}

impl JudgeTransport for MockTransport {
    fn execute(&self, req: &JudgeRequest) -> std::result::Result<TransportResponse, String> {
        *self.calls.lock().unwrap() += 1;
        match &self.mode {
            MockMode::Scripted(queue) => {
                let mut queue = queue.lock().unwrap();
                let step = if queue.len() > 1 {
                    queue.pop_front().unwrap()
                } else {
                    queue
                        .front()
                        .cloned()
                        .ok_or("mock transport has no steps")?
                };
                match step {
                    MockStep::Reply(status, body) => Ok(TransportResponse { status, body }),
                    MockStep::NetworkError(msg) => Err(msg),
                }
            }
            MockMode::Deterministic => {
                let digest = req.digest();
                let bytes = digest.as_bytes();
                let correctness = (bytes[0] as u32 * 256 + bytes[1] as u32) % 51;
                let completeness = (bytes[2] as u32 * 256 + bytes[3] as u32) % 51;
                let text = format!(
                    "Justification:\n1. Correctness: <scripted mock>\n2. Completeness: <scripted mock>\n\n\
                     Scores:\n- Correctness: {correctness}/50\n- Completeness: {completeness}/50\n\n\
                     Total Score: {}/100",
                    correctness + completeness
                );
                Ok(TransportResponse {
                    status: 200,
                    body: completion_body(&text),
                })
            }
        }
    }
}
