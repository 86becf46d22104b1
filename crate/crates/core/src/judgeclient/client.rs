//! The judge client: cache lookup, rate limiting, retry with backoff, and
//! transcript logging around a [`JudgeTransport`].

use super::transport::{JudgeTransport, TransportResponse};
use super::{JudgeError, JudgeRequest, Result, TranscriptEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone)]
pub struct JudgeClientConfig {
    pub model: String,
    /// Transient failures retry up to this many total attempts.
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
    /// Seed for backoff jitter; fixed by default for reproducible runs.
    pub jitter_seed: u64,
    /// Requests per minute; None disables rate limiting.
    pub requests_per_minute: Option<u32>,
    /// Directory for content-addressed reply caching; None disables it.
    pub cache_dir: Option<PathBuf>,
    /// JSON-lines transcript of attempts and replies; None disables it.
    pub transcript_path: Option<PathBuf>,
}

impl Default for JudgeClientConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            max_attempts: 5,
            backoff_base: Duration::from_millis(250),
            backoff_cap: Duration::from_secs(8),
            jitter_seed: 0,
            requests_per_minute: None,
            cache_dir: None,
            transcript_path: None,
        }
    }
}

impl JudgeClientConfig {
    /// Read endpoint configuration from JUDGE_API_BASE / JUDGE_API_KEY /
    /// JUDGE_MODEL. Fails when the base URL or key is missing.
    pub fn http_from_env() -> Result<(Self, super::HttpTransport)> {
        let base = std::env::var(super::ENV_API_BASE)
            .map_err(|_| JudgeError::NotConfigured(format!("{} unset", super::ENV_API_BASE)))?;
        let key = std::env::var(super::ENV_API_KEY)
            .map_err(|_| JudgeError::NotConfigured(format!("{} unset", super::ENV_API_KEY)))?;
        let model = std::env::var(super::ENV_MODEL).unwrap_or_else(|_| "gpt-4o".into());
        let config = Self {
            model,
            ..Self::default()
        };
        let transport = super::HttpTransport::new(base, key, Duration::from_secs(120));
        Ok((config, transport))
    }
}

/// A successful judge reply and how it was obtained.
#[derive(Debug, Clone)]
pub struct JudgeReply {
    pub text: String,
    pub retries: u32,
    pub from_cache: bool,
}

struct TokenBucket {
    capacity: f64,
    tokens: f64,
    refill_per_sec: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(per_minute: u32) -> Self {
        Self {
            capacity: per_minute as f64,
            tokens: per_minute as f64,
            refill_per_sec: per_minute as f64 / 60.0,
            last: Instant::now(),
        }
    }

    /// Time to wait before a token is available; takes the token.
    fn acquire(&mut self) -> Duration {
        let now = Instant::now();
        self.tokens = (self.tokens
            + now.duration_since(self.last).as_secs_f64() * self.refill_per_sec)
            .min(self.capacity);
        self.last = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Duration::ZERO
        } else {
            let wait = (1.0 - self.tokens) / self.refill_per_sec;
            self.tokens = 0.0;
            Duration::from_secs_f64(wait)
        }
    }
}

pub struct JudgeClient {
    transport: Box<dyn JudgeTransport>,
    config: JudgeClientConfig,
    limiter: Option<Mutex<TokenBucket>>,
    jitter: Mutex<ChaCha8Rng>,
    transcript: Option<Mutex<fs::File>>,
}

impl JudgeClient {
    pub fn new(
        transport: impl JudgeTransport + 'static,
        config: JudgeClientConfig,
    ) -> Result<Self> {
        if let Some(dir) = &config.cache_dir {
            fs::create_dir_all(dir)?;
        }
        let transcript = match &config.transcript_path {
            Some(path) => {
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                Some(Mutex::new(
                    fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(path)?,
                ))
            }
            None => None,
        };
        Ok(Self {
            limiter: config
                .requests_per_minute
                .map(|rpm| Mutex::new(TokenBucket::new(rpm))),
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(config.jitter_seed)),
            transport: Box::new(transport),
            config,
            transcript,
        })
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    /// Cached reply for a request digest, if the cache holds one.
    pub fn cache_lookup(&self, digest: &str) -> Option<String> {
        let dir = self.config.cache_dir.as_ref()?;
        fs::read_to_string(dir.join(format!("{digest}.reply"))).ok()
    }

    fn cache_store(&self, digest: &str, reply: &str) {
        if let Some(dir) = &self.config.cache_dir {
            // Write-then-rename keeps concurrent readers off partial files.
            let tmp = dir.join(format!("{digest}.tmp"));
            let target = dir.join(format!("{digest}.reply"));
            if fs::write(&tmp, reply).is_ok() {
                let _ = fs::rename(&tmp, &target);
            }
        }
    }

    fn log(&self, entry: &TranscriptEntry) {
        if let Some(file) = &self.transcript {
            let mut file = file.lock().unwrap();
            if let Ok(line) = serde_json::to_string(entry) {
                let _ = writeln!(file, "{line}");
            }
        }
    }

    fn entry(&self, digest: &str, event: &str) -> TranscriptEntry {
        TranscriptEntry {
            unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .unwrap_or_default()
                .as_millis(),
            digest: digest.to_string(),
            event: event.to_string(),
            status: None,
            retries: None,
            reply: None,
            parsed: None,
        }
    }

    /// Record parsed rubric scores against a request digest (appended by the
    /// scorer once a reply has been parsed).
    pub fn record_scores(&self, digest: &str, correctness: f64, completeness: f64, total: f64) {
        let mut entry = self.entry(digest, "parsed");
        entry.parsed = Some([correctness, completeness, total]);
        self.log(&entry);
    }

    /// Send a judge request. Identical requests are served from the cache;
    /// 429 and 5xx responses and connection failures retry with capped
    /// exponential backoff plus jitter, up to `max_attempts` total tries.
    pub fn send(&self, req: &JudgeRequest) -> Result<JudgeReply> {
        let digest = req.digest();
        if let Some(text) = self.cache_lookup(&digest) {
            let mut entry = self.entry(&digest, "cache_hit");
            entry.reply = Some(text.clone());
            self.log(&entry);
            return Ok(JudgeReply {
                text,
                retries: 0,
                from_cache: true,
            });
        }

        let mut last_failure = String::new();
        for attempt in 1..=self.config.max_attempts {
            if let Some(limiter) = &self.limiter {
                let wait = limiter.lock().unwrap().acquire();
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }

            match self.transport.execute(req) {
                Ok(TransportResponse { status, body }) => {
                    let mut entry = self.entry(&digest, "attempt");
                    entry.status = Some(status);
                    entry.retries = Some(attempt - 1);
                    self.log(&entry);

                    match status {
                        200 => {
                            let text = extract_assistant_text(&body)?;
                            self.cache_store(&digest, &text);
                            let mut done = self.entry(&digest, "reply");
                            done.retries = Some(attempt - 1);
                            done.reply = Some(text.clone());
                            self.log(&done);
                            return Ok(JudgeReply {
                                text,
                                retries: attempt - 1,
                                from_cache: false,
                            });
                        }
                        401 | 403 => return Err(JudgeError::AuthFailure(status)),
                        429 | 500..=599 => {
                            last_failure = format!("http {status}");
                        }
                        other => {
                            return Err(JudgeError::MalformedApiReply(format!(
                                "unexpected http {other}: {}",
                                truncate(&body, 200)
                            )))
                        }
                    }
                }
                Err(network) => {
                    let mut entry = self.entry(&digest, "attempt");
                    entry.retries = Some(attempt - 1);
                    self.log(&entry);
                    last_failure = network;
                }
            }

            if attempt < self.config.max_attempts {
                std::thread::sleep(self.backoff_delay(attempt));
            }
        }
        Err(JudgeError::TransientExhausted {
            attempts: self.config.max_attempts,
            last: last_failure,
        })
    }

    fn backoff_delay(&self, attempt: u32) -> Duration {
        let base = self.config.backoff_base.as_millis() as u64;
        let exp = base.saturating_mul(1u64 << (attempt - 1).min(16));
        let capped = exp.min(self.config.backoff_cap.as_millis() as u64);
        let jitter = self.jitter.lock().unwrap().random_range(0..=base);
        Duration::from_millis(capped + jitter)
    }
}

fn truncate(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}

/// Pull the assistant text out of a chat-completions response body.
fn extract_assistant_text(body: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| JudgeError::MalformedApiReply(format!("{e}: {}", truncate(body, 200))))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| {
            JudgeError::MalformedApiReply(format!(
                "no choices[0].message.content in {}",
                truncate(body, 200)
            ))
        })
}
