//! Transport for the LLM judge: chat-style HTTP client with multimodal
//! message payloads, retries with backoff, rate limiting, a response cache
//! and a deterministic mock for tests.

mod client;
mod transport;

pub use client::{JudgeClient, JudgeClientConfig, JudgeReply};
pub use transport::{HttpTransport, JudgeTransport, MockTransport, TransportResponse};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variables consulted by [`JudgeClientConfig::from_env`].
pub const ENV_API_BASE: &str = "JUDGE_API_BASE";
pub const ENV_API_KEY: &str = "JUDGE_API_KEY";
pub const ENV_MODEL: &str = "JUDGE_MODEL";

/// One part of a chat message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentPart {
    Text(String),
    /// Base64-encoded image with its media type ("image/png", ...).
    ImageB64 {
        media_type: String,
        data: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: String,
    pub parts: Vec<ContentPart>,
}

/// A judge call: model, messages and fixed decoding parameters.
/// Temperature stays at 0 so identical requests yield comparable replies.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
    pub temperature: f32,
}

impl JudgeRequest {
    /// Single-user-message request with default decoding parameters.
    pub fn user(model: impl Into<String>, parts: Vec<ContentPart>) -> Self {
        Self {
            model: model.into(),
            messages: vec![ChatMessage {
                role: "user".into(),
                parts,
            }],
            max_tokens: 2048,
            temperature: 0.0,
        }
    }

    /// Content digest used for caching and transcripts. Covers the model
    /// name, every message's role and content bytes in order, and the
    /// decoding parameters; serialization details do not enter the hash.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model.as_bytes());
        hasher.update([0]);
        for message in &self.messages {
            hasher.update(message.role.as_bytes());
            hasher.update([1]);
            for part in &message.parts {
                match part {
                    ContentPart::Text(text) => {
                        hasher.update([2]);
                        hasher.update(text.as_bytes());
                    }
                    ContentPart::ImageB64 { media_type, data } => {
                        hasher.update([3]);
                        hasher.update(media_type.as_bytes());
                        hasher.update([0]);
                        hasher.update(data.as_bytes());
                    }
                }
            }
        }
        hasher.update(self.max_tokens.to_le_bytes());
        hasher.update(self.temperature.to_le_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Chat-completions wire body.
    pub fn to_wire_json(&self) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = self
            .messages
            .iter()
            .map(|m| {
                let content: Vec<serde_json::Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        ContentPart::Text(text) => {
                            serde_json::json!({"type": "text", "text": text})
                        }
                        ContentPart::ImageB64 { media_type, data } => serde_json::json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:{media_type};base64,{data}")}
                        }),
                    })
                    .collect();
                serde_json::json!({"role": m.role, "content": content})
            })
            .collect();
        serde_json::json!({
            "model": self.model,
            "messages": messages,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        })
    }
}

/// One transcript line: appended for every attempt and reply.
#[derive(Debug, Clone, Serialize)]
pub struct TranscriptEntry {
    pub unix_ms: u128,
    pub digest: String,
    pub event: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retries: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parsed: Option<[f64; 3]>,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("authentication failed (http {0})")]
    AuthFailure(u16),
    #[error("transient failures exhausted after {attempts} attempts: {last}")]
    TransientExhausted { attempts: u32, last: String },
    #[error("malformed api reply: {0}")]
    MalformedApiReply(String),
    #[error("judge endpoint not configured: {0}")]
    NotConfigured(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, JudgeError>;
