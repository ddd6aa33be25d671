use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

/// An image attached to the last user message. Serialized as base64.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ImageInput {
    pub mime_type: String,
    #[serde(
        rename = "data",
        serialize_with = "ser_b64",
        deserialize_with = "de_b64"
    )]
    pub bytes: Vec<u8>,
}

impl ImageInput {
    pub fn png(bytes: Vec<u8>) -> Self {
        Self {
            mime_type: "image/png".into(),
            bytes,
        }
    }
}

pub(crate) fn ser_b64<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&B64.encode(bytes))
}

pub(crate) fn de_b64<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let text = String::deserialize(d)?;
    B64.decode(text.as_bytes())
        .map_err(serde::de::Error::custom)
}

pub const DEFAULT_MAX_TOKENS: u32 = 8192;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LlmRequest {
    pub tag: String,
    pub messages: Vec<Message>,
    #[serde(default)]
    pub images: Vec<ImageInput>,
    pub max_tokens: u32,
}

impl LlmRequest {
    /// Single-turn request carrying one user message.
    pub fn user(tag: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            messages: vec![Message {
                role: Role::User,
                text: text.into(),
            }],
            images: Vec::new(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_image(mut self, image: ImageInput) -> Self {
        self.images.push(image);
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    /// Appends an assistant turn and a follow-up user turn.
    pub fn follow_up(mut self, reply: impl Into<String>, text: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: Role::Assistant,
            text: reply.into(),
        });
        self.messages.push(Message {
            role: Role::User,
            text: text.into(),
        });
        self
    }

    /// Hex sha256 over the tag, the normalized messages, the raw image
    /// bytes and `max_tokens`. Each part is length-prefixed.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut part = |bytes: &[u8]| {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        part(b"v1");
        part(self.tag.as_bytes());
        for m in &self.messages {
            part(m.role.as_str().as_bytes());
            part(normalize_text(&m.text).as_bytes());
        }
        for img in &self.images {
            part(img.mime_type.as_bytes());
            part(&Sha256::digest(&img.bytes));
        }
        part(&self.max_tokens.to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// Trailing whitespace is dropped from every line (this also folds CRLF).
pub fn normalize_text(text: &str) -> String {
    text.split('\n')
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LlmExchange {
    pub fingerprint: String,
    pub request: LlmRequest,
    pub response_text: String,
    #[serde(rename = "latencyMs", with = "millis")]
    pub latency: Duration,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
