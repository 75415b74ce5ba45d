//! Pluggable completion engines behind one request/response interface:
//! an offline rule engine, a remote chat-completion client, and transcript
//! record/replay. Every call goes through a [`BackendHandle`], which records
//! its latency.

mod corrupt;
mod latency;
pub mod protocol;
mod remote;
mod replay;
mod rule;

use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use corrupt::{corrupt_lines, Corruption, CorruptingBackend};
pub use latency::{latency_report, LatencyReport, ModuleSummary};
pub use remote::{RemoteBackend, RemoteConfig};
pub use replay::{read_transcript, RecordingBackend, ReplayBackend, TranscriptRecord};
pub use rule::RuleBackend;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend failed: {0}")]
    Backend(String),
    #[error("no recorded response for request {hash} (tag {tag})")]
    ReplayMiss { hash: String, tag: String },
    #[error("request timed out after {after_ms} ms")]
    Timeout { after_ms: u64 },
    #[error("transcript write failed: {0}")]
    SinkWriteFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    pub body: String,
}

/// One model call. `tag` is `<module>/<stage>`, e.g. `reasoner/decompose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: String,
}

impl CompletionRequest {
    pub fn new(tag: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        CompletionRequest {
            system: system.into(),
            user: user.into(),
            attachments: Vec::new(),
            temperature: 0.0,
            max_tokens: 1024,
            tag: tag.into(),
        }
    }

    pub fn attach(mut self, name: &str, body: impl Into<String>) -> Self {
        self.attachments.push(Attachment { name: name.to_string(), body: body.into() });
        self
    }

    pub fn attachment(&self, name: &str) -> Option<&str> {
        self.attachments.iter().find(|a| a.name == name).map(|a| a.body.as_str())
    }

    /// Replay key over system, user, attachments and temperature.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            system: &'a str,
            user: &'a str,
            attachments: &'a [Attachment],
            temperature: f64,
        }
        let key = Key { system: &self.system, user: &self.user, attachments: &self.attachments, temperature: self.temperature };
        let bytes = serde_json::to_vec(&key).expect("request key serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn stage(&self) -> &str {
        self.tag.split_once('/').map(|(_, s)| s).unwrap_or("")
    }

    pub fn module(&self) -> Module {
        match self.tag.split('/').next() {
            Some("grounder") | Some("flat") => Module::Vlm,
            Some("predictor") => Module::Mp,
            Some("controller") => Module::Rl,
            _ => Module::Llm,
        }
    }
}

/// Pipeline module a latency sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Module {
    #[serde(rename = "LLM")]
    Llm,
    #[serde(rename = "MP")]
    Mp,
    #[serde(rename = "VLM")]
    Vlm,
    #[serde(rename = "RL")]
    Rl,
}

impl Module {
    pub fn as_str(self) -> &'static str {
        match self {
            Module::Llm => "LLM",
            Module::Mp => "MP",
            Module::Vlm => "VLM",
            Module::Rl => "RL",
        }
    }
}

impl std::str::FromStr for Module {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LLM" => Ok(Module::Llm),
            "MP" => Ok(Module::Mp),
            "VLM" => Ok(Module::Vlm),
            "RL" => Ok(Module::Rl),
            _ => Err(format!("unknown module '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub module: Module,
    pub ms: f64,
    /// Whether the module runs inside the control loop.
    pub online: bool,
}

/// Shared, append-only latency sink.
#[derive(Debug, Default)]
pub struct LatencyLog(Mutex<Vec<LatencyRecord>>);

impl LatencyLog {
    pub fn record(&self, module: Module, ms: f64, online: bool) {
        self.0.lock().expect("latency log").push(LatencyRecord { module, ms: ms.max(0.0), online });
    }

    pub fn snapshot(&self) -> Vec<LatencyRecord> {
        self.0.lock().expect("latency log").clone()
    }

    pub fn extend(&self, records: &[LatencyRecord]) {
        self.0.lock().expect("latency log").extend_from_slice(records);
    }
}

/// A completion engine. Implementations must be safe to call concurrently.
pub trait Backend: Send + Sync {
    fn identity(&self) -> String;

    fn respond(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

/// Backend plus the latency log its calls are timed into.
#[derive(Clone)]
pub struct BackendHandle {
    inner: Arc<dyn Backend>,
    latency: Arc<LatencyLog>,
}

impl std::fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendHandle").field("backend", &self.inner.identity()).finish()
    }
}

impl BackendHandle {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        BackendHandle { inner, latency: Arc::new(LatencyLog::default()) }
    }

    pub fn rule() -> Self {
        Self::new(Arc::new(RuleBackend))
    }

    /// Same backend, separate latency log.
    pub fn with_log(&self, latency: Arc<LatencyLog>) -> Self {
        BackendHandle { inner: self.inner.clone(), latency }
    }

    pub fn identity(&self) -> String {
        self.inner.identity()
    }

    pub fn latency(&self) -> &Arc<LatencyLog> {
        &self.latency
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.inner
    }

    /// Sends `request` and times the round trip. Model calls run offline
    /// relative to the control loop.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let start = Instant::now();
        let out = self.inner.respond(request);
        self.latency.record(request.module(), start.elapsed().as_secs_f64() * 1000.0, false);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_tag_and_max_tokens() {
        let a = CompletionRequest::new("reasoner/interpret", "sys", "user");
        let mut b = a.clone();
        b.tag = "other/x".into();
        b.max_tokens = 7;
        assert_eq!(a.hash(), b.hash());
        let c = a.clone().attach("observation", "{}");
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn module_from_tag() {
        assert_eq!(CompletionRequest::new("reasoner/decompose", "", "").module(), Module::Llm);
        assert_eq!(CompletionRequest::new("grounder/ground", "", "").module(), Module::Vlm);
    }
}
