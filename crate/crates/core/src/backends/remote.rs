//! Chat-completion client over HTTPS.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, CompletionRequest};

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
}

impl RemoteConfig {
    /// Reads `LABPLAN_ENDPOINT`, `LABPLAN_MODEL`, `LABPLAN_API_KEY` and
    /// `LABPLAN_TIMEOUT_S`.
    pub fn from_env() -> Result<Self, BackendError> {
        let endpoint = std::env::var("LABPLAN_ENDPOINT")
            .map_err(|_| BackendError::Backend("LABPLAN_ENDPOINT is not set".into()))?;
        let model = std::env::var("LABPLAN_MODEL").unwrap_or_else(|_| "gpt-4o".into());
        let timeout = std::env::var("LABPLAN_TIMEOUT_S")
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .unwrap_or(60);
        Ok(RemoteConfig {
            endpoint,
            model,
            token: std::env::var("LABPLAN_API_KEY").ok(),
            timeout: Duration::from_secs(timeout),
            retries: 2,
            backoff: Duration::from_millis(500),
        })
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend { config, agent }
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let mut user = req.user.clone();
        for a in &req.attachments {
            user.push_str(&format!("\n### Attachment: {}\n{}\n", a.name, a.body));
        }
        json!({
            "model": self.config.model,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": user},
            ],
        })
    }

    fn once(&self, body: &str) -> Result<String, BackendError> {
        let mut call = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(t) = &self.config.token {
            call = call.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = call.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout { after_ms: self.config.timeout.as_millis() as u64 },
            other => BackendError::Backend(other.to_string()),
        })?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Backend(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Backend(format!("HTTP {status}: {text}")));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| BackendError::Backend(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Backend("response has no message content".into()))
    }
}

impl Backend for RemoteBackend {
    fn identity(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn respond(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let body = self.body(request).to_string();
        let mut delay = self.config.backoff;
        let mut last = BackendError::Backend("no attempt made".into());
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.once(&body) {
                Ok(text) => return Ok(text),
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_endpoint_exhausts_retries() {
        let b = RemoteBackend::new(RemoteConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model: "m".into(),
            token: None,
            timeout: Duration::from_millis(200),
            retries: 2,
            backoff: Duration::from_millis(1),
        });
        let err = b.respond(&CompletionRequest::new("reasoner/interpret", "s", "u")).unwrap_err();
        assert!(matches!(err, BackendError::Backend(_) | BackendError::Timeout { .. }));
    }

    #[test]
    fn attachments_are_inlined() {
        let b = RemoteBackend::new(RemoteConfig {
            endpoint: "http://x".into(),
            model: "m".into(),
            token: None,
            timeout: Duration::from_secs(1),
            retries: 0,
            backoff: Duration::ZERO,
        });
        let req = CompletionRequest::new("grounder/ground", "s", "u").attach("observation", "{\"held\":null}");
        let body = b.body(&req);
        assert!(body["messages"][1]["content"].as_str().unwrap().contains("Attachment: observation"));
    }
}
