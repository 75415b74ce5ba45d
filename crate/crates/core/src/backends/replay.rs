//! Transcript recording and hash-matched playback.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest};

/// One JSONL transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub hash: String,
    pub tag: String,
    pub response: String,
    pub latency_ms: f64,
    pub backend: String,
    /// Seconds since the Unix epoch.
    pub recorded_at: u64,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>, BackendError> {
    let f = File::open(path).map_err(|e| BackendError::Backend(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| BackendError::Backend(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| BackendError::Backend(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Plays back recorded responses. Identical requests recorded more than once
/// are served in recording order; the last one repeats after that.
pub struct ReplayBackend {
    responses: HashMap<String, Vec<String>>,
    served: Mutex<HashMap<String, usize>>,
}

impl ReplayBackend {
    pub fn new(records: Vec<TranscriptRecord>) -> Self {
        let mut responses: HashMap<String, Vec<String>> = HashMap::new();
        for r in records {
            responses.entry(r.hash).or_default().push(r.response);
        }
        ReplayBackend { responses, served: Mutex::new(HashMap::new()) }
    }

    pub fn open(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(read_transcript(path)?))
    }
}

impl Backend for ReplayBackend {
    fn identity(&self) -> String {
        "replay".into()
    }

    fn respond(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let hash = request.hash();
        let Some(list) = self.responses.get(&hash) else {
            return Err(BackendError::ReplayMiss { hash, tag: request.tag.clone() });
        };
        let mut served = self.served.lock().expect("replay counter");
        let n = served.entry(hash).or_insert(0);
        let out = list[(*n).min(list.len() - 1)].clone();
        *n += 1;
        Ok(out)
    }
}

/// Passes calls through to `inner` and appends every exchange to a JSONL sink.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    sink: Mutex<File>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>, path: &Path) -> Result<Self, BackendError> {
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| BackendError::SinkWriteFailed(format!("{}: {e}", path.display())))?;
        Ok(RecordingBackend { inner, sink: Mutex::new(sink) })
    }
}

impl Backend for RecordingBackend {
    fn identity(&self) -> String {
        format!("record:{}", self.inner.identity())
    }

    fn respond(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let start = Instant::now();
        let response = self.inner.respond(request)?;
        let rec = TranscriptRecord {
            hash: request.hash(),
            tag: request.tag.clone(),
            response: response.clone(),
            latency_ms: start.elapsed().as_secs_f64() * 1000.0,
            backend: self.inner.identity(),
            recorded_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let mut line = serde_json::to_string(&rec).map_err(|e| BackendError::SinkWriteFailed(e.to_string()))?;
        line.push('\n');
        let mut sink = self.sink.lock().expect("transcript sink");
        sink.write_all(line.as_bytes())
            .and_then(|_| sink.flush())
            .map_err(|e| BackendError::SinkWriteFailed(e.to_string()))?;
        Ok(response)
    }
}
