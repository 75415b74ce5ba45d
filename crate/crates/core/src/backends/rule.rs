use super::{Backend, BackendError, CompletionRequest};

/// Offline engine: canonical plans, the fix table, and the grounding table.
/// Pure: identical requests give identical answers and no I/O happens.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBackend;

impl Backend for RuleBackend {
    fn identity(&self) -> String {
        "rule".into()
    }

    fn respond(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        match request.tag.split('/').next() {
            Some("reasoner") => crate::reasoner::rule_respond(request),
            Some("grounder") => crate::grounder::rule_respond(request),
            Some("flat") => crate::harness::flat_rule_respond(request),
            _ => Err(BackendError::Backend(format!("rule backend has no table for tag '{}'", request.tag))),
        }
    }
}
