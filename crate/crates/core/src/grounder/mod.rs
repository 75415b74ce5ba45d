//! Subtask grounding: turns one symbolic subtask plus the scene into a
//! primitive sequence, through a backend or the built-in rule table.

mod dsl;
mod prompt;
mod rules;

use thiserror::Error;

pub use dsl::*;
pub use prompt::{
    build_prompt, build_repair_prompt, prediction_digest, GroundingContext, PromptRecord, GROUNDER_SYSTEM,
};
pub use rules::{classify, rule_ground, ArgClass};

use crate::backends::protocol::parse_sections;
use crate::backends::{BackendError, BackendHandle, CompletionRequest};
use crate::plan_ir::parse_instruction;
use crate::simulator::{Observation, SceneDigest, StateVec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundError {
    #[error("grounding '{subtask}' failed: {reason}")]
    GroundingFailed { subtask: String, reason: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Parses and checks a backend answer against the live scene.
fn accept(text: &str, digest: &SceneDigest) -> Result<PrimitiveSeq, DslError> {
    let seq = parse_primitives(text)?;
    static_check(&seq, Some(digest.held.is_some()))?;
    for (i, p) in seq.primitives.iter().enumerate() {
        if let Primitive::Move { target } = p {
            if !digest.resolves(target) {
                return Err(DslError::StaticCheck { index: i, message: format!("unknown target '{target}'") });
            }
        }
    }
    Ok(seq)
}

/// Grounds through `backend`, allowing one repair round on a malformed answer.
pub fn ground(ctx: &GroundingContext, backend: &BackendHandle) -> Result<PrimitiveSeq, GroundError> {
    let failed = |reason: String| GroundError::GroundingFailed { subtask: ctx.subtask.text.clone(), reason };
    if ctx.subtask.verb.is_none() {
        return Err(failed("no recognized verb in subtask".into()));
    }
    let first = backend.complete(&build_prompt(ctx).request("grounder/ground"))?;
    let err = match accept(&first, ctx.digest()) {
        Ok(mut seq) => {
            seq.provenance = ctx.subtask.text.clone();
            return Ok(seq);
        }
        Err(e) => e,
    };
    let second = backend.complete(&build_repair_prompt(ctx, &first, &err).request("grounder/repair"))?;
    match accept(&second, ctx.digest()) {
        Ok(mut seq) => {
            seq.provenance = ctx.subtask.text.clone();
            Ok(seq)
        }
        Err(e) => Err(failed(format!("after repair: {e}"))),
    }
}

/// Rule-engine answer to a grounding request.
pub(crate) fn rule_respond(req: &CompletionRequest) -> Result<String, BackendError> {
    let sections = parse_sections(&req.user);
    let text = sections
        .get("Subtask")
        .ok_or_else(|| BackendError::Backend("grounding request lacks a Subtask section".into()))?;
    let digest: SceneDigest = req
        .attachment("observation")
        .ok_or_else(|| BackendError::Backend("grounding request lacks an observation".into()))
        .and_then(|b| serde_json::from_str(b).map_err(|e| BackendError::Backend(e.to_string())))?;
    let ctx = GroundingContext {
        subtask: parse_instruction(1, text.trim(), None),
        observation: Observation { state: StateVec(Vec::new()), digest },
        predicted: None,
    };
    Ok(render_primitives(&rule_ground(&ctx)))
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use super::*;
    use crate::backends::Backend;
    use crate::plan_ir::TaskKind;
    use crate::simulator::{observe, sample_scene};
    use crate::tasks::TaskSpec;

    fn ctx(text: &str) -> GroundingContext {
        let w = sample_scene(&TaskSpec::variant(TaskKind::PickPlace, 0), 1).unwrap();
        GroundingContext::new(parse_instruction(1, text, None), observe(&w))
    }

    struct Scripted {
        answers: Vec<&'static str>,
        calls: AtomicUsize,
    }

    impl Backend for Scripted {
        fn identity(&self) -> String {
            "scripted".into()
        }
        fn respond(&self, _: &CompletionRequest) -> Result<String, BackendError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.answers[i.min(self.answers.len() - 1)].to_string())
        }
    }

    fn scripted(answers: Vec<&'static str>) -> (BackendHandle, Arc<Scripted>) {
        let s = Arc::new(Scripted { answers, calls: AtomicUsize::new(0) });
        (BackendHandle::new(s.clone()), s)
    }

    #[test]
    fn rule_backend_grounds_pick() {
        let seq = ground(&ctx("pick up cuboid"), &BackendHandle::rule()).unwrap();
        assert_eq!(seq.primitives, vec![Primitive::move_to("cuboid"), Primitive::Grasp { engage: true }]);
        assert_eq!(seq.provenance, "pick up cuboid");
    }

    #[test]
    fn one_repair_round_then_fail() {
        let (b, s) = scripted(vec!["pour", "move to cuboid\ngrasp 1"]);
        let seq = ground(&ctx("pick up cuboid"), &b).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(s.calls.load(Ordering::SeqCst), 2);

        let (b, s) = scripted(vec!["grasp 0", "stir"]);
        assert!(matches!(ground(&ctx("pick up cuboid"), &b), Err(GroundError::GroundingFailed { .. })));
        assert_eq!(s.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn unknown_target_triggers_repair() {
        let (b, _) = scripted(vec!["move to unicorn", "move to unicorn"]);
        assert!(matches!(ground(&ctx("pick up cuboid"), &b), Err(GroundError::GroundingFailed { .. })));
    }

    #[test]
    fn unknown_verb_fails() {
        let err = ground(&ctx("frobnicate the cuboid"), &BackendHandle::rule()).unwrap_err();
        assert!(matches!(err, GroundError::GroundingFailed { .. }));
    }
}
