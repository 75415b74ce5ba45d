//! Flat baseline: primitives sampled straight from the goal text, with no
//! symbolic plan in between.

use crate::backends::protocol::{parse_sections, render_sections};
use crate::backends::{BackendError, BackendHandle, CompletionRequest};
use crate::grounder::{parse_primitives, rule_ground, GroundingContext, Primitive, PrimitiveSeq, GROUNDER_SYSTEM};
use crate::plan_ir::{parse_instruction, WorldSchema, TABLE};
use crate::simulator::{Observation, SceneDigest, StateVec};
use crate::tasks;

pub fn flat_request(goal_text: &str, schema: &WorldSchema, digest: &SceneDigest) -> CompletionRequest {
    let user = render_sections(&[
        ("Goal", goal_text),
        ("Scene", &serde_json::to_string(schema).expect("schema serializes")),
        ("Task", "Reply with the complete primitive sequence that achieves the goal."),
    ]);
    let mut req = CompletionRequest::new("flat/sample", GROUNDER_SYSTEM, user);
    req.max_tokens = 1024;
    req.attach("observation", serde_json::to_string_pretty(digest).expect("digest serializes"))
}

/// Samples one open-loop primitive sequence for the whole goal.
pub fn flat_sample(
    goal_text: &str,
    schema: &WorldSchema,
    digest: &SceneDigest,
    backend: &BackendHandle,
) -> Result<PrimitiveSeq, String> {
    let answer = backend.complete(&flat_request(goal_text, schema, digest)).map_err(|e| e.to_string())?;
    let mut seq = parse_primitives(&answer).map_err(|e| e.to_string())?;
    seq.provenance = "flat".into();
    Ok(seq)
}

/// Tracks what the rule table needs between steps: the held object, where
/// things were set down, and which container holds which liquid.
fn advance(digest: &mut SceneDigest, prims: &[Primitive]) {
    let mut target: Option<String> = None;
    for p in prims {
        match p {
            Primitive::Move { target: t } => target = Some(t.clone()),
            Primitive::Grasp { engage: true } => {
                if let Some(t) = &target {
                    if let Some(o) = digest.objects.iter_mut().find(|o| &o.id == t) {
                        o.at = crate::plan_ir::HAND.into();
                        digest.held = Some(t.clone());
                    }
                }
            }
            Primitive::Grasp { engage: false } => {
                if let Some(h) = digest.held.take() {
                    let dest = target.clone().filter(|t| *t != h).unwrap_or_else(|| TABLE.into());
                    if let Some(o) = digest.objects.iter_mut().find(|o| o.id == h) {
                        o.at = dest;
                    }
                }
            }
            Primitive::Pour => {
                if let (Some(h), Some(t)) = (digest.held.clone(), target.clone()) {
                    let moved = digest.containers.get_mut(&h).map(|c| std::mem::take(&mut c.contents));
                    if let (Some(moved), Some(dst)) = (moved, digest.containers.get_mut(&t)) {
                        for (l, v) in moved {
                            *dst.contents.entry(l).or_insert(0) += v;
                        }
                        dst.mixed = false;
                    }
                }
            }
            Primitive::Stir => {}
        }
    }
}

/// Rule answer: the canonical steps grounded one after another against a
/// digest that is advanced open loop.
pub(crate) fn flat_rule_respond(req: &CompletionRequest) -> Result<String, BackendError> {
    let s = parse_sections(&req.user);
    let goal = s.get("Goal").map(|g| g.trim()).unwrap_or("");
    let schema: WorldSchema = s
        .get("Scene")
        .ok_or_else(|| BackendError::Backend("flat request lacks a Scene section".into()))
        .and_then(|t| serde_json::from_str(t).map_err(|e| BackendError::Backend(e.to_string())))?;
    let mut digest: SceneDigest = req
        .attachment("observation")
        .ok_or_else(|| BackendError::Backend("flat request lacks an observation".into()))
        .and_then(|b| serde_json::from_str(b).map_err(|e| BackendError::Backend(e.to_string())))?;
    let Some(m) = tasks::classify_goal(goal) else { return Ok(String::new()) };
    let b = tasks::resolve_bindings(m.kind, &m.bindings, &schema);
    let steps = tasks::canonical_plan(m.kind, &b, &schema, &Default::default())
        .map_err(|e| BackendError::Backend(e.to_string()))?;
    let mut out = Vec::new();
    for (i, text) in steps.iter().enumerate() {
        let ctx = GroundingContext::new(
            parse_instruction(i + 1, text, None),
            Observation { state: StateVec(Vec::new()), digest: digest.clone() },
        );
        let seq = rule_ground(&ctx);
        advance(&mut digest, &seq.primitives);
        out.extend(seq.primitives);
    }
    Ok(crate::grounder::render_primitives(&PrimitiveSeq { primitives: out, provenance: String::new() }))
}
