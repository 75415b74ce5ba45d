use serde::{Deserialize, Serialize};

use super::DslError;
use crate::backends::protocol::render_sections;
use crate::backends::{Attachment, CompletionRequest};
use crate::plan_ir::Subtask;
use crate::simulator::{denormalize, Observation, SceneDigest, StateVec, FILL_SLOTS, OBJECT_SLOTS};

/// Everything the grounder may look at: one subtask and the scene. The goal is
/// deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingContext {
    pub subtask: Subtask,
    pub observation: Observation,
    #[serde(default)]
    pub predicted: Option<Vec<StateVec>>,
}

impl GroundingContext {
    pub fn new(subtask: Subtask, observation: Observation) -> Self {
        GroundingContext { subtask, observation, predicted: None }
    }

    pub fn digest(&self) -> &SceneDigest {
        &self.observation.digest
    }
}

pub const GROUNDER_SYSTEM: &str = "\
You translate one laboratory subtask into robot action primitives.
Allowed primitives, one per line:
  move to <id>   drive the end-effector to an object or station
  grasp 1        close the gripper on the object under the end-effector
  grasp 0        open the gripper and set the held object down
  pour           tilt the held container into the container below
  stir           stir the container below with the held stick
Use only ids that appear in the observation. pour and stir need a closed gripper.
Reply with primitives only: no prose, no numbering, no code fences.
Reply with nothing when the subtask needs no action.";

/// Prompt pieces before they are wrapped into a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub system: String,
    pub user: String,
    pub attachments: Vec<Attachment>,
}

impl PromptRecord {
    pub fn request(&self, tag: &str) -> CompletionRequest {
        CompletionRequest {
            system: self.system.clone(),
            user: self.user.clone(),
            attachments: self.attachments.clone(),
            temperature: 0.0,
            max_tokens: 256,
            tag: tag.to_string(),
        }
    }
}

/// Object displacements from the current state to the end of the predicted
/// horizon, plus gripper and fill changes. Empty when nothing is predicted.
pub fn prediction_digest(digest: &SceneDigest, current: &StateVec, predicted: &[StateVec]) -> String {
    let Some(last) = predicted.last() else { return String::new() };
    let c = current.as_slice();
    let p = last.as_slice();
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let mut out = format!("horizon {} steps\n", predicted.len());
    let d = |i: usize| denormalize(get(p, i)) - denormalize(get(c, i));
    out.push_str(&format!("arm moves ({:+.3}, {:+.3})\n", d(0), d(1)));
    out.push_str(&format!("gripper {}\n", if get(p, 2) > 0.0 { "closed" } else { "open" }));
    for (slot, o) in digest.objects.iter().take(OBJECT_SLOTS).enumerate() {
        let (ix, iy) = (3 + 2 * slot, 4 + 2 * slot);
        out.push_str(&format!("{} moves ({:+.3}, {:+.3})\n", o.id, d(ix), d(iy)));
    }
    let containers = digest.objects.iter().filter(|o| o.class.is_container()).take(FILL_SLOTS);
    for (slot, o) in containers.enumerate() {
        let i = 3 + 2 * OBJECT_SLOTS + slot;
        out.push_str(&format!("{} fill {:+.2}\n", o.id, d(i)));
    }
    out
}

/// Byte-deterministic prompt: grammar and output contract in the system text,
/// subtask in the user text, scene digest (and prediction digest when present)
/// as attachments.
pub fn build_prompt(ctx: &GroundingContext) -> PromptRecord {
    let user = render_sections(&[("Subtask", &ctx.subtask.text)]);
    let mut attachments = vec![Attachment {
        name: "observation".into(),
        body: serde_json::to_string_pretty(ctx.digest()).expect("digest serializes"),
    }];
    if let Some(pred) = &ctx.predicted {
        attachments.push(Attachment {
            name: "prediction".into(),
            body: prediction_digest(ctx.digest(), &ctx.observation.state, pred),
        });
    }
    PromptRecord { system: GROUNDER_SYSTEM.to_string(), user, attachments }
}

/// Re-prompt after a malformed answer, quoting the answer and the error.
pub fn build_repair_prompt(ctx: &GroundingContext, previous: &str, error: &DslError) -> PromptRecord {
    let mut p = build_prompt(ctx);
    p.user = render_sections(&[
        ("Subtask", &ctx.subtask.text),
        ("Previous output", previous),
        ("Error", &format!("{error}. Reply again with valid primitives only.")),
    ]);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan_ir::{parse_instruction, TaskKind};
    use crate::simulator::{observe, sample_scene};
    use crate::tasks::TaskSpec;

    fn ctx() -> GroundingContext {
        let w = sample_scene(&TaskSpec::variant(TaskKind::Mix, 0), 3).unwrap();
        GroundingContext::new(parse_instruction(1, "add reagent A to beaker", None), observe(&w))
    }

    #[test]
    fn prompt_lists_primitives_and_is_deterministic() {
        let c = ctx();
        let a = build_prompt(&c);
        for p in ["move to <id>", "grasp 1", "grasp 0", "pour", "stir"] {
            assert!(a.system.contains(p));
        }
        assert!(a.user.contains("add reagent A to beaker"));
        assert_eq!(a.request("grounder/ground").hash(), build_prompt(&c).request("grounder/ground").hash());
    }

    #[test]
    fn prediction_section_is_optional() {
        let c = ctx();
        let without = build_prompt(&c);
        let mut with = c.clone();
        with.predicted = Some(vec![c.observation.state.clone(); 8]);
        let p = build_prompt(&with);
        assert_eq!(p.attachments.len(), 2);
        assert_eq!(p.attachments[0], without.attachments[0]);
        assert_eq!(p.system, without.system);
        assert!(p.attachments[1].body.contains("horizon 8 steps"));
    }
}
