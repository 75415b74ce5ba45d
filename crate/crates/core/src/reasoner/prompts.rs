//! Stage requests and the rule engine's answers to them.

use std::collections::BTreeSet;

use super::fix::rule_correct;
use crate::backends::protocol::{parse_sections, render_sections};
use crate::backends::{BackendError, CompletionRequest};
use crate::plan_ir::{Atom, PrerequisiteSet, Violation, WorldSchema};
use crate::tasks::{self, Bindings};
use crate::plan_ir::TaskKind;

pub const PLANNER_SYSTEM: &str = "\
You are the task planner of a laboratory robot. You work in symbolic space only:
objects, liquids, stations and the operations pick, place, move, pour, stir,
add, wait, weigh and shake. Answer in the exact format the request asks for.";

pub const UNSURE: &str = "UNSURE:";
pub const INFEASIBLE: &str = "INFEASIBLE:";

fn req(stage: &str, user: String) -> CompletionRequest {
    let mut r = CompletionRequest::new(format!("reasoner/{stage}"), PLANNER_SYSTEM, user);
    r.max_tokens = 512;
    r
}

fn scene(schema: &WorldSchema) -> String {
    serde_json::to_string(schema).expect("schema serializes")
}

pub fn interpret_request(goal: &str) -> CompletionRequest {
    req(
        "interpret",
        render_sections(&[
            ("Goal", goal),
            ("Task", "Clarify the goal. Reply with one declarative sentence stating the core objective."),
        ]),
    )
}

pub fn prerequisites_request(objective: &str, schema: &WorldSchema) -> CompletionRequest {
    req(
        "prerequisites",
        render_sections(&[
            ("Objective", objective),
            ("Scene", &scene(schema)),
            (
                "Task",
                "List the objects the objective needs and the conditions that must hold. \
                 Reply with two lines: `objects: a, b` and `conditions: atom; atom`.",
            ),
        ]),
    )
}

pub fn render_prerequisites(p: &PrerequisiteSet) -> String {
    let objs: Vec<&str> = p.required_objects.iter().map(String::as_str).collect();
    let conds: Vec<String> = p.required_conditions.iter().map(Atom::to_string).collect();
    format!("objects: {}\nconditions: {}", objs.join(", "), conds.join("; "))
}

pub fn parse_prerequisites(text: &str) -> PrerequisiteSet {
    let mut p = PrerequisiteSet::default();
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix("objects:") {
            p.required_objects =
                rest.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect();
        } else if let Some(rest) = line.trim().strip_prefix("conditions:") {
            p.required_conditions = rest.split(';').filter_map(|a| a.trim().parse().ok()).collect();
        }
    }
    p
}

pub fn decompose_request(
    stage: &str,
    objective: &str,
    prerequisites: Option<&PrerequisiteSet>,
    schema: &WorldSchema,
) -> CompletionRequest {
    let pre = prerequisites.map(render_prerequisites);
    let mut sections: Vec<(&str, &str)> = vec![("Objective", objective)];
    if let Some(p) = &pre {
        sections.push(("Prerequisites", p));
    }
    let scene = scene(schema);
    sections.push(("Scene", &scene));
    sections.push((
        "Task",
        "Decompose the objective into basic operations. Reply with a numbered list, one operation per line.",
    ));
    req(stage, render_sections(&sections))
}

pub fn correct_request(
    objective: &str,
    schema: &WorldSchema,
    plan_text: &str,
    violations: &[Violation],
    unmet: &[Atom],
    avoid: &BTreeSet<String>,
) -> CompletionRequest {
    let v: Vec<String> = violations.iter().map(Violation::to_string).collect();
    let u: Vec<String> = unmet.iter().map(Atom::to_string).collect();
    let a: Vec<&str> = avoid.iter().map(String::as_str).collect();
    req(
        "correct",
        render_sections(&[
            ("Objective", objective),
            ("Scene", &scene(schema)),
            ("Plan", plan_text),
            ("Violations", &v.join("\n")),
            ("Unmet goal", &u.join("; ")),
            ("Avoid", &a.join(", ")),
            ("Task", "Revise the plan so every step is valid and the objective holds. Reply with the full numbered list."),
        ]),
    )
}

pub fn replan_request(objective: &str, schema: &WorldSchema, avoid: &BTreeSet<String>) -> CompletionRequest {
    let a: Vec<&str> = avoid.iter().map(String::as_str).collect();
    req(
        "replan",
        render_sections(&[
            ("Objective", objective),
            ("Scene", &scene(schema)),
            ("Avoid", &a.join(", ")),
            (
                "Task",
                "Plan again from the current scene without using the avoided objects. Reply with a numbered \
                 list, or a single line starting with INFEASIBLE: when no plan exists.",
            ),
        ]),
    )
}

/// Task kind and bindings behind an objective, falling back to the goal pools
/// when the objective is raw goal text.
pub fn objective_task(objective: &str) -> Option<(TaskKind, Bindings)> {
    tasks::parse_objective(objective).or_else(|| tasks::classify_goal(objective).map(|m| (m.kind, m.bindings)))
}

fn numbered(steps: &[String]) -> String {
    steps.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect::<Vec<_>>().join("\n")
}

/// Splits freeform text into instruction fragments that start with a known verb.
fn freeform_steps(text: &str) -> Vec<String> {
    text.split(['.', ';', '\n'])
        .flat_map(|s| s.split(" then "))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .filter(|s| crate::plan_ir::parse_instruction(1, s, None).verb.is_some())
        .map(|s| s.to_ascii_lowercase())
        .collect()
}

fn parse_scene(sections: &std::collections::BTreeMap<String, String>) -> Result<WorldSchema, BackendError> {
    let s = sections.get("Scene").ok_or_else(|| BackendError::Backend("request lacks a Scene section".into()))?;
    serde_json::from_str(s).map_err(|e| BackendError::Backend(format!("bad scene: {e}")))
}

fn avoid_set(sections: &std::collections::BTreeMap<String, String>) -> BTreeSet<String> {
    sections
        .get("Avoid")
        .map(|a| a.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect())
        .unwrap_or_default()
}

pub(crate) fn rule_respond(request: &CompletionRequest) -> Result<String, BackendError> {
    let s = parse_sections(&request.user);
    let get = |k: &str| s.get(k).map(String::as_str).unwrap_or("").trim().to_string();
    match request.stage() {
        "interpret" => {
            let goal = get("Goal");
            Ok(match tasks::classify_goal(&goal) {
                Some(m) => tasks::objective_text(m.kind, &m.bindings),
                None => format!("{UNSURE} {goal}"),
            })
        }
        "prerequisites" => {
            let schema = parse_scene(&s)?;
            let p = match objective_task(&get("Objective")) {
                Some((kind, b)) => tasks::prerequisites(kind, &tasks::resolve_bindings(kind, &b, &schema), &schema),
                None => PrerequisiteSet::default(),
            };
            Ok(render_prerequisites(&p))
        }
        "decompose" | "direct" => {
            let schema = parse_scene(&s)?;
            let objective = get("Objective");
            match objective_task(&objective) {
                Some((kind, b)) => {
                    let b = tasks::resolve_bindings(kind, &b, &schema);
                    tasks::canonical_plan(kind, &b, &schema, &BTreeSet::new())
                        .map(|steps| numbered(&steps))
                        .map_err(|e| BackendError::Backend(e.to_string()))
                }
                None => Ok(numbered(&freeform_steps(objective.trim_start_matches(UNSURE)))),
            }
        }
        "correct" => {
            let schema = parse_scene(&s)?;
            let violations: Vec<Violation> = get("Violations").lines().filter_map(|l| l.parse().ok()).collect();
            let unmet: Vec<Atom> = get("Unmet goal").split(';').filter_map(|a| a.trim().parse().ok()).collect();
            Ok(rule_correct(&get("Objective"), &schema, &get("Plan"), &violations, &unmet, &avoid_set(&s)))
        }
        "replan" => {
            let schema = parse_scene(&s)?;
            let Some((kind, b)) = objective_task(&get("Objective")) else {
                return Ok(format!("{INFEASIBLE} objective is not a known task"));
            };
            let b = tasks::resolve_bindings(kind, &b, &schema);
            Ok(match tasks::canonical_plan(kind, &b, &schema, &avoid_set(&s)) {
                Ok(steps) => numbered(&steps),
                Err(e) => format!("{INFEASIBLE} {}", e.0),
            })
        }
        other => Err(BackendError::Backend(format!("rule planner has no stage '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prerequisites_round_trip() {
        let mut p = PrerequisiteSet::default();
        p.required_objects.insert("beaker".into());
        p.required_objects.insert("cup_a".into());
        p.required_conditions.insert(Atom::new("contains", &["cup_a", "reagent_a"]));
        p.required_conditions.insert(Atom::new("hand-empty", &[]));
        assert_eq!(parse_prerequisites(&render_prerequisites(&p)), p);
    }

    #[test]
    fn freeform_fragments() {
        assert_eq!(freeform_steps("Stir liquid."), vec!["stir liquid".to_string()]);
        assert!(freeform_steps("gibberish words").is_empty());
    }
}
