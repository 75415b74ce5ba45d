//! Symbolic plan representation shared by every other module.

mod constraint;
mod diff;
mod goal;
pub mod instrument;
mod parse;
mod plan;
mod schema;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use constraint::{
    base_pack, causal_pack, full_pack, load_pack, Constraint, ConstraintKind, ErrorCategory, Rule,
    Violation,
};
pub use diff::{apply_edits, diff_plans, Edit};
pub use goal::{Goal, TaskKind};
pub use parse::{
    display_name, normalize_id, parse_instruction, parse_plan, render_plan, render_plan_audited,
    synonyms, SynonymTable,
};
pub use plan::{Arg, AuditEntry, Plan, PrerequisiteSet, Role, Subtask, Verb};
pub use schema::{
    Atom, Entity, LiquidInfo, ObjectClass, ObjectInfo, SymState, WorldSchema, HAND, PREDICATES,
    TABLE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("plan text contains no numbered steps")]
    EmptyPlan,
    #[error("line {line}: step number without an instruction")]
    MalformedLine { line: usize },
    #[error("goal text is empty")]
    EmptyGoal,
    #[error("goal '{0}' matches a template pool and cannot be freeform")]
    FreeformMatchesPool(String),
    #[error("unknown task kind '{0}'")]
    UnknownTask(String),
    #[error("unknown verb '{0}'")]
    UnknownVerb(String),
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("malformed condition atom '{0}'")]
    BadAtom(String),
    #[error("malformed violation line '{0}'")]
    BadViolation(String),
    #[error("bad plan footer: {0}")]
    Footer(String),
    #[error("bad data file: {0}")]
    Pack(String),
}

#[derive(Serialize, Deserialize)]
struct Footer {
    goal: Option<Goal>,
    core_objective: String,
    prerequisites: PrerequisiteSet,
    revision: u32,
    audit: Vec<AuditEntry>,
}

/// Plan file: the numbered list, a blank line, then one JSON footer line.
pub fn write_plan_file(plan: &Plan) -> String {
    let footer = Footer {
        goal: plan.goal.clone(),
        core_objective: plan.core_objective.clone(),
        prerequisites: plan.prerequisites.clone(),
        revision: plan.revision,
        audit: plan.audit.clone(),
    };
    let body = render_plan(plan);
    let footer = serde_json::to_string(&footer).expect("footer serializes");
    format!("{body}\n\n{footer}\n")
}

pub fn read_plan_file(text: &str, schema: Option<&WorldSchema>) -> Result<Plan, PlanError> {
    let footer_line = text
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .filter(|l| l.starts_with('{'))
        .ok_or_else(|| PlanError::Footer("missing JSON footer".into()))?;
    let footer: Footer =
        serde_json::from_str(footer_line).map_err(|e| PlanError::Footer(e.to_string()))?;
    let parsed = match parse_plan(text, schema) {
        Ok(p) => p,
        Err(PlanError::EmptyPlan) => Plan::default(),
        Err(e) => return Err(e),
    };
    Ok(Plan {
        goal: footer.goal,
        core_objective: footer.core_objective,
        prerequisites: footer.prerequisites,
        steps: parsed.steps,
        revision: footer.revision,
        audit: footer.audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_file_round_trip() {
        let mut plan = parse_plan("1. pick up cuboid\n2. place cuboid in beaker", None).unwrap();
        plan.goal = Some(Goal::new("Move cuboid to beaker.").unwrap());
        plan.core_objective = "Basic object relocation.".into();
        plan.prerequisites.required_objects.insert("cuboid".into());
        plan.prerequisites.required_conditions.insert("hand-empty".parse().unwrap());
        plan.revision = 2;
        plan.audit.clear();
        plan.record("phi", "converged");
        let text = write_plan_file(&plan);
        assert_eq!(read_plan_file(&text, None).unwrap(), plan);
    }

    #[test]
    fn footer_is_required() {
        assert!(matches!(read_plan_file("1. pick up cuboid\n", None), Err(PlanError::Footer(_))));
    }
}
