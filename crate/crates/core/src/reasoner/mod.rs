//! Task-level planner: staged goal decomposition in symbolic space and the
//! validate/correct loop that drives a plan to a fixed point.

mod fix;
mod prompts;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fix::rule_correct;
pub use prompts::{
    correct_request, decompose_request, interpret_request, objective_task, parse_prerequisites,
    prerequisites_request, render_prerequisites, replan_request, INFEASIBLE, PLANNER_SYSTEM, UNSURE,
};
pub(crate) use prompts::rule_respond;

use crate::backends::{BackendError, BackendHandle};
use crate::plan_ir::{
    base_pack, diff_plans, full_pack, parse_plan, render_plan, Atom, Constraint, ErrorCategory, Goal, Plan,
    PlanError, PrerequisiteSet, Rule, Violation, WorldSchema,
};
use crate::simulator::{symbolic_execute, SimError};
use crate::tasks;

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("correction stalled at revision {revision}: {violations} violations repeat")]
    CorrectionStalled { revision: u32, violations: usize },
    #[error("invalid reasoner config: {0}")]
    InvalidConfig(String),
}

/// Which planning stages run. Stage 4 is the Φ loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CotStages {
    pub interpret: bool,
    pub prerequisites: bool,
    pub decompose: bool,
    pub validate: bool,
}

impl Default for CotStages {
    fn default() -> Self {
        CotStages { interpret: true, prerequisites: true, decompose: true, validate: true }
    }
}

impl CotStages {
    pub fn none() -> Self {
        CotStages { interpret: false, prerequisites: false, decompose: false, validate: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerConfig {
    pub max_phi_iters: usize,
    pub stages: CotStages,
    pub constraint_pack: Vec<Constraint>,
    /// Replan around objects that failed during execution.
    pub fallback: bool,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig { max_phi_iters: 5, stages: CotStages::default(), constraint_pack: full_pack(), fallback: false }
    }
}

impl ReasonerConfig {
    pub fn validate(&self) -> Result<(), ReasonerError> {
        if self.max_phi_iters == 0 {
            return Err(ReasonerError::InvalidConfig("max_phi_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// Rules the checker enforces. Causal and temporal rules come in only with
    /// derived prerequisites; discovered constraints are always added.
    pub fn active_pack(&self, discovered: &[Constraint]) -> Vec<Constraint> {
        let mut pack: Vec<Constraint> = if self.stages.prerequisites {
            self.constraint_pack.clone()
        } else {
            let base: BTreeSet<Rule> = base_pack().into_iter().map(|c| c.rule).collect();
            self.constraint_pack.iter().filter(|c| base.contains(&c.rule)).cloned().collect()
        };
        for c in discovered {
            if !pack.contains(c) {
                pack.push(c.clone());
            }
        }
        pack
    }
}

/// Stage-1 output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub text: String,
    /// Set when the backend could not map the goal to a known task.
    pub low_confidence: bool,
}

pub fn interpret(goal: &Goal, backend: &BackendHandle) -> Result<Objective, ReasonerError> {
    let answer = backend.complete(&interpret_request(goal.text()))?;
    let answer = answer.trim();
    Ok(match answer.strip_prefix(UNSURE) {
        Some(rest) => Objective { text: rest.trim().to_string(), low_confidence: true },
        None => Objective { text: answer.to_string(), low_confidence: false },
    })
}

pub fn derive_prerequisites(
    objective: &str,
    schema: &WorldSchema,
    backend: &BackendHandle,
) -> Result<PrerequisiteSet, ReasonerError> {
    Ok(parse_prerequisites(&backend.complete(&prerequisites_request(objective, schema))?))
}

/// Stage 3. With `staged` false the same request goes out under the direct tag,
/// which is what an unstructured single-shot planner sees.
pub fn decompose(
    objective: &str,
    prerequisites: Option<&PrerequisiteSet>,
    schema: &WorldSchema,
    backend: &BackendHandle,
    staged: bool,
) -> Result<Plan, ReasonerError> {
    let stage = if staged { "decompose" } else { "direct" };
    let answer = backend.complete(&decompose_request(stage, objective, prerequisites, schema))?;
    let mut plan = parse_plan(&answer, Some(schema))?;
    plan.core_objective = objective.to_string();
    plan.prerequisites = prerequisites.cloned().unwrap_or_default();
    plan.revision = 0;
    Ok(plan)
}

pub fn check_constraints(plan: &Plan, schema: &WorldSchema, pack: &[Constraint]) -> Result<Vec<Violation>, ReasonerError> {
    Ok(symbolic_execute(plan, schema, pack)?.1)
}

/// Goal atoms still false after running the plan under `pack`. Goal conditions
/// are known only through derived prerequisites, so a plan without them has
/// nothing to check.
pub fn unmet_goal(plan: &Plan, schema: &WorldSchema, pack: &[Constraint]) -> Result<Vec<Atom>, ReasonerError> {
    if plan.prerequisites.required_conditions.is_empty() {
        return Ok(Vec::new());
    }
    let Some((kind, b)) = objective_task(&plan.core_objective) else { return Ok(Vec::new()) };
    let b = tasks::resolve_bindings(kind, &b, schema);
    let (state, _) = symbolic_execute(plan, schema, pack)?;
    Ok(tasks::goal_atoms(kind, &b).into_iter().filter(|a| !state.holds(a, schema)).collect())
}

fn avoided(pack: &[Constraint]) -> BTreeSet<String> {
    pack.iter()
        .filter(|c| c.rule == Rule::AvoidObject)
        .flat_map(|c| c.literal_args().map(str::to_string))
        .collect()
}

fn violation_digest(vs: &[Violation]) -> String {
    vs.iter().map(Violation::to_string).collect::<Vec<_>>().join("\n")
}

/// One Φ pass: check, and ask for a correction when something is wrong.
pub fn validate_and_correct(
    plan: &Plan,
    schema: &WorldSchema,
    pack: &[Constraint],
    backend: &BackendHandle,
) -> Result<Plan, ReasonerError> {
    let violations = check_constraints(plan, schema, pack)?;
    let unmet = unmet_goal(plan, schema, pack)?;
    let digest = violation_digest(&violations);
    let last = plan.audit.iter().rev().find(|e| e.event == "violations").map(|e| e.detail.as_str());
    if !violations.is_empty() && last == Some(digest.as_str()) {
        return Err(ReasonerError::CorrectionStalled { revision: plan.revision, violations: violations.len() });
    }
    let mut next = plan.clone();
    next.record("violations", digest);
    if !violations.is_empty() || !unmet.is_empty() {
        let req = correct_request(&plan.core_objective, schema, &render_plan(plan), &violations, &unmet, &avoided(pack));
        let revised = parse_plan(&backend.complete(&req)?, Some(schema))?;
        next.steps = revised.steps;
    }
    next.revision = plan.revision + 1;
    let text = render_plan(&next);
    next.record("plan", text);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub plan: Plan,
    /// A pass left the plan text unchanged.
    pub converged: bool,
    /// Φ passes run.
    pub iterations: usize,
    /// Violations of the final plan under the active pack.
    pub violations: Vec<Violation>,
    pub stalled: bool,
}

/// Runs Φ until a textual fixed point or `max_iters` passes.
pub fn refine(
    plan: Plan,
    schema: &WorldSchema,
    pack: &[Constraint],
    max_iters: usize,
    backend: &BackendHandle,
) -> Result<RefineOutcome, ReasonerError> {
    let mut cur = plan;
    let mut converged = false;
    let mut stalled = false;
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        let next = match validate_and_correct(&cur, schema, pack, backend) {
            Ok(p) => p,
            Err(ReasonerError::CorrectionStalled { .. }) => {
                stalled = true;
                break;
            }
            Err(e) => return Err(e),
        };
        iterations += 1;
        let fixed = diff_plans(&cur, &next).is_empty();
        cur = next;
        if fixed {
            converged = true;
            break;
        }
    }
    let violations = check_constraints(&cur, schema, pack)?;
    Ok(RefineOutcome { plan: cur, converged, iterations, violations, stalled })
}

/// Full planning pipeline from goal text to a checked plan.
pub fn refine_loop(
    goal: &Goal,
    schema: &WorldSchema,
    config: &ReasonerConfig,
    backend: &BackendHandle,
) -> Result<RefineOutcome, ReasonerError> {
    config.validate()?;
    let st = config.stages;
    let objective = if st.interpret { interpret(goal, backend)?.text } else { goal.text().to_string() };
    let prerequisites = if st.prerequisites { Some(derive_prerequisites(&objective, schema, backend)?) } else { None };
    let mut plan = decompose(&objective, prerequisites.as_ref(), schema, backend, st.decompose)?;
    plan.goal = Some(goal.clone());
    let pack = config.active_pack(&[]);
    if st.validate {
        refine(plan, schema, &pack, config.max_phi_iters, backend)
    } else {
        let violations = check_constraints(&plan, schema, &pack).unwrap_or_default();
        Ok(RefineOutcome { plan, converged: false, iterations: 0, violations, stalled: false })
    }
}

/// Single-shot planning without staged reasoning or validation.
pub fn direct_plan(goal: &Goal, schema: &WorldSchema, backend: &BackendHandle) -> Result<Plan, ReasonerError> {
    let mut plan = decompose(goal.text(), None, schema, backend, false)?;
    plan.goal = Some(goal.clone());
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementState {
    pub plan: Plan,
    pub discovered_constraints: Vec<Constraint>,
    pub infeasible: bool,
    pub rounds: usize,
}

impl RefinementState {
    pub fn new(plan: Plan) -> Self {
        RefinementState { plan, discovered_constraints: Vec::new(), infeasible: false, rounds: 0 }
    }
}

/// Constraint telling the planner to stop using `id`.
pub fn avoid_constraint(id: &str) -> Constraint {
    let mut c = Constraint::new(crate::plan_ir::ConstraintKind::Physical, Rule::AvoidObject, &[], &[id]);
    c.description = format!("{id} failed during execution");
    c
}

/// Replans under the discovered constraints plus `new_constraint`. Known
/// constraints are ignored, so rounds never exceed the number of distinct
/// constraints.
pub fn fallback_refine(
    mut state: RefinementState,
    new_constraint: Constraint,
    schema: &WorldSchema,
    config: &ReasonerConfig,
    backend: &BackendHandle,
) -> RefinementState {
    if state.discovered_constraints.contains(&new_constraint) {
        return state;
    }
    state.discovered_constraints.push(new_constraint.clone());
    state.rounds += 1;
    state.plan.record("constraint", new_constraint.key());
    let pack = config.active_pack(&state.discovered_constraints);
    let answer = match backend.complete(&replan_request(&state.plan.core_objective, schema, &avoided(&pack))) {
        Ok(a) => a,
        Err(e) => {
            state.plan.record("infeasible", e.to_string());
            state.infeasible = true;
            return state;
        }
    };
    if let Some(reason) = answer.trim().strip_prefix(INFEASIBLE) {
        state.plan.record("infeasible", reason.trim());
        state.infeasible = true;
        return state;
    }
    let mut plan = state.plan.clone();
    match parse_plan(&answer, Some(schema)) {
        Ok(p) => plan.steps = p.steps,
        Err(e) => {
            state.plan.record("infeasible", e.to_string());
            state.infeasible = true;
            return state;
        }
    }
    plan.revision += 1;
    match refine(plan, schema, &pack, config.max_phi_iters, backend) {
        Ok(out) => {
            state.infeasible = out.violations.iter().any(|v| v.rule == Rule::AvoidObject);
            state.plan = out.plan;
        }
        Err(e) => {
            state.plan.record("infeasible", e.to_string());
            state.infeasible = true;
        }
    }
    state
}

/// E1/E2 findings under every bundled rule. Counts are distinct offending steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorAudit {
    pub e1: usize,
    pub e2: usize,
    pub violations: Vec<Violation>,
    /// Set when a step names something missing from the scene; counted as E2.
    pub unresolved: Option<String>,
}

impl ErrorAudit {
    pub fn has_e1(&self) -> bool {
        self.e1 > 0
    }

    pub fn has_e2(&self) -> bool {
        self.e2 > 0
    }
}

pub fn audit_errors(plan: &Plan, schema: &WorldSchema) -> ErrorAudit {
    match symbolic_execute(plan, schema, &full_pack()) {
        Ok((_, violations)) => {
            let steps = |cat: ErrorCategory| {
                violations.iter().filter(|v| v.category == cat).map(|v| v.step_index).collect::<BTreeSet<_>>().len()
            };
            ErrorAudit { e1: steps(ErrorCategory::E1Redundant), e2: steps(ErrorCategory::E2Logical), violations, unresolved: None }
        }
        Err(e) => ErrorAudit { e1: 0, e2: 1, violations: Vec::new(), unresolved: Some(e.to_string()) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan_ir::TaskKind;
    use crate::simulator::schema_for;
    use crate::tasks::TaskSpec;

    fn schema(kind: TaskKind) -> WorldSchema {
        schema_for(&TaskSpec::variant(kind, 0)).unwrap()
    }

    #[test]
    fn interpret_template_and_gibberish() {
        let b = BackendHandle::rule();
        let o = interpret(&Goal::new("Conduct crystallization.").unwrap(), &b).unwrap();
        assert!(o.text.starts_with("Crystallization cultivation experiment."));
        assert!(!o.low_confidence);
        let o = interpret(&Goal::new("blorp zzyx").unwrap(), &b).unwrap();
        assert_eq!(o.text, "blorp zzyx");
        assert!(o.low_confidence);
    }

    #[test]
    fn pick_place_decomposition() {
        let s = schema(TaskKind::PickPlace);
        let out = refine_loop(&Goal::new("Move cuboid to beaker.").unwrap(), &s, &ReasonerConfig::default(), &BackendHandle::rule());
        let out = out.unwrap();
        assert_eq!(out.plan.step_texts(), vec!["pick up cuboid", "place cuboid in beaker"]);
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn fig10_cases() {
        let s = schema(TaskKind::Crystallize);
        let p = |t: &str| parse_plan(t, Some(&s)).unwrap();
        let ok = "1. pick up cup\n2. pour solution into petri dish\n3. place cup next to petri dish\n4. pick up cuboid\n5. place cuboid in petri dish\n6. move petri dish to crystallization station\n7. wait at crystallization station";
        let a = audit_errors(&p(ok), &s);
        assert_eq!((a.e1, a.e2), (0, 0), "{:?}", a.violations);
        let dup = "1. pick up cuboid\n2. pick up cuboid";
        let a = audit_errors(&p(dup), &s);
        assert_eq!((a.e1, a.e2), (1, 0));
        let pour = "1. pick up cuboid\n2. pour contents from cuboid";
        let a = audit_errors(&p(pour), &s);
        assert_eq!((a.e1, a.e2), (0, 1), "{:?}", a.violations);
    }

    #[test]
    fn correction_removes_duplicate() {
        let s = schema(TaskKind::PickPlace);
        let mut plan = parse_plan("1. pick up cuboid\n2. pick up cuboid\n3. place cuboid in beaker", Some(&s)).unwrap();
        plan.revision = 3;
        let next = validate_and_correct(&plan, &s, &full_pack(), &BackendHandle::rule()).unwrap();
        assert_eq!(next.revision, 4);
        assert!(check_constraints(&next, &s, &full_pack()).unwrap().is_empty());
        let again = validate_and_correct(&next, &s, &full_pack(), &BackendHandle::rule()).unwrap();
        assert!(diff_plans(&next, &again).is_empty());
        assert_eq!(again.revision, 5);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let s = schema(TaskKind::Weigh);
        let plan = parse_plan("1. weigh beaker\n2. move beaker to balance", Some(&s)).unwrap();
        let out = refine(plan, &s, &full_pack(), 1, &BackendHandle::rule()).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn zero_iterations_rejected() {
        let cfg = ReasonerConfig { max_phi_iters: 0, ..ReasonerConfig::default() };
        assert!(matches!(cfg.validate(), Err(ReasonerError::InvalidConfig(_))));
    }

    #[test]
    fn stage_two_gates_the_causal_rules() {
        let mut cfg = ReasonerConfig::default();
        assert_eq!(cfg.active_pack(&[]).len(), full_pack().len());
        cfg.stages.prerequisites = false;
        assert_eq!(cfg.active_pack(&[]).len(), base_pack().len());
        assert_eq!(cfg.active_pack(&[avoid_constraint("stick")]).len(), base_pack().len() + 1);
    }

    #[test]
    fn contradicting_constraint_is_infeasible() {
        let s = schema(TaskKind::PickPlace);
        let cfg = ReasonerConfig::default();
        let b = BackendHandle::rule();
        let out = refine_loop(&Goal::new("Move cuboid to beaker.").unwrap(), &s, &cfg, &b).unwrap();
        let st = fallback_refine(RefinementState::new(out.plan), avoid_constraint("cuboid"), &s, &cfg, &b);
        assert!(st.infeasible);
        assert_eq!(st.rounds, 1);
        let again = fallback_refine(st.clone(), avoid_constraint("cuboid"), &s, &cfg, &b);
        assert_eq!(again.rounds, 1);
    }
}
