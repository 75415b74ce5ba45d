//! The rule engine's corrector: one edit per offending step, then a merge of
//! missing canonical steps when the goal is left unmet.

use std::collections::{BTreeMap, BTreeSet};

use super::prompts::objective_task;
use crate::plan_ir::{display_name, parse_instruction, parse_plan, Atom, Rule, Subtask, Verb, Violation, WorldSchema};
use crate::simulator::symbolic_execute;
use crate::tasks::{self, BALANCE, CRYSTALLIZATION_STATION, SHAKER};

enum Fix {
    Delete,
    InsertBefore(String),
    Hoist(usize),
}

fn numbered(steps: &[String]) -> String {
    steps.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect::<Vec<_>>().join("\n")
}

fn is_move_to(step: &Subtask, station: &str, theme: Option<&str>) -> bool {
    matches!(step.verb, Some(Verb::Move) | Some(Verb::Place))
        && step.arg(crate::plan_ir::Role::Destination) == Some(station)
        && theme.is_none_or(|t| step.arg(crate::plan_ir::Role::Theme) == Some(t))
}

/// Picks the edit for the step at `pos` (0-based) given its violations.
fn choose(steps: &[Subtask], pos: usize, vs: &[&Violation]) -> Fix {
    if vs.iter().any(|v| matches!(v.rule, Rule::DuplicateStep | Rule::RedundantPostcondition | Rule::AvoidObject)) {
        return Fix::Delete;
    }
    let v = vs[0];
    let subject = v.subject.as_deref();
    let later = |station: &str, theme: Option<&str>| {
        (pos + 1..steps.len()).find(|&j| is_move_to(&steps[j], station, theme))
    };
    match v.rule {
        Rule::Holding => match subject {
            Some(s) => Fix::InsertBefore(format!("pick up {}", display_name(s))),
            None => Fix::Delete,
        },
        Rule::HandFree => match subject {
            Some(h) => Fix::InsertBefore(format!("place {}", display_name(h))),
            None => Fix::Delete,
        },
        Rule::StationOccupied => {
            let st = subject.unwrap_or(CRYSTALLIZATION_STATION);
            later(st, None).map(Fix::Hoist).unwrap_or(Fix::Delete)
        }
        rule @ (Rule::AtBalance | Rule::AtShaker) => {
            let st = if rule == Rule::AtBalance { BALANCE } else { SHAKER };
            match subject {
                Some(t) => later(st, Some(t))
                    .map(Fix::Hoist)
                    .unwrap_or_else(|| Fix::InsertBefore(format!("move {} to {}", display_name(t), display_name(st)))),
                None => Fix::Delete,
            }
        }
        _ => Fix::Delete,
    }
}

/// Longest-common-subsequence merge: keeps every step of `current` and
/// inserts the steps of `canonical` it lacks at their aligned positions.
fn lcs_merge(current: &[(String, String)], canonical: &[(String, String)]) -> Vec<String> {
    let (n, m) = (current.len(), canonical.len());
    let mut t = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            t[i][j] = if current[i].0 == canonical[j].0 { t[i + 1][j + 1] + 1 } else { t[i + 1][j].max(t[i][j + 1]) };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < n || j < m {
        if i < n && j < m && current[i].0 == canonical[j].0 {
            out.push(current[i].1.clone());
            i += 1;
            j += 1;
        } else if j < m && (i == n || t[i][j + 1] > t[i + 1][j]) {
            out.push(canonical[j].1.clone());
            j += 1;
        } else {
            out.push(current[i].1.clone());
            i += 1;
        }
    }
    out
}

fn keyed(texts: &[String]) -> Vec<(String, String)> {
    texts.iter().map(|t| (parse_instruction(1, t, None).normalized_text(), t.clone())).collect()
}

fn goal_met(texts: &[String], schema: &WorldSchema, goal: &[Atom]) -> bool {
    let Ok(plan) = parse_plan(&numbered(texts), Some(schema)) else { return goal.is_empty() };
    match symbolic_execute(&plan, schema, &[]) {
        Ok((state, _)) => goal.iter().all(|a| state.holds(a, schema)),
        Err(_) => false,
    }
}

/// Rule-engine answer to a correction request. Returns a numbered plan.
pub fn rule_correct(
    objective: &str,
    schema: &WorldSchema,
    plan_text: &str,
    violations: &[Violation],
    unmet: &[Atom],
    avoid: &BTreeSet<String>,
) -> String {
    let task = objective_task(objective).map(|(k, b)| (k, tasks::resolve_bindings(k, &b, schema)));
    let canonical = task.as_ref().and_then(|(k, b)| tasks::canonical_plan(*k, b, schema, avoid).ok());
    let Ok(plan) = parse_plan(plan_text, Some(schema)) else {
        return canonical.map(|c| numbered(&c)).unwrap_or_default();
    };
    let original: Vec<String> = plan.steps.iter().map(|s| s.text.clone()).collect();

    let mut by_step: BTreeMap<usize, Vec<&Violation>> = BTreeMap::new();
    for v in violations {
        by_step.entry(v.step_index).or_default().push(v);
    }
    // Edits run back to front so earlier positions stay valid.
    let mut steps: Vec<Option<String>> = original.iter().cloned().map(Some).collect();
    let mut inserts: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut deleted = false;
    for (&idx, vs) in by_step.iter().rev() {
        let pos = idx.saturating_sub(1);
        if pos >= plan.steps.len() || steps[pos].is_none() {
            continue;
        }
        match choose(&plan.steps, pos, vs) {
            Fix::Delete => {
                steps[pos] = None;
                deleted = true;
            }
            Fix::InsertBefore(text) => inserts.entry(pos).or_default().push(text),
            Fix::Hoist(j) => {
                if let Some(t) = steps[j].take() {
                    inserts.entry(pos).or_default().push(t);
                }
            }
        }
    }
    let mut fixed = Vec::new();
    for (pos, s) in steps.into_iter().enumerate() {
        if let Some(ins) = inserts.remove(&pos) {
            fixed.extend(ins);
        }
        fixed.extend(s);
    }

    if let (Some((kind, b)), Some(canon)) = (&task, &canonical) {
        let goal = tasks::goal_atoms(*kind, b);
        if !unmet.is_empty() || (deleted && !goal_met(&fixed, schema, &goal)) {
            let merged = lcs_merge(&keyed(&fixed), &keyed(canon));
            fixed = if merged == original { canon.clone() } else { merged };
        }
    }
    numbered(&fixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan_ir::full_pack;
    use crate::plan_ir::TaskKind;
    use crate::simulator::schema_for;
    use crate::tasks::TaskSpec;

    fn violations(text: &str, schema: &WorldSchema) -> Vec<Violation> {
        let plan = parse_plan(text, Some(schema)).unwrap();
        symbolic_execute(&plan, schema, &full_pack()).unwrap().1
    }

    #[test]
    fn duplicate_is_deleted() {
        let schema = schema_for(&TaskSpec::variant(TaskKind::PickPlace, 0)).unwrap();
        let text = "1. pick up cuboid\n2. pick up cuboid\n3. place cuboid in beaker";
        let v = violations(text, &schema);
        let out = rule_correct("", &schema, text, &v, &[], &BTreeSet::new());
        assert_eq!(out, "1. pick up cuboid\n2. place cuboid in beaker");
        assert!(violations(&out, &schema).is_empty());
    }

    #[test]
    fn weigh_hoists_the_later_move() {
        let schema = schema_for(&TaskSpec::variant(TaskKind::Weigh, 0)).unwrap();
        let text = "1. weigh beaker\n2. move beaker to balance";
        let out = rule_correct("", &schema, text, &violations(text, &schema), &[], &BTreeSet::new());
        assert_eq!(out, "1. move beaker to balance\n2. weigh beaker");
    }

    #[test]
    fn missing_steps_are_merged_back() {
        let spec = TaskSpec::variant(TaskKind::Mix, 0);
        let schema = schema_for(&spec).unwrap();
        let (kind, b) = (TaskKind::Mix, tasks::resolve_bindings(TaskKind::Mix, &Default::default(), &schema));
        let canon = tasks::canonical_plan(kind, &b, &schema, &BTreeSet::new()).unwrap();
        let partial = numbered(&canon[1..]);
        let objective = tasks::objective_text(kind, &b);
        let out = rule_correct(&objective, &schema, &partial, &[], &tasks::goal_atoms(kind, &b), &BTreeSet::new());
        assert_eq!(out, numbered(&canon));
    }

    #[test]
    fn lcs_merge_keeps_order() {
        let k = |v: &[&str]| v.iter().map(|s| (s.to_string(), s.to_string())).collect::<Vec<_>>();
        assert_eq!(lcs_merge(&k(&["b", "x"]), &k(&["a", "b", "c"])), vec!["a", "b", "x", "c"]);
    }
}
