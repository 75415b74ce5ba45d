//! Task catalog: descriptions, prompt pools, binding variants, canonical plans
//! and goal conditions for the seven lab tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::plan_ir::{
    display_name, normalize_id, Atom, ObjectClass, PrerequisiteSet, TaskKind, WorldSchema,
};

pub type Bindings = BTreeMap<String, String>;

pub const BALANCE: &str = "balance";
pub const SHAKER: &str = "shaker";
pub const CRYSTALLIZATION_STATION: &str = "crystallization_station";
pub const STATIONS: [&str; 3] = [BALANCE, SHAKER, CRYSTALLIZATION_STATION];

#[derive(Debug, Clone, Deserialize)]
pub struct TaskEntry {
    pub kind: TaskKind,
    pub description: String,
    pub environment: String,
    pub training_count: usize,
    pub pool: Vec<String>,
    pub variants: Vec<Bindings>,
}

#[derive(Debug, Deserialize)]
struct TaskFile {
    version: u32,
    tasks: Vec<TaskEntry>,
}

const TASKS_JSON: &str = include_str!("../data/tasks.json");

fn table() -> &'static TaskFile {
    static TABLE: OnceLock<TaskFile> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(TASKS_JSON).expect("bundled task table parses"))
}

pub fn table_version() -> u32 {
    table().version
}

pub fn entry(kind: TaskKind) -> Option<&'static TaskEntry> {
    table().tasks.iter().find(|t| t.kind == kind)
}

pub fn entries() -> &'static [TaskEntry] {
    &table().tasks
}

/// A concrete task instance: kind plus object/liquid bindings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub bindings: Bindings,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, bindings: &[(&str, &str)]) -> Self {
        TaskSpec {
            kind,
            bindings: bindings.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// The `i`-th binding variant of a task (wrapping).
    pub fn variant(kind: TaskKind, i: usize) -> Self {
        let e = entry(kind).expect("templated task");
        TaskSpec { kind, bindings: e.variants[i % e.variants.len()].clone() }
    }

    pub fn get(&self, role: &str) -> &str {
        self.bindings.get(role).map(String::as_str).unwrap_or("")
    }

    pub fn success_predicate(&self) -> &'static str {
        self.kind.as_str()
    }
}

/// Result of matching goal text against the prompt pools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalMatch {
    pub kind: TaskKind,
    pub template: usize,
    pub bindings: Bindings,
}

fn template_regex_parts(template: &str) -> (Vec<String>, Vec<String>) {
    // Literal segments and slot names, alternating, starting with a literal.
    let mut literals = Vec::new();
    let mut slots = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let close = rest[open..].find('}').map(|c| c + open).unwrap_or(rest.len() - 1);
        literals.push(rest[..open].to_string());
        slots.push(rest[open + 1..close].to_string());
        rest = &rest[close + 1..];
    }
    literals.push(rest.to_string());
    (literals, slots)
}

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase()
}

/// Matches `text` against one template; returns captured slot phrases.
fn match_template(template: &str, text: &str) -> Option<Bindings> {
    let (literals, slots) = template_regex_parts(template);
    let text = fold(text);
    let text = text.trim_end_matches('.');
    let lits: Vec<String> = literals.iter().map(|l| fold(l)).collect();
    let last = lits.len() - 1;
    let lits: Vec<String> = lits
        .into_iter()
        .enumerate()
        .map(|(i, l)| if i == last { l.trim_end_matches('.').to_string() } else { l })
        .collect();
    // Whitespace inside literals is significant only as a separator.
    let mut pos = 0usize;
    let first = lits[0].trim_end();
    if !text[pos..].starts_with(first) {
        return None;
    }
    pos += first.len();
    let mut out = Bindings::new();
    for (i, slot) in slots.iter().enumerate() {
        let lit = lits[i + 1].trim();
        let value_end = if i + 1 == slots.len() && lit.is_empty() {
            text.len()
        } else if lit.is_empty() {
            return None;
        } else {
            let needle = format!(" {lit}");
            let found = if i + 1 == slots.len() {
                text[pos..].rfind(&needle)
            } else {
                text[pos..].find(&needle)
            };
            pos + found?
        };
        let value = text[pos..value_end].trim();
        if value.is_empty() {
            return None;
        }
        out.insert(slot.clone(), normalize_id(value));
        pos = value_end;
        if !lit.is_empty() {
            pos += 1 + lit.len();
        }
    }
    if text[pos..].trim().is_empty() {
        Some(out)
    } else {
        None
    }
}

/// Finds the most specific pool template matching the goal text.
pub fn classify_goal(text: &str) -> Option<GoalMatch> {
    let mut best: Option<(usize, GoalMatch)> = None;
    for e in entries() {
        for (ti, template) in e.pool.iter().enumerate() {
            if let Some(bindings) = match_template(template, text) {
                let (literals, _) = template_regex_parts(template);
                let score: usize = literals.iter().map(|l| l.trim().len()).sum();
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, GoalMatch { kind: e.kind, template: ti, bindings }));
                }
            }
        }
    }
    best.map(|(_, m)| m)
}

/// Fills `template` slots with display names from `bindings`.
pub fn fill_template(template: &str, bindings: &Bindings) -> String {
    let mut out = template.to_string();
    for (k, v) in bindings {
        out = out.replace(&format!("{{{k}}}"), &display_name(v));
    }
    out
}

fn first_container_with_liquid(schema: &WorldSchema) -> Option<String> {
    schema
        .objects
        .iter()
        .find(|o| o.container && schema.initial.has_liquid(&o.id))
        .map(|o| o.id.clone())
}

fn empty_container_prefer_beaker(schema: &WorldSchema, exclude: &[&str]) -> Option<String> {
    let empty = |o: &&crate::plan_ir::ObjectInfo| {
        o.container && !schema.initial.has_liquid(&o.id) && !exclude.contains(&o.id.as_str())
    };
    schema
        .objects_of(ObjectClass::Beaker)
        .find(|o| empty(o))
        .or_else(|| schema.objects.iter().find(|o| empty(o)))
        .map(|o| o.id.clone())
}

/// Completes partial bindings from the scene catalog.
pub fn resolve_bindings(kind: TaskKind, partial: &Bindings, schema: &WorldSchema) -> Bindings {
    let mut b = partial.clone();
    let st = &schema.initial;
    let set = |b: &mut Bindings, k: &str, v: Option<String>| {
        if !b.contains_key(k) {
            if let Some(v) = v {
                b.insert(k.to_string(), v);
            }
        }
    };
    match kind {
        TaskKind::PickPlace => {
            let obj = schema.objects.iter().find(|o| o.graspable && !o.container).map(|o| o.id.clone());
            set(&mut b, "object", obj);
            let dest = schema.objects.iter().find(|o| o.container).map(|o| o.id.clone());
            set(&mut b, "destination", dest);
        }
        TaskKind::Pour => {
            let src = b
                .get("liquid")
                .and_then(|l| st.container_of_liquid(l).map(str::to_string))
                .or_else(|| first_container_with_liquid(schema));
            set(&mut b, "source", src);
            let src = b.get("source").cloned().unwrap_or_default();
            let liquid = st.contents.get(&src).and_then(|c| c.iter().next().cloned());
            set(&mut b, "liquid", liquid);
            let dest = empty_container_prefer_beaker(schema, &[src.as_str()]);
            set(&mut b, "container", dest);
        }
        TaskKind::Stir => {
            let c = b
                .get("liquid")
                .and_then(|l| st.container_of_liquid(l).map(str::to_string))
                .or_else(|| first_container_with_liquid(schema));
            set(&mut b, "container", c);
            let c = b.get("container").cloned().unwrap_or_default();
            let liquid = st.contents.get(&c).and_then(|l| l.iter().next().cloned());
            set(&mut b, "liquid", liquid);
        }
        TaskKind::Mix => {
            let mut liquids = schema.liquids.iter().map(|l| l.id.clone());
            set(&mut b, "liquid_a", liquids.next());
            set(&mut b, "liquid_b", liquids.next());
            let sources: Vec<String> = schema.liquids.iter().map(|l| l.container.clone()).collect();
            let excl: Vec<&str> = sources.iter().map(String::as_str).collect();
            set(&mut b, "container", empty_container_prefer_beaker(schema, &excl));
        }
        TaskKind::Crystallize => {
            let seed = schema
                .objects
                .iter()
                .find(|o| matches!(o.class, ObjectClass::Cuboid | ObjectClass::Cylinder))
                .map(|o| o.id.clone());
            set(&mut b, "seed", seed);
            let sol = schema
                .liquid("solution")
                .map(|l| l.id.clone())
                .or_else(|| schema.liquids.first().map(|l| l.id.clone()));
            set(&mut b, "solution", sol);
            let dish = schema.objects_of(ObjectClass::PetriDish).next().map(|o| o.id.clone());
            set(&mut b, "dish", dish);
        }
        TaskKind::Weigh => set(&mut b, "object", first_container_with_liquid(schema)),
        TaskKind::Shake => set(&mut b, "container", first_container_with_liquid(schema)),
        TaskKind::Freeform => {}
    }
    b
}

/// Conditions that define task success in symbolic space.
pub fn goal_atoms(kind: TaskKind, b: &Bindings) -> Vec<Atom> {
    let g = |k: &str| b.get(k).map(String::as_str).unwrap_or("");
    match kind {
        TaskKind::PickPlace => vec![Atom::new("at", &[g("object"), g("destination")])],
        TaskKind::Pour => vec![Atom::new("contains", &[g("container"), g("liquid")])],
        TaskKind::Stir => vec![Atom::new("mixed", &[g("container")])],
        TaskKind::Mix => vec![
            Atom::new("contains", &[g("container"), g("liquid_a")]),
            Atom::new("contains", &[g("container"), g("liquid_b")]),
            Atom::new("mixed", &[g("container")]),
        ],
        TaskKind::Crystallize => vec![
            Atom::new("contains", &[g("dish"), g("solution")]),
            Atom::new("in", &[g("seed"), g("dish")]),
            Atom::new("at", &[g("dish"), CRYSTALLIZATION_STATION]),
            Atom::new("crystallized", &[g("dish")]),
        ],
        TaskKind::Weigh => vec![Atom::new("at", &[g("object"), BALANCE])],
        TaskKind::Shake => vec![
            Atom::new("at", &[g("container"), SHAKER]),
            Atom::new("shaken", &[g("container")]),
        ],
        TaskKind::Freeform => Vec::new(),
    }
}

/// Required objects and conditions for a bound task.
pub fn prerequisites(kind: TaskKind, b: &Bindings, schema: &WorldSchema) -> PrerequisiteSet {
    let g = |k: &str| b.get(k).cloned().unwrap_or_default();
    let source_of = |l: &str| schema.initial.container_of_liquid(l).unwrap_or("").to_string();
    let stick = schema
        .objects_of(ObjectClass::Stick)
        .next()
        .map(|o| o.id.clone())
        .unwrap_or_default();
    let mut objects: Vec<String> = Vec::new();
    let mut conditions: Vec<Atom> = Vec::new();
    match kind {
        TaskKind::PickPlace => {
            objects.extend([g("object"), g("destination")]);
            conditions.push(Atom::new("hand-empty", &[]));
            conditions.push(Atom::new("graspable", &[&g("object")]));
        }
        TaskKind::Pour => {
            objects.extend([g("source"), g("container")]);
            conditions.push(Atom::new("contains", &[&g("source"), &g("liquid")]));
            conditions.push(Atom::new("hand-empty", &[]));
        }
        TaskKind::Stir => {
            objects.extend([g("container"), stick.clone()]);
            conditions.push(Atom::new("contains", &[&g("container"), &g("liquid")]));
        }
        TaskKind::Mix => {
            let (a, bb) = (g("liquid_a"), g("liquid_b"));
            objects.extend([g("container"), source_of(&a), source_of(&bb), stick.clone()]);
            conditions.push(Atom::new("contains", &[&source_of(&a), &a]));
            conditions.push(Atom::new("contains", &[&source_of(&bb), &bb]));
            conditions.push(Atom::new("container-empty", &[&g("container")]));
        }
        TaskKind::Crystallize => {
            let sol = g("solution");
            objects.extend([source_of(&sol), g("dish"), g("seed")]);
            conditions.push(Atom::new("contains", &[&source_of(&sol), &sol]));
            conditions.push(Atom::new("container-empty", &[&g("dish")]));
            conditions.push(Atom::new("in", &[&g("seed"), &g("dish")]));
            conditions.push(Atom::new("at", &[&g("dish"), CRYSTALLIZATION_STATION]));
        }
        TaskKind::Weigh => {
            objects.push(g("object"));
            conditions.push(Atom::new("at", &[&g("object"), BALANCE]));
        }
        TaskKind::Shake => {
            objects.push(g("container"));
            conditions.push(Atom::new("at", &[&g("container"), SHAKER]));
        }
        TaskKind::Freeform => {}
    }
    PrerequisiteSet {
        required_objects: objects.into_iter().filter(|o| !o.is_empty()).collect(),
        required_conditions: conditions.into_iter().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no plan satisfies the constraints: {0}")]
pub struct Infeasible(pub String);

/// Canonical step texts for a bound task, avoiding the listed objects where
/// a same-class substitute exists.
pub fn canonical_plan(
    kind: TaskKind,
    b: &Bindings,
    schema: &WorldSchema,
    avoid: &BTreeSet<String>,
) -> Result<Vec<String>, Infeasible> {
    let g = |k: &str| b.get(k).cloned().unwrap_or_default();
    let n = |id: &str| display_name(id);
    for (role, id) in b {
        if avoid.contains(id) {
            return Err(Infeasible(format!("goal requires {role}={id}")));
        }
    }
    let source_of = |l: &str| -> Result<String, Infeasible> {
        let src = schema
            .initial
            .container_of_liquid(l)
            .ok_or_else(|| Infeasible(format!("no container holds {l}")))?;
        if avoid.contains(src) {
            return Err(Infeasible(format!("only {src} holds {l}")));
        }
        Ok(src.to_string())
    };
    // Stirrer choice: the first stick not avoided; name it only when it is not the default.
    let stir_suffix = || -> Result<String, Infeasible> {
        let sticks: Vec<&str> =
            schema.objects_of(ObjectClass::Stick).map(|o| o.id.as_str()).collect();
        let chosen = sticks
            .iter()
            .find(|s| !avoid.contains(**s))
            .ok_or_else(|| Infeasible("no usable stirrer".into()))?;
        Ok(if Some(chosen) == sticks.first() { String::new() } else { format!(" with {}", n(chosen)) })
    };
    let steps = match kind {
        TaskKind::PickPlace => vec![
            format!("pick up {}", n(&g("object"))),
            format!("place {} in {}", n(&g("object")), n(&g("destination"))),
        ],
        TaskKind::Pour => {
            let src = b.get("source").cloned().map(Ok).unwrap_or_else(|| source_of(&g("liquid")))?;
            vec![
                format!("pick up {}", n(&src)),
                format!("pour {} into {}", n(&g("liquid")), n(&g("container"))),
            ]
        }
        TaskKind::Stir => vec![format!(
            "stir {} in {}{}",
            n(&g("liquid")),
            n(&g("container")),
            stir_suffix()?
        )],
        TaskKind::Mix => {
            source_of(&g("liquid_a"))?;
            source_of(&g("liquid_b"))?;
            vec![
                format!("add {} to {}", n(&g("liquid_a")), n(&g("container"))),
                format!("add {} to {}", n(&g("liquid_b")), n(&g("container"))),
                format!("stir mixture in {}{}", n(&g("container")), stir_suffix()?),
            ]
        }
        TaskKind::Crystallize => {
            let cup = source_of(&g("solution"))?;
            let dish = n(&g("dish"));
            vec![
                format!("pick up {}", n(&cup)),
                format!("pour {} into {}", n(&g("solution")), dish),
                format!("place {} next to {}", n(&cup), dish),
                format!("pick up {}", n(&g("seed"))),
                format!("place {} in {}", n(&g("seed")), dish),
                format!("move {} to {}", dish, n(CRYSTALLIZATION_STATION)),
                format!("wait at {}", n(CRYSTALLIZATION_STATION)),
            ]
        }
        TaskKind::Weigh => vec![
            format!("move {} to {}", n(&g("object")), n(BALANCE)),
            format!("weigh {}", n(&g("object"))),
        ],
        TaskKind::Shake => vec![
            format!("move {} to {}", n(&g("container")), n(SHAKER)),
            format!("shake {}", n(&g("container"))),
        ],
        TaskKind::Freeform => return Err(Infeasible("freeform goals have no canonical plan".into())),
    };
    Ok(steps)
}

/// Objective sentence carrying the task description and its bindings.
pub fn objective_text(kind: TaskKind, b: &Bindings) -> String {
    let desc = entry(kind).map(|e| e.description.as_str()).unwrap_or("");
    let binds = b.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("; ");
    format!("{desc} [{binds}]")
}

/// Parses an objective produced by [`objective_text`].
pub fn parse_objective(objective: &str) -> Option<(TaskKind, Bindings)> {
    let open = objective.rfind('[')?;
    let close = objective.rfind(']')?;
    let desc = objective[..open].trim();
    let kind = entries().iter().find(|e| e.description == desc)?.kind;
    let mut b = Bindings::new();
    for kv in objective[open + 1..close].split(';') {
        if let Some((k, v)) = kv.split_once('=') {
            b.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Some((kind, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_mirrors_training_counts() {
        let counts: Vec<(TaskKind, usize)> =
            entries().iter().map(|e| (e.kind, e.training_count)).collect();
        assert_eq!(
            counts,
            vec![
                (TaskKind::PickPlace, 88),
                (TaskKind::Pour, 25),
                (TaskKind::Stir, 27),
                (TaskKind::Mix, 50),
                (TaskKind::Crystallize, 73),
                (TaskKind::Weigh, 27),
                (TaskKind::Shake, 25),
            ]
        );
    }

    #[test]
    fn classify_prefers_specific_templates() {
        let m = classify_goal("Pour water into beaker.").unwrap();
        assert_eq!(m.kind, TaskKind::Pour);
        assert_eq!(m.bindings.get("liquid").unwrap(), "water");
        assert_eq!(m.bindings.get("container").unwrap(), "beaker");

        let m = classify_goal("Put beaker on the shaker and run it.").unwrap();
        assert_eq!(m.kind, TaskKind::Shake);

        let m = classify_goal("Conduct crystallization.").unwrap();
        assert_eq!(m.kind, TaskKind::Crystallize);
        assert!(m.bindings.is_empty());

        let m = classify_goal("mix reagent A and reagent B in petri dish").unwrap();
        assert_eq!(m.kind, TaskKind::Mix);
        assert_eq!(m.bindings.get("container").unwrap(), "petri_dish");
        assert_eq!(m.bindings.get("liquid_a").unwrap(), "reagent_a");

        assert!(classify_goal("colorless green ideas sleep furiously").is_none());
    }

    #[test]
    fn filled_templates_classify_back() {
        for e in entries() {
            for v in &e.variants {
                for t in &e.pool {
                    let text = fill_template(t, v);
                    let m = classify_goal(&text).unwrap_or_else(|| panic!("no match: {text}"));
                    assert_eq!(m.kind, e.kind, "{text}");
                    for (k, val) in &m.bindings {
                        assert_eq!(v.get(k), Some(val), "{text}");
                    }
                }
            }
        }
    }

    #[test]
    fn objective_round_trips() {
        let spec = TaskSpec::variant(TaskKind::Mix, 0);
        let text = objective_text(spec.kind, &spec.bindings);
        assert!(text.starts_with("Multi-step reactant mixing experiment."));
        assert_eq!(parse_objective(&text), Some((spec.kind, spec.bindings)));
    }
}
