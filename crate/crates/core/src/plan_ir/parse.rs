//! Numbered-list plan text and the instruction grammar.
//!
//! An instruction is `<verb phrase> <theme> [<preposition> <arg>]...`. The verb
//! phrase, prepositions and filler words all come from `data/verbs.json`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

use super::{Arg, Plan, PlanError, Role, Subtask, Verb, WorldSchema};

#[derive(Debug, Deserialize)]
struct SynonymFile {
    version: u32,
    verbs: BTreeMap<String, Vec<String>>,
    prepositions: BTreeMap<String, String>,
    fillers: Vec<String>,
}

/// The verb/preposition normalization table, longest phrases first.
#[derive(Debug)]
pub struct SynonymTable {
    pub version: u32,
    verb_phrases: Vec<(Vec<String>, Verb)>,
    prepositions: Vec<(Vec<String>, Option<Role>)>,
    fillers: Vec<String>,
}

const SYNONYMS: &str = include_str!("../../data/verbs.json");

pub fn synonyms() -> &'static SynonymTable {
    static TABLE: OnceLock<SynonymTable> = OnceLock::new();
    TABLE.get_or_init(|| SynonymTable::from_json(SYNONYMS).expect("bundled synonym table parses"))
}

impl SynonymTable {
    pub fn from_json(json: &str) -> Result<Self, PlanError> {
        let file: SynonymFile =
            serde_json::from_str(json).map_err(|e| PlanError::Pack(e.to_string()))?;
        let mut verb_phrases = Vec::new();
        for (verb, phrases) in &file.verbs {
            let verb: Verb = verb.parse()?;
            for p in phrases {
                verb_phrases.push((words(p), verb));
            }
        }
        verb_phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        let mut prepositions = Vec::new();
        for (p, role) in &file.prepositions {
            let role = match role.as_str() {
                "destination" => Some(Role::Destination),
                "source" => Some(Role::Source),
                "instrument" => Some(Role::Instrument),
                "purpose" => None,
                other => return Err(PlanError::Pack(format!("unknown preposition role {other}"))),
            };
            prepositions.push((words(p), role));
        }
        prepositions.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(SynonymTable { version: file.version, verb_phrases, prepositions, fillers: file.fillers })
    }

    fn match_verb(&self, ws: &[String]) -> Option<(Verb, usize)> {
        self.verb_phrases
            .iter()
            .find(|(p, _)| ws.len() >= p.len() && ws[..p.len()] == p[..])
            .map(|(p, v)| (*v, p.len()))
    }

    fn match_preposition(&self, ws: &[String]) -> Option<(Option<Role>, usize)> {
        self.prepositions
            .iter()
            .find(|(p, _)| ws.len() >= p.len() && ws[..p.len()] == p[..])
            .map(|(p, r)| (*r, p.len()))
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '_' && c != '-').to_ascii_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Normalizes a noun phrase such as `Petri Dish` to the identifier `petri_dish`.
pub fn normalize_id(phrase: &str) -> String {
    strip_fillers(words(phrase)).join("_")
}

/// Drops leading articles and filler nouns. Only leading ones, so names like
/// `reagent A` survive.
fn strip_fillers(mut ws: Vec<String>) -> Vec<String> {
    let table = synonyms();
    let lead = ws.iter().take_while(|w| table.fillers.contains(w)).count();
    ws.drain(..lead);
    ws
}

/// Renders an identifier back into the words used in instructions.
pub fn display_name(id: &str) -> String {
    id.split('_')
        .map(|w| if w.len() == 1 { w.to_ascii_uppercase() } else { w.to_string() })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses one instruction into verb and role-tagged arguments.
pub fn parse_instruction(
    index: usize,
    text: &str,
    schema: Option<&WorldSchema>,
) -> Subtask {
    let table = synonyms();
    let ws = words(text);
    let (verb, mut pos) = match table.match_verb(&ws) {
        Some((v, n)) => (Some(v), n),
        None => (None, 0),
    };
    let mut args = Vec::new();
    if verb.is_some() {
        let mut role = Some(Role::Theme);
        let mut current: Vec<String> = Vec::new();
        let flush = |role: Option<Role>, current: &mut Vec<String>, args: &mut Vec<Arg>| {
            let kept = strip_fillers(current.drain(..).collect());
            if let (Some(role), false) = (role, kept.is_empty()) {
                args.push(Arg { id: kept.join("_"), role, unresolved: false });
            }
        };
        while pos < ws.len() {
            if let Some((r, n)) = table.match_preposition(&ws[pos..]) {
                flush(role, &mut current, &mut args);
                role = r;
                pos += n;
                continue;
            }
            current.push(ws[pos].clone());
            pos += 1;
        }
        flush(role, &mut current, &mut args);
    }
    if let Some(schema) = schema {
        for a in &mut args {
            a.unresolved = schema.resolve(&a.id).is_none();
        }
    }
    Subtask { index, text: text.trim().to_string(), verb, args }
}

fn numbered_line(line: &str) -> Option<(&str, &str)> {
    let t = line.trim_start();
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    let rest = &t[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    Some((&t[..digits], rest.trim()))
}

/// Parses `N. <instruction>` lines in file order. Other lines are ignored.
pub fn parse_plan(text: &str, schema: Option<&WorldSchema>) -> Result<Plan, PlanError> {
    let mut steps = Vec::new();
    let mut warnings = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let Some((_, instruction)) = numbered_line(line) else {
            continue;
        };
        if instruction.is_empty() {
            return Err(PlanError::MalformedLine { line: lineno + 1 });
        }
        let step = parse_instruction(steps.len() + 1, instruction, schema);
        if step.verb.is_none() {
            warnings.push(format!("step {}: unrecognized verb in '{}'", step.index, step.text));
        }
        for a in step.args.iter().filter(|a| a.unresolved) {
            warnings.push(format!("step {}: unresolved reference '{}'", step.index, a.id));
        }
        steps.push(step);
    }
    if steps.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    let mut plan = Plan::from_steps(steps);
    for w in warnings {
        plan.record("parse-warning", w);
    }
    Ok(plan)
}

/// Canonical `N. <instruction>` rendering; empty plans render as "".
pub fn render_plan(plan: &Plan) -> String {
    plan.steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Like [`render_plan`], also noting empty renders in the audit trail.
pub fn render_plan_audited(plan: &mut Plan) -> String {
    let text = render_plan(plan);
    if plan.steps.is_empty() {
        plan.record("rendered-empty", "");
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig10_pick_place_text() {
        let plan = parse_plan("1. pick up cuboid\n2. place cuboid in petri dish", None).unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!(plan.steps[0].verb, Some(Verb::Pick));
        assert_eq!(plan.steps[1].verb, Some(Verb::Place));
        assert_eq!(plan.steps[1].arg(Role::Theme), Some("cuboid"));
        assert_eq!(plan.steps[1].arg(Role::Destination), Some("petri_dish"));
    }

    #[test]
    fn empty_text_is_empty_plan() {
        assert_eq!(parse_plan("", None), Err(PlanError::EmptyPlan));
        assert_eq!(parse_plan("Sure, here you go:\n", None), Err(PlanError::EmptyPlan));
    }

    #[test]
    fn number_without_instruction_is_malformed() {
        assert_eq!(
            parse_plan("1. pick up cuboid\n2.   \n", None),
            Err(PlanError::MalformedLine { line: 2 })
        );
    }

    #[test]
    fn synonyms_normalize() {
        let s = parse_instruction(1, "Put down cup A", None);
        assert_eq!(s.verb, Some(Verb::Place));
        assert_eq!(s.arg(Role::Theme), Some("cup_a"));
        let s = parse_instruction(1, "Load beaker onto the shaker", None);
        assert_eq!(s.verb, Some(Verb::Move));
        assert_eq!(s.arg(Role::Destination), Some("shaker"));
        let s = parse_instruction(1, "place cup next to petri dish", None);
        assert_eq!(s.arg(Role::Destination), Some("petri_dish"));
    }

    #[test]
    fn fillers_are_dropped() {
        let s = parse_instruction(3, "pour contents from cuboid", None);
        assert_eq!(s.verb, Some(Verb::Pour));
        assert_eq!(s.args.len(), 1);
        assert_eq!(s.arg(Role::Source), Some("cuboid"));
        let s = parse_instruction(1, "stir liquid in beaker", None);
        assert_eq!(s.args.len(), 1);
        assert_eq!(s.arg(Role::Destination), Some("beaker"));
    }

    #[test]
    fn unknown_verb_is_kept_and_flagged() {
        let plan = parse_plan("1. frobnicate the beaker", None).unwrap();
        assert_eq!(plan.steps[0].verb, None);
        assert!(plan.audit.iter().any(|a| a.event == "parse-warning"));
    }

    #[test]
    fn render_is_canonical() {
        let plan = parse_plan("1. pick up cuboid\n  2)  place cuboid in petri dish  ", None).unwrap();
        assert_eq!(render_plan(&plan), "1. pick up cuboid\n2. place cuboid in petri dish");
    }

    #[test]
    fn empty_render_marks_audit() {
        let mut plan = Plan::default();
        assert_eq!(render_plan_audited(&mut plan), "");
        assert_eq!(plan.audit.last().unwrap().event, "rendered-empty");
    }

    #[test]
    fn display_names_round_trip_through_normalization() {
        for id in ["petri_dish", "reagent_a", "cup_b", "crystallization_station", "water"] {
            assert_eq!(normalize_id(&display_name(id)), id);
        }
    }
}
