use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PlanError, Verb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintKind {
    Temporal,
    Causal,
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    #[serde(rename = "E1")]
    E1Redundant,
    #[serde(rename = "E2")]
    E2Logical,
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCategory::E1Redundant => "E1",
            ErrorCategory::E2Logical => "E2",
        })
    }
}

/// Built-in rule a constraint instantiates. Every rule is a pure predicate over
/// the plan prefix and the symbolic state before the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    DuplicateStep,
    RedundantPostcondition,
    Graspable,
    HandFree,
    Holding,
    ContainerDestination,
    StirrerAvailable,
    AvoidObject,
    SourceHasLiquid,
    HasLiquid,
    ReadyToIncubate,
    StationOccupied,
    AtBalance,
    AtShaker,
}

impl Rule {
    pub const ALL: [Rule; 14] = [
        Rule::DuplicateStep,
        Rule::RedundantPostcondition,
        Rule::Graspable,
        Rule::HandFree,
        Rule::Holding,
        Rule::ContainerDestination,
        Rule::StirrerAvailable,
        Rule::AvoidObject,
        Rule::SourceHasLiquid,
        Rule::HasLiquid,
        Rule::ReadyToIncubate,
        Rule::StationOccupied,
        Rule::AtBalance,
        Rule::AtShaker,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::DuplicateStep => "duplicate-step",
            Rule::RedundantPostcondition => "redundant-postcondition",
            Rule::Graspable => "graspable",
            Rule::HandFree => "hand-free",
            Rule::Holding => "holding",
            Rule::ContainerDestination => "container-destination",
            Rule::StirrerAvailable => "stirrer-available",
            Rule::AvoidObject => "avoid-object",
            Rule::SourceHasLiquid => "source-has-liquid",
            Rule::HasLiquid => "has-liquid",
            Rule::ReadyToIncubate => "ready-to-incubate",
            Rule::StationOccupied => "station-occupied",
            Rule::AtBalance => "at-balance",
            Rule::AtShaker => "at-shaker",
        }
    }

    /// The category a firing of this rule produces.
    pub fn category(self) -> ErrorCategory {
        match self {
            Rule::DuplicateStep | Rule::RedundantPostcondition => ErrorCategory::E1Redundant,
            _ => ErrorCategory::E2Logical,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| PlanError::UnknownPredicate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    #[serde(rename = "predicate")]
    pub rule: Rule,
    /// Verbs the rule applies to; empty means every verb.
    #[serde(default)]
    pub verbs: Vec<Verb>,
    /// Argument pattern. `?x` entries are bound from the step; literals pin an id.
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub description: String,
}

impl Constraint {
    pub fn new(kind: ConstraintKind, rule: Rule, verbs: &[Verb], args: &[&str]) -> Self {
        Constraint {
            kind,
            rule,
            verbs: verbs.to_vec(),
            args: args.iter().map(|s| s.to_string()).collect(),
            description: String::new(),
        }
    }

    pub fn applies_to(&self, verb: Verb) -> bool {
        self.verbs.is_empty() || self.verbs.contains(&verb)
    }

    /// Literal (non-variable) arguments of the pattern.
    pub fn literal_args(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter(|a| !a.starts_with('?')).map(String::as_str)
    }

    pub fn key(&self) -> String {
        format!("{}({})", self.rule, self.args.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub step_index: usize,
    pub category: ErrorCategory,
    pub constraint_kind: ConstraintKind,
    pub rule: Rule,
    /// Entity the failed check is about (held object, empty source, ...).
    #[serde(default)]
    pub subject: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} category={} kind={:?} rule={} subject={} :: {}",
            self.step_index,
            self.category,
            self.constraint_kind,
            self.rule,
            self.subject.as_deref().unwrap_or("-"),
            self.message
        )
    }
}

impl FromStr for Violation {
    type Err = PlanError;

    /// Parses the [`Display`](fmt::Display) form; used by text-only backends.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PlanError::BadViolation(s.to_string());
        let (head, message) = s.split_once(" :: ").ok_or_else(bad)?;
        let mut step_index = None;
        let mut category = None;
        let mut kind = None;
        let mut rule = None;
        let mut subject = None;
        for field in head.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(bad)?;
            match k {
                "step" => step_index = v.parse().ok(),
                "category" => {
                    category = match v {
                        "E1" => Some(ErrorCategory::E1Redundant),
                        "E2" => Some(ErrorCategory::E2Logical),
                        _ => None,
                    }
                }
                "kind" => {
                    kind = match v {
                        "Temporal" => Some(ConstraintKind::Temporal),
                        "Causal" => Some(ConstraintKind::Causal),
                        "Physical" => Some(ConstraintKind::Physical),
                        _ => None,
                    }
                }
                "rule" => rule = v.parse().ok(),
                "subject" => subject = (v != "-").then(|| v.to_string()),
                _ => {}
            }
        }
        Ok(Violation {
            step_index: step_index.ok_or_else(bad)?,
            category: category.ok_or_else(bad)?,
            constraint_kind: kind.ok_or_else(bad)?,
            rule: rule.ok_or_else(bad)?,
            subject,
            message: message.to_string(),
        })
    }
}

#[derive(Debug, Deserialize)]
struct PackFile {
    #[allow(dead_code)]
    version: u32,
    constraints: Vec<Constraint>,
}

/// Parses a declarative constraint pack (`{"version": .., "constraints": [..]}`).
pub fn load_pack(json: &str) -> Result<Vec<Constraint>, PlanError> {
    let file: PackFile = serde_json::from_str(json).map_err(|e| PlanError::Pack(e.to_string()))?;
    Ok(file.constraints)
}

const BASE_PACK: &str = include_str!("../../data/constraints/base.json");
const CAUSAL_PACK: &str = include_str!("../../data/constraints/causal.json");

/// Redundancy and physical-feasibility rules. Always active when validation runs.
pub fn base_pack() -> Vec<Constraint> {
    load_pack(BASE_PACK).expect("bundled base pack parses")
}

/// Causal and temporal ordering rules; activated through derived prerequisites.
pub fn causal_pack() -> Vec<Constraint> {
    load_pack(CAUSAL_PACK).expect("bundled causal pack parses")
}

/// Every bundled rule. Audits always run against this pack.
pub fn full_pack() -> Vec<Constraint> {
    let mut pack = base_pack();
    pack.extend(causal_pack());
    pack
}
