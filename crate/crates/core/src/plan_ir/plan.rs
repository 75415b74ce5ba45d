use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Atom, Goal, PlanError};

/// Closed operation vocabulary for symbolic subtasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Pick,
    Place,
    Move,
    Pour,
    Stir,
    Add,
    Wait,
    Weigh,
    Shake,
}

impl Verb {
    pub const ALL: [Verb; 9] = [
        Verb::Pick,
        Verb::Place,
        Verb::Move,
        Verb::Pour,
        Verb::Stir,
        Verb::Add,
        Verb::Wait,
        Verb::Weigh,
        Verb::Shake,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Pick => "pick",
            Verb::Place => "place",
            Verb::Move => "move",
            Verb::Pour => "pour",
            Verb::Stir => "stir",
            Verb::Add => "add",
            Verb::Wait => "wait",
            Verb::Weigh => "weigh",
            Verb::Shake => "shake",
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verb {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verb::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| PlanError::UnknownVerb(s.to_string()))
    }
}

/// Grammatical role of a subtask argument, taken from the preceding preposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Theme,
    Destination,
    Source,
    Instrument,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arg {
    /// Normalized identifier (lowercase, words joined by `_`).
    pub id: String,
    pub role: Role,
    /// Set when a schema was supplied at parse time and `id` did not resolve.
    #[serde(default)]
    pub unresolved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subtask {
    pub index: usize,
    pub text: String,
    /// `None` when the instruction's leading phrase is not in the synonym table.
    pub verb: Option<Verb>,
    pub args: Vec<Arg>,
}

impl Subtask {
    pub fn arg(&self, role: Role) -> Option<&str> {
        self.args.iter().find(|a| a.role == role).map(|a| a.id.as_str())
    }

    pub fn args_with(&self, role: Role) -> impl Iterator<Item = &str> {
        self.args.iter().filter(move |a| a.role == role).map(|a| a.id.as_str())
    }

    pub fn arg_ids(&self) -> impl Iterator<Item = &str> {
        self.args.iter().map(|a| a.id.as_str())
    }

    /// Instruction text with case and whitespace folded, used for duplicate detection.
    pub fn normalized_text(&self) -> String {
        normalize_text(&self.text)
    }
}

pub(crate) fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.trim_end_matches(['.', ',', ';']).to_ascii_lowercase())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrerequisiteSet {
    pub required_objects: BTreeSet<String>,
    pub required_conditions: BTreeSet<Atom>,
}

impl PrerequisiteSet {
    pub fn is_empty(&self) -> bool {
        self.required_objects.is_empty() && self.required_conditions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub revision: u32,
    pub event: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    #[serde(default)]
    pub goal: Option<Goal>,
    #[serde(default)]
    pub core_objective: String,
    #[serde(default)]
    pub prerequisites: PrerequisiteSet,
    pub steps: Vec<Subtask>,
    #[serde(default)]
    pub revision: u32,
    #[serde(default)]
    pub audit: Vec<AuditEntry>,
}

impl Plan {
    pub fn from_steps(steps: Vec<Subtask>) -> Self {
        let mut plan = Plan { steps, ..Plan::default() };
        plan.reindex();
        plan
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Restores contiguous 1-based indices after edits.
    pub fn reindex(&mut self) {
        for (i, s) in self.steps.iter_mut().enumerate() {
            s.index = i + 1;
        }
    }

    pub fn record(&mut self, event: impl Into<String>, detail: impl Into<String>) {
        self.audit.push(AuditEntry {
            revision: self.revision,
            event: event.into(),
            detail: detail.into(),
        });
    }

    pub fn step_texts(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.text.as_str()).collect()
    }
}
