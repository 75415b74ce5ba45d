use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::instrument;
use super::PlanError;

/// The seven lab tasks plus the passthrough kind for goals no pool matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PickPlace,
    Pour,
    Stir,
    Mix,
    Crystallize,
    Weigh,
    Shake,
    Freeform,
}

impl TaskKind {
    pub const TEMPLATED: [TaskKind; 7] = [
        TaskKind::PickPlace,
        TaskKind::Pour,
        TaskKind::Stir,
        TaskKind::Mix,
        TaskKind::Crystallize,
        TaskKind::Weigh,
        TaskKind::Shake,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::PickPlace => "pick_place",
            TaskKind::Pour => "pour",
            TaskKind::Stir => "stir",
            TaskKind::Mix => "mix",
            TaskKind::Crystallize => "crystallize",
            TaskKind::Weigh => "weigh",
            TaskKind::Shake => "shake",
            TaskKind::Freeform => "freeform",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "pick_place" | "pickplace" => TaskKind::PickPlace,
            "pour" => TaskKind::Pour,
            "stir" => TaskKind::Stir,
            "mix" | "mixing" => TaskKind::Mix,
            "crystallize" | "crystallise" => TaskKind::Crystallize,
            "weigh" => TaskKind::Weigh,
            "shake" => TaskKind::Shake,
            "freeform" => TaskKind::Freeform,
            other => return Err(PlanError::UnknownTask(other.to_string())),
        };
        Ok(k)
    }
}

/// A natural-language experiment goal.
///
/// Field access goes through accessors so that execution layers touching the
/// goal show up in [`instrument::goal_accesses`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    text: String,
    task_kind: TaskKind,
}

impl Goal {
    /// Builds a goal, classifying it against the template pools.
    pub fn new(text: impl Into<String>) -> Result<Self, PlanError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PlanError::EmptyGoal);
        }
        let task_kind = crate::tasks::classify_goal(&text)
            .map(|m| m.kind)
            .unwrap_or(TaskKind::Freeform);
        Ok(Goal { text, task_kind })
    }

    /// Builds a goal with an explicit kind. `Freeform` is rejected when a pool matches.
    pub fn with_kind(text: impl Into<String>, task_kind: TaskKind) -> Result<Self, PlanError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PlanError::EmptyGoal);
        }
        if task_kind == TaskKind::Freeform && crate::tasks::classify_goal(&text).is_some() {
            return Err(PlanError::FreeformMatchesPool(text));
        }
        Ok(Goal { text, task_kind })
    }

    pub fn text(&self) -> &str {
        instrument::note_goal_access();
        &self.text
    }

    pub fn task_kind(&self) -> TaskKind {
        instrument::note_goal_access();
        self.task_kind
    }
}
