use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Driver;
use crate::grounder::PrimitiveSeq;
use crate::simulator::{step_primitive_traced, LabWorld, Outcome, SimError, TickRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub outcome: Outcome,
    /// Index of the primitive that did not finish, if any.
    pub failed_index: Option<usize>,
    pub ticks: u32,
    pub reward: f64,
    /// Mean wall time per controller tick, in milliseconds.
    pub tick_ms: f64,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TickRecord>,
}

/// Runs the primitives in order and stops at the first one that does not finish.
pub fn execute_sequence(
    world: &mut LabWorld,
    seq: &PrimitiveSeq,
    driver: &mut dyn Driver,
    trace: bool,
) -> Result<SequenceResult, SimError> {
    let mut out = SequenceResult {
        outcome: Outcome::Done,
        failed_index: None,
        ticks: 0,
        reward: 0.0,
        tick_ms: 0.0,
        notes: Vec::new(),
        trace: Vec::new(),
    };
    let mut elapsed = 0.0;
    for (i, p) in seq.primitives.iter().enumerate() {
        let start = Instant::now();
        let r = step_primitive_traced(world, p, driver, trace, None)?;
        elapsed += start.elapsed().as_secs_f64() * 1000.0;
        out.ticks += r.steps.max(1);
        out.reward += r.reward;
        if !r.note.is_empty() {
            out.notes.push(r.note);
        }
        out.trace.extend(r.trace);
        if !r.outcome.is_done() {
            out.outcome = r.outcome;
            out.failed_index = Some(i);
            break;
        }
    }
    out.tick_ms = if out.ticks > 0 { elapsed / f64::from(out.ticks) } else { 0.0 };
    Ok(out)
}
