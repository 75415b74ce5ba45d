use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::PredictorError;
use crate::simulator::{state_vec, LabWorld, StateVec, TickRecord};

/// One training record: state before a subtask, the subtask text, and the
/// horizon frames that followed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub state: StateVec,
    pub instruction: String,
    pub future: Vec<StateVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
}

pub fn write_jsonl<W: Write>(records: &[Triple], mut out: W) -> Result<(), PredictorError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| PredictorError::Data(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Triple>, PredictorError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PredictorError::Data(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// State vector of a traced tick, using `template` for everything the record
/// does not carry (radii, capacities, stations).
pub fn record_state(template: &LabWorld, rec: &TickRecord) -> StateVec {
    let mut w = template.clone();
    w.arm.ee = [rec.arm.x, rec.arm.y];
    w.arm.engaged = rec.arm.engaged;
    w.arm.held = rec.arm.held.clone();
    for o in &rec.objects {
        if let Some(obj) = w.object_mut(&o.id) {
            obj.pos = [o.x, o.y];
        }
    }
    for (id, contents) in &rec.containers {
        if let Some(c) = w.containers.get_mut(id) {
            c.contents = contents.clone();
        }
    }
    state_vec(&w)
}

/// `k` frames evenly spaced over `states`, ending on the last one. An empty
/// input repeats `fallback`.
pub fn horizon_frames(states: &[StateVec], fallback: &StateVec, k: usize) -> Vec<StateVec> {
    if states.is_empty() {
        return vec![fallback.clone(); k];
    }
    let n = states.len();
    (1..=k).map(|j| states[(j * n).div_ceil(k) - 1].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan_ir::TaskKind;
    use crate::simulator::sample_scene;
    use crate::tasks::TaskSpec;

    #[test]
    fn frames_end_on_last_state() {
        let s: Vec<StateVec> = (0..5).map(|i| StateVec(vec![i as f64])).collect();
        let f = horizon_frames(&s, &StateVec(vec![9.0]), 8);
        assert_eq!(f.len(), 8);
        assert_eq!(f.last().unwrap().0, vec![4.0]);
        assert_eq!(horizon_frames(&[], &StateVec(vec![9.0]), 2), vec![StateVec(vec![9.0]); 2]);
        let f = horizon_frames(&(0..16).map(|i| StateVec(vec![i as f64])).collect::<Vec<_>>(), &StateVec(vec![]), 8);
        assert_eq!(f[0].0, vec![1.0]);
    }

    #[test]
    fn record_state_reproduces_world() {
        let w = sample_scene(&TaskSpec::variant(TaskKind::Pour, 0), 2).unwrap();
        let rec = TickRecord::capture(&w, "x");
        assert_eq!(record_state(&w, &rec), state_vec(&w));
    }

    #[test]
    fn jsonl_round_trip() {
        let t = Triple { state: StateVec(vec![0.5]), instruction: "pour".into(), future: vec![StateVec(vec![0.25])], task: None };
        let mut buf = Vec::new();
        write_jsonl(&[t.clone(), t.clone()], &mut buf).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), vec![t.clone(), t]);
    }
}
