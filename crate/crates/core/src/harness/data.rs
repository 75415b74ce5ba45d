//! Scripted rollouts for predictor and controller training.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trial::trial_seed;
use super::HarnessError;
use crate::backends::BackendHandle;
use crate::controller::{ControlAction, ControlObservation, ScriptedController, Transition};
use crate::grounder::{rule_ground, GroundingContext};
use crate::plan_ir::{Goal, TaskKind, Verb};
use crate::predictor::{horizon_frames, read_jsonl, record_state, write_jsonl, Triple};
use crate::reasoner::{refine_loop, ReasonerConfig};
use crate::simulator::{check_success, dwell, observe, sample_prompt, sample_scene, state_vec, step_primitive_traced, StateVec};
use crate::tasks::{entry, TaskSpec};

const GEN: u64 = 0x6765_6e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataGenConfig {
    pub tasks: Vec<TaskKind>,
    /// Rollouts per task; missing tasks use the task table's training count.
    pub counts: BTreeMap<TaskKind, usize>,
    pub seed: u64,
    /// Future frames per triple.
    pub horizon: usize,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        DataGenConfig { tasks: TaskKind::TEMPLATED.to_vec(), counts: BTreeMap::new(), seed: 0, horizon: crate::predictor::DEFAULT_HORIZON }
    }
}

impl DataGenConfig {
    pub fn count(&self, kind: TaskKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or_else(|| entry(kind).map(|e| e.training_count).unwrap_or(0))
    }
}

/// Ticks of one Move primitive driven by the scripted controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub task: TaskKind,
    pub rollout: usize,
    pub step: usize,
    pub primitive: String,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub task: TaskKind,
    pub rollout: usize,
    pub prompt: String,
    pub steps: usize,
    pub ticks: u64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskDataset {
    pub triples: Vec<Triple>,
    pub episodes: Vec<Episode>,
    pub rollouts: Vec<RolloutSummary>,
}

fn task_index(kind: TaskKind) -> u64 {
    TaskKind::TEMPLATED.iter().position(|k| *k == kind).unwrap_or(TaskKind::TEMPLATED.len()) as u64
}

/// One scripted rollout of prompt slot `i`. Fails if planning fails, a
/// primitive does not finish, or the final world misses the goal.
pub fn rollout(kind: TaskKind, i: usize, seed: u64, horizon: usize) -> Result<TaskDataset, HarnessError> {
    let k = task_index(kind);
    let spec = TaskSpec::variant(kind, i);
    let prompt = sample_prompt(&spec, trial_seed(seed, &[GEN, 1, k, i as u64]))?;
    let mut world = sample_scene(&spec, trial_seed(seed, &[GEN, 2, k, i as u64]))?;
    let schema = world.schema();
    let goal = Goal::new(&prompt)?;
    let plan = refine_loop(&goal, &schema, &ReasonerConfig::default(), &BackendHandle::rule())?.plan;
    let mut ds = TaskDataset::default();
    let mut ctl = ScriptedController::default();
    let mut ticks = 0u64;
    for (si, step) in plan.steps.iter().enumerate() {
        let obs = observe(&world);
        let before = obs.state.clone();
        let seq = rule_ground(&GroundingContext::new(step.clone(), obs));
        let mut states: Vec<StateVec> = Vec::new();
        for p in &seq.primitives {
            let template = world.clone();
            let mut transitions = Vec::new();
            let mut hook = |o: &ControlObservation, a: &ControlAction, r: f64, n: &ControlObservation, done: bool| {
                transitions.push(Transition { obs: *o, action: *a, raw: a.velocity, reward: r, next: *n, done });
            };
            let r = step_primitive_traced(&mut world, p, &mut ctl, true, Some(&mut hook))?;
            ticks += u64::from(r.steps.max(1));
            states.extend(r.trace.iter().map(|t| record_state(&template, t)));
            if !r.outcome.is_done() {
                return Err(HarnessError::Rollout(format!("{kind} rollout {i}, step '{}': {:?}", step.text, r.outcome)));
            }
            if !transitions.is_empty() {
                ds.episodes.push(Episode { task: kind, rollout: i, step: si, primitive: p.to_string(), transitions });
            }
        }
        if matches!(step.verb, Some(Verb::Wait | Verb::Weigh | Verb::Shake)) {
            dwell(&mut world);
        }
        let after = state_vec(&world);
        states.push(after.clone());
        ds.triples.push(Triple {
            state: before,
            instruction: step.text.clone(),
            future: horizon_frames(&states, &after, horizon),
            task: Some(kind.to_string()),
        });
    }
    let success = check_success(&world, &spec);
    if !success {
        return Err(HarnessError::Rollout(format!("{kind} rollout {i} ends without meeting its goal")));
    }
    ds.rollouts.push(RolloutSummary { task: kind, rollout: i, prompt, steps: plan.steps.len(), ticks, success });
    Ok(ds)
}

/// All rollouts of one task, in slot order.
pub fn generate_task(kind: TaskKind, count: usize, seed: u64, horizon: usize) -> Result<TaskDataset, HarnessError> {
    let mut out = TaskDataset::default();
    for i in 0..count {
        let ds = rollout(kind, i, seed, horizon)?;
        out.triples.extend(ds.triples);
        out.episodes.extend(ds.episodes);
        out.rollouts.extend(ds.rollouts);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub task: TaskKind,
    pub rollouts: usize,
    pub triples: PathBuf,
    pub episodes: PathBuf,
    pub manifest: PathBuf,
}

const MANIFEST_HEADER: &str = "task,rollout,steps,ticks,success,prompt\n";

/// Writes `<dir>/<task>/{triples.jsonl, episodes.jsonl, rollouts.csv}` per task.
pub fn generate_datasets(config: &DataGenConfig, dir: &Path) -> Result<Vec<DatasetFiles>, HarnessError> {
    let mut out = Vec::new();
    for &kind in &config.tasks {
        let ds = generate_task(kind, config.count(kind), config.seed, config.horizon)?;
        let tdir = dir.join(kind.to_string());
        std::fs::create_dir_all(&tdir)?;
        let triples = tdir.join("triples.jsonl");
        write_jsonl(&ds.triples, BufWriter::new(File::create(&triples)?))?;
        let episodes = tdir.join("episodes.jsonl");
        let mut w = BufWriter::new(File::create(&episodes)?);
        for e in &ds.episodes {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let manifest = tdir.join("rollouts.csv");
        let mut csv = String::from(MANIFEST_HEADER);
        for r in &ds.rollouts {
            csv.push_str(&format!("{},{},{},{},{},\"{}\"\n", r.task, r.rollout, r.steps, r.ticks, r.success, r.prompt.replace('"', "'")));
        }
        std::fs::write(&manifest, csv)?;
        out.push(DatasetFiles { task: kind, rollouts: ds.rollouts.len(), triples, episodes, manifest });
    }
    Ok(out)
}

/// Triples from a file, or from every `*/triples.jsonl` under a directory.
pub fn load_triples(path: &Path) -> Result<Vec<Triple>, HarnessError> {
    if path.is_file() {
        return Ok(read_jsonl(BufReader::new(File::open(path)?))?);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(path)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    dirs.sort();
    let mut out = Vec::new();
    for d in dirs {
        let f = d.join("triples.jsonl");
        if f.is_file() {
            out.extend(read_jsonl(BufReader::new(File::open(f)?))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rollouts_meet_their_goals_on_every_task() {
        for kind in TaskKind::TEMPLATED {
            let ds = generate_task(kind, 3, 0, 8).unwrap();
            assert_eq!(ds.rollouts.len(), 3);
            assert!(ds.rollouts.iter().all(|r| r.success));
            assert!(!ds.triples.is_empty());
            assert!(ds.triples.iter().all(|t| t.future.len() == 8 && t.future[0].0.len() == t.state.0.len()));
        }
    }

    #[test]
    fn pick_place_emits_episodes() {
        let ds = generate_task(TaskKind::PickPlace, 2, 5, 8).unwrap();
        assert!(!ds.episodes.is_empty());
        assert!(ds.episodes.iter().all(|e| e.transitions.last().is_some_and(|t| t.done)));
    }

    #[test]
    fn zero_count_writes_empty_files_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DataGenConfig { tasks: vec![TaskKind::Stir], counts: [(TaskKind::Stir, 0)].into(), ..Default::default() };
        let files = generate_datasets(&cfg, dir.path()).unwrap();
        assert_eq!(files[0].rollouts, 0);
        assert_eq!(std::fs::read_to_string(&files[0].triples).unwrap(), "");
        assert_eq!(std::fs::read_to_string(&files[0].manifest).unwrap(), MANIFEST_HEADER);
        assert!(load_triples(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn default_counts_follow_task_table() {
        let c = DataGenConfig::default();
        assert_eq!(c.count(TaskKind::PickPlace), 88);
        assert_eq!(c.count(TaskKind::Crystallize), 73);
    }
}
