//! One evaluation trial: plan, ground, execute, check.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ControllerChoice, EvalConfig, GrounderChoice, PipelineVariant};
use super::flat::flat_sample;
use crate::backends::{BackendHandle, LatencyLog, LatencyRecord, Module};
use crate::controller::{execute_sequence, Driver, LinearPolicy, ScriptedController};
use crate::grounder::{ground, rule_ground, GroundingContext, Primitive};
use crate::plan_ir::instrument::in_execution_layer;
use crate::plan_ir::{Goal, Plan, Subtask, TaskKind, Verb, WorldSchema};
use crate::predictor::{predict_future, Denoiser};
use crate::reasoner::{
    audit_errors, avoid_constraint, direct_plan, fallback_refine, refine_loop, ReasonerConfig, RefinementState,
};
use crate::simulator::{check_success, dwell, observe, sample_prompt, sample_scene, LabWorld, Outcome};
use crate::tasks::TaskSpec;

/// Shared, read-only inputs of a sweep.
#[derive(Clone)]
pub struct TrialResources {
    pub backend: BackendHandle,
    pub policy: Option<LinearPolicy>,
    pub predictor: Option<Arc<Denoiser>>,
}

impl TrialResources {
    pub fn rule() -> Self {
        TrialResources { backend: BackendHandle::rule(), policy: None, predictor: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Scene or prompt could not be produced.
    Setup,
    Plan,
    Infeasible,
    Grounding,
    Precondition,
    Collision,
    Timeout,
    /// Everything ran but the success predicate is false.
    GoalUnmet,
}

impl FailureKind {
    pub const ALL: [FailureKind; 8] = [
        FailureKind::Setup,
        FailureKind::Plan,
        FailureKind::Infeasible,
        FailureKind::Grounding,
        FailureKind::Precondition,
        FailureKind::Collision,
        FailureKind::Timeout,
        FailureKind::GoalUnmet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::Setup => "setup",
            FailureKind::Plan => "plan",
            FailureKind::Infeasible => "infeasible",
            FailureKind::Grounding => "grounding",
            FailureKind::Precondition => "precondition",
            FailureKind::Collision => "collision",
            FailureKind::Timeout => "timeout",
            FailureKind::GoalUnmet => "goal_unmet",
        }
    }

    fn of(outcome: &Outcome) -> Option<Self> {
        match outcome {
            Outcome::Done => None,
            Outcome::PreconditionFailed(_) => Some(FailureKind::Precondition),
            Outcome::Collision(_) => Some(FailureKind::Collision),
            Outcome::Timeout => Some(FailureKind::Timeout),
        }
    }
}

/// Coordinates of one trial in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialId {
    pub task: TaskKind,
    pub prompt: usize,
    pub scene: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: TrialId,
    pub prompt: String,
    pub success: bool,
    pub failure: Option<FailureKind>,
    pub detail: String,
    pub e1: bool,
    pub e2: bool,
    pub plan: Vec<String>,
    pub phi_iterations: usize,
    pub fallback_rounds: usize,
    /// Active constraint count when the last fallback round ran.
    pub pack_size: usize,
    pub ticks: u64,
    #[serde(skip)]
    pub latency: Vec<LatencyRecord>,
}

/// Stable per-trial seed.
pub fn trial_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn task_index(kind: TaskKind) -> u64 {
    TaskKind::TEMPLATED.iter().position(|k| *k == kind).unwrap_or(TaskKind::TEMPLATED.len()) as u64
}

const SCENE: u64 = 1;
const PROMPT: u64 = 2;
const DEFECT: u64 = 3;
const PREDICT: u64 = 4;

/// Binding variant, prompt text and scene of a trial.
pub fn trial_setup(config: &EvalConfig, id: TrialId) -> Result<(TaskSpec, String, LabWorld), String> {
    let spec = TaskSpec::variant(id.task, id.prompt);
    let k = task_index(id.task);
    let prompt = sample_prompt(&spec, trial_seed(config.seed, &[PROMPT, k, id.prompt as u64])).map_err(|e| e.to_string())?;
    let world = sample_scene(&spec, trial_seed(config.seed, &[SCENE, k, id.prompt as u64, id.scene as u64]))
        .map_err(|e| e.to_string())?;
    Ok((spec, prompt, world))
}

/// Marks one graspable object as physically ungraspable with probability
/// `rate`. Returns its id.
fn apply_defect(world: &mut LabWorld, rate: f64, seed: u64) -> Option<String> {
    if rate <= 0.0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.random::<f64>() >= rate {
        return None;
    }
    let ids: Vec<String> = world.objects.iter().filter(|o| o.graspable).map(|o| o.id.clone()).collect();
    if ids.is_empty() {
        return None;
    }
    let id = ids[rng.random_range(0..ids.len())].clone();
    world.object_mut(&id).expect("object exists").graspable = false;
    Some(id)
}

fn driver_for(variant: &PipelineVariant, res: &TrialResources) -> Result<Box<dyn Driver>, String> {
    match variant.controller {
        ControllerChoice::Scripted => Ok(Box::new(ScriptedController::default())),
        ControllerChoice::Learned => {
            res.policy.clone().map(|p| Box::new(p) as Box<dyn Driver>).ok_or_else(|| "learned controller requested but no policy is loaded".to_string())
        }
    }
}

struct StepFailure {
    kind: FailureKind,
    detail: String,
    /// Object the gripper failed to close on, when that was the cause.
    grasp_target: Option<String>,
}

/// Whether the station effects of a subtask need an idle tick.
fn needs_dwell(step: &Subtask) -> bool {
    matches!(step.verb, Some(Verb::Wait | Verb::Weigh | Verb::Shake))
}

struct ExecCtx<'a> {
    variant: &'a PipelineVariant,
    res: &'a TrialResources,
    backend: &'a BackendHandle,
    latency: &'a LatencyLog,
    horizon: usize,
    seed: u64,
}

/// Grounds and runs `steps` in order, skipping the ones already completed.
fn execute_steps(
    world: &mut LabWorld,
    steps: &[Subtask],
    completed: &mut Vec<String>,
    driver: &mut dyn Driver,
    cx: &ExecCtx<'_>,
    ticks: &mut u64,
) -> Result<(), StepFailure> {
    let mut skip: Vec<String> = completed.clone();
    for (i, step) in steps.iter().enumerate() {
        let text = step.normalized_text();
        if let Some(pos) = skip.iter().position(|s| *s == text) {
            skip.remove(pos);
            continue;
        }
        let obs = observe(world);
        let predicted = match (&cx.res.predictor, cx.variant.use_predictor) {
            (Some(model), true) => {
                let start = Instant::now();
                let p = predict_future(model, &obs.state, &step.text, cx.horizon, cx.seed.wrapping_add(i as u64)).ok();
                cx.latency.record(Module::Mp, start.elapsed().as_secs_f64() * 1000.0, false);
                p
            }
            _ => None,
        };
        let ctx = GroundingContext { subtask: step.clone(), observation: obs, predicted };
        let seq = match cx.variant.grounder {
            GrounderChoice::Rule => {
                let start = Instant::now();
                let s = rule_ground(&ctx);
                cx.latency.record(Module::Vlm, start.elapsed().as_secs_f64() * 1000.0, false);
                s
            }
            GrounderChoice::Backend => ground(&ctx, cx.backend).map_err(|e| StepFailure {
                kind: FailureKind::Grounding,
                detail: e.to_string(),
                grasp_target: None,
            })?,
        };
        let r = execute_sequence(world, &seq, driver, false).map_err(|e| StepFailure {
            kind: FailureKind::Grounding,
            detail: e.to_string(),
            grasp_target: None,
        })?;
        *ticks += u64::from(r.ticks);
        if r.ticks > 0 {
            cx.latency.record(Module::Rl, r.tick_ms, true);
        }
        if let Some(kind) = FailureKind::of(&r.outcome) {
            let failed = r.failed_index.and_then(|k| seq.primitives.get(k));
            let grasp_target = match failed {
                Some(Primitive::Grasp { engage: true }) => world.last_target.clone(),
                _ => None,
            };
            return Err(StepFailure { kind, detail: format!("step {} '{}': {:?}", i + 1, step.text, r.outcome), grasp_target });
        }
        if needs_dwell(step) {
            dwell(world);
        }
        completed.push(text);
    }
    Ok(())
}

fn base_record(id: TrialId, prompt: String) -> TrialRecord {
    TrialRecord {
        id,
        prompt,
        success: false,
        failure: None,
        detail: String::new(),
        e1: false,
        e2: false,
        plan: Vec::new(),
        phi_iterations: 0,
        fallback_rounds: 0,
        pack_size: 0,
        ticks: 0,
        latency: Vec::new(),
    }
}

fn fail(mut rec: TrialRecord, kind: FailureKind, detail: impl Into<String>) -> TrialRecord {
    rec.success = false;
    rec.failure = Some(kind);
    rec.detail = detail.into();
    rec
}

/// Runs one trial. Every error is folded into the record.
pub fn run_trial(config: &EvalConfig, id: TrialId, res: &TrialResources) -> TrialRecord {
    let variant = &config.variant;
    let (spec, prompt, mut world) = match trial_setup(config, id) {
        Ok(s) => s,
        Err(e) => return fail(base_record(id, String::new()), FailureKind::Setup, e),
    };
    let rec = base_record(id, prompt.clone());
    let latency = Arc::new(LatencyLog::default());
    let backend = res.backend.with_log(latency.clone());
    let schema = world.schema();
    let k = task_index(id.task);
    let seed = trial_seed(config.seed, &[k, id.prompt as u64, id.scene as u64]);
    apply_defect(&mut world, config.defect_rate, trial_seed(seed, &[DEFECT]));
    let mut driver = match driver_for(variant, res) {
        Ok(d) => d,
        Err(e) => return fail(rec, FailureKind::Setup, e),
    };
    let mut rec = if variant.flat {
        run_flat(rec, &prompt, &schema, &mut world, driver.as_mut(), &backend, &latency)
    } else {
        run_factorized(rec, config, &prompt, &schema, &mut world, driver.as_mut(), res, &backend, &latency, seed)
    };
    if rec.failure.is_none() {
        rec.success = check_success(&world, &spec);
        if !rec.success {
            rec.failure = Some(FailureKind::GoalUnmet);
            rec.detail = "success predicate false after execution".into();
        }
    }
    rec.latency.extend(latency.snapshot());
    rec
}

fn run_flat(
    mut rec: TrialRecord,
    prompt: &str,
    schema: &WorldSchema,
    world: &mut LabWorld,
    driver: &mut dyn Driver,
    backend: &BackendHandle,
    latency: &LatencyLog,
) -> TrialRecord {
    let digest = observe(world).digest;
    let seq = match flat_sample(prompt, schema, &digest, backend) {
        Ok(s) => s,
        Err(e) => return fail(rec, FailureKind::Plan, e),
    };
    rec.plan = seq.primitives.iter().map(|p| p.to_string()).collect();
    let r = match execute_sequence(world, &seq, driver, false) {
        Ok(r) => r,
        Err(e) => return fail(rec, FailureKind::Grounding, e.to_string()),
    };
    rec.ticks = u64::from(r.ticks);
    if r.ticks > 0 {
        latency.record(Module::Rl, r.tick_ms, true);
    }
    if let Some(kind) = FailureKind::of(&r.outcome) {
        return fail(rec, kind, format!("primitive {:?}: {:?}", r.failed_index, r.outcome));
    }
    dwell(world);
    rec
}

#[allow(clippy::too_many_arguments)]
fn run_factorized(
    mut rec: TrialRecord,
    config: &EvalConfig,
    prompt: &str,
    schema: &WorldSchema,
    world: &mut LabWorld,
    driver: &mut dyn Driver,
    res: &TrialResources,
    backend: &BackendHandle,
    latency: &LatencyLog,
    seed: u64,
) -> TrialRecord {
    let variant = &config.variant;
    let goal = match Goal::new(prompt) {
        Ok(g) => g,
        Err(e) => return fail(rec, FailureKind::Setup, e.to_string()),
    };
    let rcfg = ReasonerConfig {
        max_phi_iters: config.max_phi_iters,
        stages: variant.stages,
        fallback: variant.fallback,
        ..ReasonerConfig::default()
    };
    let plan: Plan = if variant.use_task_planner {
        match refine_loop(&goal, schema, &rcfg, backend) {
            Ok(out) => {
                rec.phi_iterations = out.iterations;
                out.plan
            }
            Err(e) => return fail(rec, FailureKind::Plan, e.to_string()),
        }
    } else {
        match direct_plan(&goal, schema, backend) {
            Ok(p) => p,
            Err(e) => return fail(rec, FailureKind::Plan, e.to_string()),
        }
    };
    let audit = audit_errors(&plan, schema);
    rec.e1 = audit.has_e1();
    rec.e2 = audit.has_e2();
    rec.plan = plan.step_texts().iter().map(|s| s.to_string()).collect();
    let cx = ExecCtx { variant, res, backend, latency, horizon: config.horizon, seed: trial_seed(seed, &[PREDICT]) };
    let mut state = RefinementState::new(plan);
    let mut completed = Vec::new();
    let mut ticks = 0u64;
    loop {
        let steps = state.plan.steps.clone();
        let outcome = in_execution_layer(|| execute_steps(world, &steps, &mut completed, driver, &cx, &mut ticks));
        rec.ticks = ticks;
        let failure = match outcome {
            Ok(()) => return rec,
            Err(f) => f,
        };
        let Some(target) = failure.grasp_target.clone().filter(|_| variant.fallback) else {
            return fail(rec, failure.kind, failure.detail);
        };
        let before = state.rounds;
        state = fallback_refine(state, avoid_constraint(&target), schema, &rcfg, backend);
        rec.fallback_rounds = state.rounds;
        rec.pack_size = rcfg.active_pack(&state.discovered_constraints).len();
        rec.plan = state.plan.step_texts().iter().map(|s| s.to_string()).collect();
        if state.infeasible {
            return fail(rec, FailureKind::Infeasible, format!("no plan avoids {target}"));
        }
        if state.rounds == before {
            return fail(rec, failure.kind, failure.detail);
        }
    }
}

/// Failure counts keyed by kind name, every kind present.
pub fn failure_breakdown(records: &[TrialRecord]) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> = FailureKind::ALL.iter().map(|k| (k.as_str().to_string(), 0)).collect();
    for r in records {
        if let Some(k) = r.failure {
            *out.entry(k.as_str().to_string()).or_default() += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(task: TaskKind) -> EvalConfig {
        EvalConfig { tasks: vec![task], ..EvalConfig::default() }
    }

    #[test]
    fn rule_pipeline_succeeds_on_each_task() {
        let res = TrialResources::rule();
        for task in TaskKind::TEMPLATED {
            for prompt in 0..3 {
                let r = run_trial(&cfg(task), TrialId { task, prompt, scene: 0 }, &res);
                assert!(r.success, "{task} prompt {prompt}: {:?} {} {:?}", r.failure, r.detail, r.plan);
                assert!(!r.e1 && !r.e2);
            }
        }
    }

    #[test]
    fn flat_baseline_succeeds_without_noise() {
        let res = TrialResources::rule();
        for task in [TaskKind::Mix, TaskKind::Crystallize, TaskKind::PickPlace] {
            let c = EvalConfig { variant: PipelineVariant::flat(), ..cfg(task) };
            let r = run_trial(&c, TrialId { task, prompt: 0, scene: 1 }, &res);
            assert!(r.success, "{task}: {:?} {}", r.failure, r.detail);
        }
    }

    #[test]
    fn learned_controller_without_policy_is_a_setup_failure() {
        let mut c = cfg(TaskKind::Pour);
        c.variant.controller = ControllerChoice::Learned;
        let r = run_trial(&c, TrialId { task: TaskKind::Pour, prompt: 0, scene: 0 }, &TrialResources::rule());
        assert_eq!(r.failure, Some(FailureKind::Setup));
    }

    #[test]
    fn trials_are_reproducible() {
        let c = cfg(TaskKind::Crystallize);
        let id = TrialId { task: TaskKind::Crystallize, prompt: 1, scene: 4 };
        let a = run_trial(&c, id, &TrialResources::rule());
        let b = run_trial(&c, id, &TrialResources::rule());
        assert_eq!((a.success, a.plan, a.ticks), (b.success, b.plan, b.ticks));
    }
}
