//! Python bindings. Structured results cross the boundary as plain dicts and lists.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::str::FromStr;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use labplan::backends::{latency_report as core_latency_report, BackendHandle, LatencyRecord, Module};
use labplan::controller::{evaluate_move, train_policy, LinearPolicy, ScriptedController, TrainConfig, HELD_OUT_BASE};
use labplan::grounder::{parse_primitives, render_primitives, rule_ground, GroundingContext};
use labplan::harness::{run_task_eval, run_trial, trial_setup, EvalConfig, PipelineVariant, TrialId, TrialResources};
use labplan::plan_ir::{parse_instruction, parse_plan, render_plan, Goal, TaskKind};
use labplan::predictor::{make_schedule, predict_future, train, Denoiser, PredictorConfig};
use labplan::reasoner::{audit_errors, refine_loop, ReasonerConfig};
use labplan::simulator::{check_success, observe, sample_scene, state_vec, step_primitive, trace_hash, LabWorld, TickRecord};
use labplan::tasks::TaskSpec;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (s,))
}

fn task(name: &str) -> PyResult<TaskKind> {
    TaskKind::from_str(name).map_err(err)
}

fn eval_config(tasks: Vec<String>, prompts: usize, scenes: usize, variant: &str, seed: u64, corruption: f64) -> PyResult<EvalConfig> {
    let tasks = if tasks.is_empty() { TaskKind::TEMPLATED.to_vec() } else { tasks.iter().map(|t| task(t)).collect::<PyResult<_>>()? };
    Ok(EvalConfig {
        tasks,
        prompts_per_task: prompts,
        scenes_per_prompt: scenes,
        variant: PipelineVariant::named(variant).map_err(err)?,
        seed,
        corruption,
        ..EvalConfig::default()
    })
}

/// Symbolic plan with its ordered subtasks.
#[pyclass(name = "Plan", module = "labplan", skip_from_py_object)]
#[derive(Clone)]
struct PyPlan {
    inner: labplan::plan_ir::Plan,
}

#[pymethods]
impl PyPlan {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyPlan { inner: parse_plan(text, None).map_err(err)? })
    }

    #[getter]
    fn steps(&self) -> Vec<String> {
        self.inner.step_texts().iter().map(|s| s.to_string()).collect()
    }

    #[getter]
    fn objective(&self) -> String {
        self.inner.core_objective.clone()
    }

    fn render(&self) -> String {
        render_plan(&self.inner)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.steps.len()
    }

    fn __repr__(&self) -> String {
        format!("Plan({} steps)", self.inner.steps.len())
    }
}

/// A sampled lab scene that primitives can be executed in.
#[pyclass(name = "World", module = "labplan", skip_from_py_object)]
#[derive(Clone)]
struct PyWorld {
    inner: LabWorld,
    spec: TaskSpec,
    trace: Vec<TickRecord>,
}

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (task_name, seed = 0, variant = 0))]
    fn new(task_name: &str, seed: u64, variant: usize) -> PyResult<Self> {
        let spec = TaskSpec::variant(task(task_name)?, variant);
        let inner = sample_scene(&spec, seed).map_err(err)?;
        Ok(PyWorld { inner, spec, trace: Vec::new() })
    }

    /// Runs primitive DSL text with the scripted controller; returns the outcomes.
    fn execute<'py>(&mut self, py: Python<'py>, primitives: &str) -> PyResult<Bound<'py, PyAny>> {
        let seq = parse_primitives(primitives).map_err(err)?;
        let mut ctl = ScriptedController::default();
        let mut outcomes = Vec::new();
        for p in &seq.primitives {
            let r = step_primitive(&mut self.inner, p, &mut ctl).map_err(err)?;
            self.trace.push(TickRecord::capture(&self.inner, &p.to_string()));
            let done = r.outcome.is_done();
            outcomes.push(r.outcome);
            if !done {
                break;
            }
        }
        to_py(py, &outcomes)
    }

    /// Grounds one instruction with the rule grounder against the current scene.
    fn ground(&self, instruction: &str) -> String {
        let step = parse_instruction(1, instruction, None);
        render_primitives(&rule_ground(&GroundingContext::new(step, observe(&self.inner))))
    }

    fn state(&self) -> Vec<f64> {
        state_vec(&self.inner).0
    }

    fn total_volume(&self) -> u64 {
        self.inner.total_volume()
    }

    fn success(&self) -> bool {
        check_success(&self.inner, &self.spec)
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn trace_hash(&self) -> String {
        trace_hash(&self.trace)
    }

    fn schema<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.schema())
    }
}

/// Plans `goal`, or the trial's sampled prompt, with the rule backend.
#[pyfunction]
#[pyo3(signature = (task_name, prompt = 0, scene = 0, goal = None, seed = 0))]
fn plan(task_name: &str, prompt: usize, scene: usize, goal: Option<&str>, seed: u64) -> PyResult<PyPlan> {
    let kind = task(task_name)?;
    let cfg = EvalConfig { tasks: vec![kind], seed, ..EvalConfig::default() };
    let (_, sampled, world) = trial_setup(&cfg, TrialId { task: kind, prompt, scene }).map_err(err)?;
    let goal = Goal::new(goal.unwrap_or(&sampled)).map_err(err)?;
    let out = refine_loop(&goal, &world.schema(), &ReasonerConfig::default(), &BackendHandle::rule()).map_err(err)?;
    Ok(PyPlan { inner: out.plan })
}

/// E1/E2 step counts of a plan text against a task's scene schema.
#[pyfunction]
#[pyo3(signature = (plan_text, task_name, variant = 0))]
fn audit(plan_text: &str, task_name: &str, variant: usize) -> PyResult<(usize, usize)> {
    let schema = labplan::simulator::schema_for(&TaskSpec::variant(task(task_name)?, variant)).map_err(err)?;
    let plan = parse_plan(plan_text, Some(&schema)).map_err(err)?;
    let a = audit_errors(&plan, &schema);
    Ok((a.e1, a.e2))
}

#[pyfunction]
#[pyo3(signature = (task_name, prompt = 0, scene = 0, variant = "full", seed = 0, corruption = 0.0))]
fn trial<'py>(py: Python<'py>, task_name: &str, prompt: usize, scene: usize, variant: &str, seed: u64, corruption: f64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = eval_config(vec![task_name.to_string()], 1, 1, variant, seed, corruption)?;
    let res = TrialResources { backend: cfg.build_backend().map_err(err)?, policy: None, predictor: None };
    let rec = py.detach(|| run_trial(&cfg, TrialId { task: cfg.tasks[0], prompt, scene }, &res));
    to_py(py, &rec)
}

/// Evaluation sweep; an empty task list means every templated task.
#[pyfunction]
#[pyo3(signature = (tasks = Vec::new(), prompts = 20, scenes = 50, variant = "full", seed = 0, corruption = 0.0))]
fn evaluate<'py>(py: Python<'py>, tasks: Vec<String>, prompts: usize, scenes: usize, variant: &str, seed: u64, corruption: f64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = eval_config(tasks, prompts, scenes, variant, seed, corruption)?;
    let res = TrialResources { backend: cfg.build_backend().map_err(err)?, policy: None, predictor: None };
    let report = py.detach(|| run_task_eval(&cfg, &res)).map_err(err)?;
    to_py(py, &report)
}

/// `(beta, alpha_bar)` of the linear schedule with `steps` steps.
#[pyfunction]
fn noise_schedule(steps: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = make_schedule(steps).map_err(err)?;
    Ok((s.beta, s.alpha_bar))
}

/// State-space diffusion predictor.
#[pyclass(name = "Predictor", module = "labplan")]
struct PyPredictor {
    inner: Arc<Denoiser>,
}

#[pymethods]
impl PyPredictor {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(err)?;
        Ok(PyPredictor { inner: Arc::new(Denoiser::load(BufReader::new(f)).map_err(err)?) })
    }

    /// Trains on the triples under `data` (file or generated dataset directory).
    #[staticmethod]
    #[pyo3(signature = (data, steps = 6000, seed = 0))]
    fn train(py: Python<'_>, data: &str, steps: usize, seed: u64) -> PyResult<Self> {
        let triples = labplan::harness::load_triples(std::path::Path::new(data)).map_err(err)?;
        let cfg = PredictorConfig { train_steps: steps, seed, ..PredictorConfig::desk() };
        let (model, _) = py.detach(|| train(&triples, &cfg)).map_err(err)?;
        Ok(PyPredictor { inner: Arc::new(model) })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(BufWriter::new(File::create(path).map_err(err)?)).map_err(err)
    }

    #[pyo3(signature = (current, instruction, k = 8, seed = 0))]
    fn predict(&self, current: Vec<f64>, instruction: &str, k: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let cur = labplan::simulator::StateVec(current);
        let out = predict_future(&self.inner, &cur, instruction, k, seed).map_err(err)?;
        Ok(out.into_iter().map(|s| s.0).collect())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }
}

/// Linear Move policy.
#[pyclass(name = "Policy", module = "labplan")]
struct PyPolicy {
    inner: LinearPolicy,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    #[pyo3(signature = (budget = 8000, seed = 7))]
    fn train(py: Python<'_>, budget: usize, seed: u64) -> PyResult<Self> {
        let cfg = TrainConfig { budget, seed, ..TrainConfig::default() };
        let (inner, _) = py.detach(|| train_policy(&cfg)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(PyPolicy { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(err)?;
        Ok(PyPolicy { inner: LinearPolicy::load(BufReader::new(f)).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(BufWriter::new(File::create(path).map_err(err)?)).map_err(err)
    }

    /// Move success rate over held-out scenes.
    #[pyo3(signature = (scenes = 200))]
    fn evaluate(&self, scenes: u64) -> PyResult<f64> {
        let mut p = self.inner.clone();
        evaluate_move(&mut p, HELD_OUT_BASE..HELD_OUT_BASE + scenes).map_err(err)
    }
}

/// Per-module summary of `(module, ms, online)` samples.
#[pyfunction]
fn latency_report<'py>(py: Python<'py>, samples: Vec<(String, f64, bool)>) -> PyResult<Bound<'py, PyAny>> {
    let records = samples
        .into_iter()
        .map(|(m, ms, online)| Ok(LatencyRecord { module: Module::from_str(&m.to_ascii_uppercase()).map_err(err)?, ms, online }))
        .collect::<PyResult<Vec<_>>>()?;
    to_py(py, &core_latency_report(&records))
}

#[pymodule(name = "labplan")]
fn labplan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TASKS", TaskKind::TEMPLATED.iter().map(|k| k.as_str()).collect::<Vec<_>>())?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyPredictor>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(trial, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(noise_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(latency_report, m)?)?;
    Ok(())
}
