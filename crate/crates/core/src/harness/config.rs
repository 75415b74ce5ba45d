use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::backends::{
    Backend, BackendHandle, Corruption, CorruptingBackend, RecordingBackend, RemoteBackend, RemoteConfig, ReplayBackend,
    RuleBackend,
};
use crate::plan_ir::TaskKind;
use crate::reasoner::CotStages;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrounderChoice {
    /// Built-in rule table, called in-process.
    Rule,
    /// Prompted through the configured backend, with one repair round.
    Backend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerChoice {
    Scripted,
    Learned,
}

/// One pipeline configuration of the ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineVariant {
    pub id: String,
    /// Human label of the configuration this variant stands in for.
    pub label: String,
    pub stages: CotStages,
    pub use_predictor: bool,
    /// Off: a single direct decomposition with no staged reasoning and no Φ.
    pub use_task_planner: bool,
    pub grounder: GrounderChoice,
    pub controller: ControllerChoice,
    /// Sample the whole primitive sequence from the goal, bypassing the plan.
    pub flat: bool,
    /// Replan around objects whose grasp fails.
    pub fallback: bool,
}

impl Default for PipelineVariant {
    fn default() -> Self {
        PipelineVariant::full()
    }
}

impl PipelineVariant {
    pub fn full() -> Self {
        PipelineVariant {
            id: "full".into(),
            label: "staged planner + predictor + grounder + controller".into(),
            stages: CotStages::default(),
            use_predictor: true,
            use_task_planner: true,
            grounder: GrounderChoice::Backend,
            controller: ControllerChoice::Scripted,
            flat: false,
            fallback: true,
        }
    }

    pub fn no_predictor() -> Self {
        PipelineVariant { id: "no-predictor".into(), label: "staged planner, no predictor".into(), use_predictor: false, ..Self::full() }
    }

    /// Predictor and grounder kept, task-level planner removed.
    pub fn no_task_planner() -> Self {
        PipelineVariant {
            id: "no-task-planner".into(),
            label: "predictor + grounder, direct subtasks".into(),
            stages: CotStages::none(),
            use_task_planner: false,
            ..Self::full()
        }
    }

    /// Neither planner nor predictor.
    pub fn direct() -> Self {
        PipelineVariant {
            id: "direct".into(),
            label: "direct subtasks, no predictor".into(),
            use_predictor: false,
            ..Self::no_task_planner()
        }
    }

    pub fn flat() -> Self {
        PipelineVariant {
            id: "flat".into(),
            label: "primitives sampled from the goal".into(),
            stages: CotStages::none(),
            use_predictor: false,
            use_task_planner: false,
            flat: true,
            fallback: false,
            ..Self::full()
        }
    }

    /// Staged planner with stage `n` (1-4) switched off.
    pub fn without_stage(n: usize) -> Result<Self, HarnessError> {
        let mut v = Self::full();
        match n {
            1 => v.stages.interpret = false,
            2 => v.stages.prerequisites = false,
            3 => v.stages.decompose = false,
            4 => v.stages.validate = false,
            _ => return Err(HarnessError::Config(format!("no reasoning stage {n}"))),
        }
        v.id = format!("cot-wo-step{n}");
        v.label = format!("staged planner without step {n}");
        Ok(v)
    }

    pub fn named(id: &str) -> Result<Self, HarnessError> {
        Ok(match id {
            "full" => Self::full(),
            "no-predictor" => Self::no_predictor(),
            "no-task-planner" => Self::no_task_planner(),
            "direct" => Self::direct(),
            "flat" => Self::flat(),
            s if s.starts_with("cot-wo-step") => {
                let n = s["cot-wo-step".len()..].parse().map_err(|_| HarnessError::Config(format!("unknown variant '{id}'")))?;
                Self::without_stage(n)?
            }
            _ => return Err(HarnessError::Config(format!("unknown variant '{id}'"))),
        })
    }

    /// Every named variant, in report order.
    pub fn grid() -> Vec<Self> {
        let mut v = vec![Self::full(), Self::no_predictor(), Self::no_task_planner(), Self::direct(), Self::flat()];
        v.extend((1..=4).map(|n| Self::without_stage(n).expect("stage in range")));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendChoice {
    Rule,
    /// HTTP endpoint configured through the environment.
    Remote,
    /// Answers from a recorded transcript.
    Replay { path: PathBuf },
}

impl Default for BackendChoice {
    fn default() -> Self {
        BackendChoice::Rule
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub tasks: Vec<TaskKind>,
    pub prompts_per_task: usize,
    pub scenes_per_prompt: usize,
    pub variant: PipelineVariant,
    pub backend: BackendChoice,
    /// Append every backend exchange to this transcript.
    pub record_transcript: Option<PathBuf>,
    /// Per-line corruption of planner output.
    pub corruption: f64,
    /// Probability that one graspable object is physically ungraspable while the
    /// schema still lists it as graspable.
    pub defect_rate: f64,
    pub seed: u64,
    pub max_phi_iters: usize,
    /// Predicted frames per subtask.
    pub horizon: usize,
    pub predictor_path: Option<PathBuf>,
    pub policy_path: Option<PathBuf>,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tasks: TaskKind::TEMPLATED.to_vec(),
            prompts_per_task: 20,
            scenes_per_prompt: 50,
            variant: PipelineVariant::full(),
            backend: BackendChoice::Rule,
            record_transcript: None,
            corruption: 0.0,
            defect_rate: 0.0,
            seed: 0,
            max_phi_iters: 5,
            horizon: crate::predictor::DEFAULT_HORIZON,
            predictor_path: None,
            policy_path: None,
            threads: None,
        }
    }
}

impl EvalConfig {
    pub fn trials_per_task(&self) -> usize {
        self.prompts_per_task * self.scenes_per_prompt
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.tasks.contains(&TaskKind::Freeform) {
            return Err(HarnessError::Config("freeform goals have no scenes to evaluate".into()));
        }
        if !(0.0..=1.0).contains(&self.corruption) || !(0.0..=1.0).contains(&self.defect_rate) {
            return Err(HarnessError::Config("corruption and defect_rate must lie in [0, 1]".into()));
        }
        if self.max_phi_iters == 0 {
            return Err(HarnessError::Config("max_phi_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the JSON encoding, first 16 hex digits.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    /// Backend stack: base engine, optional transcript recording, optional corruption.
    pub fn build_backend(&self) -> Result<BackendHandle, HarnessError> {
        let mut inner: Arc<dyn Backend> = match &self.backend {
            BackendChoice::Rule => Arc::new(RuleBackend),
            BackendChoice::Remote => Arc::new(RemoteBackend::new(RemoteConfig::from_env()?)),
            BackendChoice::Replay { path } => Arc::new(ReplayBackend::open(path)?),
        };
        if let Some(path) = &self.record_transcript {
            inner = Arc::new(RecordingBackend::new(inner, path)?);
        }
        if self.corruption > 0.0 {
            inner = Arc::new(CorruptingBackend::planner_noise(inner, Corruption { rate: self.corruption, seed: self.seed }));
        }
        Ok(BackendHandle::new(inner))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_thousand_trials() {
        let c = EvalConfig::default();
        assert_eq!(c.trials_per_task(), 1000);
        assert_eq!(c.tasks.len(), 7);
        c.validate().unwrap();
    }

    #[test]
    fn named_variants_round_trip() {
        for v in PipelineVariant::grid() {
            assert_eq!(PipelineVariant::named(&v.id).unwrap(), v);
        }
        assert!(PipelineVariant::named("cot-wo-step9").is_err());
        assert!(!PipelineVariant::without_stage(2).unwrap().stages.prerequisites);
    }

    #[test]
    fn config_parses_from_toml() {
        let c: EvalConfig = toml::from_str(
            "prompts_per_task = 2\nscenes_per_prompt = 3\ntasks = [\"mix\"]\n[variant]\nid = \"x\"\nuse_predictor = false\n",
        )
        .unwrap();
        assert_eq!(c.trials_per_task(), 6);
        assert_eq!(c.tasks, vec![TaskKind::Mix]);
        assert!(!c.variant.use_predictor);
        assert!(c.variant.use_task_planner);
        assert_ne!(c.fingerprint(), EvalConfig::default().fingerprint());
    }
}
