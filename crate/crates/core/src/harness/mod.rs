//! Evaluation protocol, ablations, decoupling check and dataset generation.

mod config;
mod data;
mod eval;
mod flat;
mod trial;

use thiserror::Error;

pub use config::{BackendChoice, ControllerChoice, EvalConfig, GrounderChoice, PipelineVariant};
pub use data::{
    generate_datasets, generate_task, load_triples, rollout, DataGenConfig, DatasetFiles, Episode, RolloutSummary, TaskDataset,
};
pub use eval::{
    ablation_checks, ablation_config, decoupling_config, decoupling_experiment, noise_sweep, reference_success, run_ablation_grid, run_task_eval,
    summarize, trial_ids, AblationReport, Check, DecouplingReport, SuccessReport, TaskReport,
};
pub use flat::{flat_request, flat_sample};
pub(crate) use flat::flat_rule_respond;
pub use trial::{failure_breakdown, run_trial, trial_seed, trial_setup, FailureKind, TrialId, TrialRecord, TrialResources};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("rollout: {0}")]
    Rollout(String),
    #[error(transparent)]
    Backend(#[from] crate::backends::BackendError),
    #[error(transparent)]
    Plan(#[from] crate::plan_ir::PlanError),
    #[error(transparent)]
    Reasoner(#[from] crate::reasoner::ReasonerError),
    #[error(transparent)]
    Sim(#[from] crate::simulator::SimError),
    #[error(transparent)]
    Predictor(#[from] crate::predictor::PredictorError),
    #[error(transparent)]
    Controller(#[from] crate::controller::ControllerError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
