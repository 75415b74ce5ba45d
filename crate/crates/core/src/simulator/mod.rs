//! Deterministic 2-D kinematic lab world: discs on a unit square, a point
//! end-effector, containers holding whole-milliliter liquid volumes, and
//! three stations (balance, shaker, crystallization station).

mod exec;
pub mod geometry;
mod observe;
mod scene;
mod success;
mod symbolic;
mod trace;
mod world;

use thiserror::Error;

pub use exec::{dwell, observe_control, step_primitive, step_primitive_traced, ExecutionResult, Outcome, TickHook};
pub use observe::{
    denormalize, normalize, observe, scene_digest, state_vec, ContainerDigest, ObjectDigest,
    Observation, SceneDigest, StateVec, FILL_SLOTS, OBJECT_SLOTS, STATE_DIM,
};
pub use scene::{
    catalog, class_of, compatible_templates, complete_spec, sample_prompt, sample_scene,
    sample_scene_with, schema_for, CatalogItem, MAX_PLACEMENT_ATTEMPTS, ROUTE_MARGIN,
};
pub use success::check_success;
pub use symbolic::symbolic_execute;
pub use trace::{trace_hash, write_trace, ArmRecord, ObjectRecord, TickRecord};
pub use world::{
    default_stations, Arm, ContainerState, LabWorld, SimConfig, SimObject, Station, HOME,
    STATION_RADIUS,
};

use crate::plan_ir::TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown id '{0}'")]
    UnknownId(String),
    #[error("step {step}: '{id}' does not name anything in the scene")]
    UnresolvedReference { step: usize, id: String },
    #[error("scene placement failed after {attempts} attempts")]
    PlacementFailed { attempts: usize },
    #[error("no prompt pool for task {0}")]
    NoPool(TaskKind),
    #[error("bad task spec: {0}")]
    BadSpec(String),
}
