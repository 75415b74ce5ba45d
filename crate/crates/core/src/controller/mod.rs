//! Low-level execution: a proportional oracle and a learned continuous policy
//! driving the end-effector tick by tick.

mod execute;
mod policy;
mod replay;
mod reward;
mod scripted;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use execute::{execute_sequence, SequenceResult};
pub use policy::{LinearPolicy, PolicyError, FEATURES};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{reward, RewardWeights, TickEvents};
pub use scripted::{scripted_step, ScriptedController};
pub use train::{
    evaluate_move, move_env, train_policy, Algorithm, MoveEnv, TrainConfig, TrainLog, TrainStats,
    HELD_OUT_BASE,
};

/// Maximum end-effector speed in meters per tick.
pub const V_MAX: f64 = 0.05;

/// Controller-local view of the world for one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlObservation {
    pub ee: [f64; 2],
    pub to_target: [f64; 2],
    pub engaged: bool,
    /// Vector from the end-effector to the nearest obstacle's center.
    pub obstacle: [f64; 2],
}

impl ControlObservation {
    pub fn distance(&self) -> f64 {
        self.to_target[0].hypot(self.to_target[1])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub velocity: [f64; 2],
    pub grip: bool,
}

impl ControlAction {
    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    /// Scales the velocity down to `v_max`; non-finite velocities become zero.
    pub fn clamped(mut self, v_max: f64) -> Self {
        if !self.velocity.iter().all(|v| v.is_finite()) {
            self.velocity = [0.0, 0.0];
        }
        let s = self.speed();
        if s > v_max {
            let k = v_max / s;
            self.velocity = [self.velocity[0] * k, self.velocity[1] * k];
        }
        self
    }
}

/// Anything that turns observations into velocity commands.
pub trait Driver {
    fn act(&mut self, obs: &ControlObservation) -> ControlAction;

    fn name(&self) -> &str;
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("training diverged at episode {episode}: return {value}")]
    DivergedTraining { episode: usize, value: f64 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] crate::simulator::SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
