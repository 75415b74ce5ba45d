//! Planning-and-execution engine for long-horizon lab manipulation.
//!
//! Goals are compiled into symbolic plans (`reasoner`), checked against
//! constraint packs, lowered to move/grasp/pour/stir primitives (`grounder`)
//! and executed in a 2-D kinematic lab world (`simulator`) by a scripted or
//! learned controller (`controller`). A small diffusion model (`predictor`)
//! forecasts future states as grounding context.

pub mod plan_ir;
pub mod tasks;
pub mod controller;
pub mod predictor;
pub mod grounder;
pub mod simulator;
pub mod backends;
pub mod reasoner;
pub mod harness;
