use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::world::LabWorld;
use crate::plan_ir::ObjectClass;

pub const STATE_DIM: usize = 12;
pub const OBJECT_SLOTS: usize = 3;
pub const FILL_SLOTS: usize = 3;

/// Normalized world-state vector: arm x,y; gripper; three object x,y pairs;
/// three container fill fractions. Every component lies in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVec(pub Vec<f64>);

impl StateVec {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn mse(&self, other: &StateVec) -> f64 {
        let n = self.0.len().max(1) as f64;
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
    }
}

/// Maps a value in `[0, 1]` to `[-1, 1]`.
pub fn normalize(v: f64) -> f64 {
    (2.0 * v - 1.0).clamp(-1.0, 1.0)
}

pub fn denormalize(v: f64) -> f64 {
    (v + 1.0) / 2.0
}

/// Projects a world onto the fixed-dimension state vector. Object slots follow
/// catalog order; missing slots are zero.
pub fn state_vec(world: &LabWorld) -> StateVec {
    let mut v = Vec::with_capacity(STATE_DIM);
    v.push(normalize(world.arm.ee[0] / world.bounds[0]));
    v.push(normalize(world.arm.ee[1] / world.bounds[1]));
    v.push(if world.arm.engaged { 1.0 } else { -1.0 });
    let mut objs = world.objects.iter();
    for _ in 0..OBJECT_SLOTS {
        match objs.next() {
            Some(o) => {
                v.push(normalize(o.pos[0] / world.bounds[0]));
                v.push(normalize(o.pos[1] / world.bounds[1]));
            }
            None => v.extend([0.0, 0.0]),
        }
    }
    let mut containers = world.objects.iter().filter(|o| o.is_container());
    for _ in 0..FILL_SLOTS {
        match containers.next() {
            Some(c) => v.push(normalize(world.fill_fraction(&c.id).min(1.0))),
            None => v.push(0.0),
        }
    }
    StateVec(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDigest {
    pub id: String,
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    /// Symbolic resting place: container, station, neighbor object, `hand` or `table`.
    pub at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerDigest {
    pub contents: BTreeMap<String, u32>,
    pub mixed: bool,
    pub crystallized: bool,
    pub shaken: bool,
}

/// Symbolic scene summary handed to the grounder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDigest {
    pub held: Option<String>,
    pub objects: Vec<ObjectDigest>,
    pub containers: BTreeMap<String, ContainerDigest>,
    pub stations: Vec<String>,
}

impl SceneDigest {
    pub fn object(&self, id: &str) -> Option<&ObjectDigest> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn container_of_liquid(&self, liquid: &str) -> Option<&str> {
        self.containers
            .iter()
            .find(|(_, c)| c.contents.get(liquid).is_some_and(|v| *v > 0))
            .map(|(id, _)| id.as_str())
    }

    pub fn resolves(&self, id: &str) -> bool {
        self.object(id).is_some() || self.stations.iter().any(|s| s == id) || self.container_of_liquid(id).is_some()
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

pub fn scene_digest(world: &LabWorld) -> SceneDigest {
    let sym = world.sym_state();
    SceneDigest {
        held: world.arm.held.clone(),
        objects: world
            .objects
            .iter()
            .map(|o| ObjectDigest {
                id: o.id.clone(),
                class: o.class,
                x: round3(o.pos[0]),
                y: round3(o.pos[1]),
                at: sym.location.get(&o.id).cloned().unwrap_or_default(),
            })
            .collect(),
        containers: world
            .containers
            .iter()
            .map(|(id, c)| {
                (
                    id.clone(),
                    ContainerDigest {
                        contents: c.contents.iter().filter(|(_, v)| **v > 0).map(|(l, v)| (l.clone(), *v)).collect(),
                        mixed: c.mixed,
                        crystallized: c.crystallized,
                        shaken: c.shaken,
                    },
                )
            })
            .collect(),
        stations: world.stations.iter().map(|s| s.id.clone()).collect(),
    }
}

/// StateVec projection plus symbolic digest of one world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub state: StateVec,
    pub digest: SceneDigest,
}

pub fn observe(world: &LabWorld) -> Observation {
    Observation { state: state_vec(world), digest: scene_digest(world) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan_ir::TaskKind;
    use crate::simulator::sample_scene;
    use crate::tasks::TaskSpec;

    #[test]
    fn state_vec_is_bounded_and_invertible() {
        let w = sample_scene(&TaskSpec::variant(TaskKind::Mix, 0), 3).unwrap();
        let s = state_vec(&w);
        assert_eq!(s.dim(), STATE_DIM);
        assert!(s.0.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!((denormalize(s.0[0]) - w.arm.ee[0]).abs() < 1e-12);
        assert!((denormalize(s.0[3]) - w.objects[0].pos[0]).abs() < 1e-12);
    }
}
