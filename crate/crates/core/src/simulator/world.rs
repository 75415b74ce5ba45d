use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::geometry::{dist, disc_gap, discs_overlap, Vec2};
use super::SimError;
use crate::controller::RewardWeights;
use crate::plan_ir::{LiquidInfo, ObjectClass, ObjectInfo, SymState, WorldSchema, HAND, TABLE};

/// Tunable thresholds. Distances in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub eps_reach: f64,
    pub eps_grasp: f64,
    pub eps_pour: f64,
    pub eps_place: f64,
    pub tick_budget: u32,
    pub v_max: f64,
    /// Fraction of poured volume lost; 0 keeps volumes exactly conserved.
    pub spill_fraction: f64,
    /// Per-container capacity used to normalize fill fractions.
    pub capacity_ml: u32,
    pub density_g_per_ml: f64,
    pub tare_g: f64,
    pub reward: RewardWeights,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            eps_reach: 0.02,
            eps_grasp: 0.03,
            eps_pour: 0.06,
            eps_place: 0.05,
            tick_budget: 400,
            v_max: crate::controller::V_MAX,
            spill_fraction: 0.0,
            capacity_ml: 100,
            density_g_per_ml: 0.1,
            tare_g: 20.0,
            reward: RewardWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub id: String,
    pub class: ObjectClass,
    pub pos: Vec2,
    pub radius: f64,
    pub graspable: bool,
    /// Container this object sits in, if any.
    #[serde(default)]
    pub inside: Option<String>,
}

impl SimObject {
    pub fn is_container(&self) -> bool {
        self.class.is_container()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerState {
    /// Liquid id to volume in whole milliliters.
    pub contents: BTreeMap<String, u32>,
    pub mixed: bool,
    pub crystallized: bool,
    pub shaken: bool,
}

impl ContainerState {
    pub fn volume(&self) -> u32 {
        self.contents.values().sum()
    }

    pub fn liquid_count(&self) -> usize {
        self.contents.values().filter(|v| **v > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub ee: Vec2,
    pub engaged: bool,
    pub held: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub center: Vec2,
    pub radius: f64,
}

pub const HOME: Vec2 = [0.5, 0.5];
pub const STATION_RADIUS: f64 = 0.06;

pub fn default_stations() -> Vec<Station> {
    use crate::tasks::{BALANCE, CRYSTALLIZATION_STATION, SHAKER};
    vec![
        Station { id: BALANCE.into(), center: [0.85, 0.15], radius: STATION_RADIUS },
        Station { id: SHAKER.into(), center: [0.15, 0.15], radius: STATION_RADIUS },
        Station { id: CRYSTALLIZATION_STATION.into(), center: [0.85, 0.85], radius: STATION_RADIUS },
    ]
}

/// Full simulator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabWorld {
    /// Arena is `[0, bounds[0]] × [0, bounds[1]]`.
    pub bounds: Vec2,
    pub objects: Vec<SimObject>,
    pub containers: BTreeMap<String, ContainerState>,
    pub arm: Arm,
    pub stations: Vec<Station>,
    pub seed: u64,
    pub tick: u64,
    /// Most recent `move to` target; grasp, pour and stir prefer it when ambiguous.
    pub last_target: Option<String>,
    /// Latest balance reading in grams.
    pub weight_reading: Option<f64>,
    pub config: SimConfig,
}

impl LabWorld {
    pub fn new(objects: Vec<SimObject>, seed: u64, config: SimConfig) -> Self {
        let containers = objects
            .iter()
            .filter(|o| o.is_container())
            .map(|o| (o.id.clone(), ContainerState::default()))
            .collect();
        LabWorld {
            bounds: [1.0, 1.0],
            objects,
            containers,
            arm: Arm { ee: HOME, engaged: false, held: None },
            stations: default_stations(),
            seed,
            tick: 0,
            last_target: None,
            weight_reading: None,
            config,
        }
    }

    pub fn object(&self, id: &str) -> Option<&SimObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut SimObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn station(&self, id: &str) -> Option<&Station> {
        self.stations.iter().find(|s| s.id == id)
    }

    /// Position of an object or station center.
    pub fn position_of(&self, id: &str) -> Result<Vec2, SimError> {
        if let Some(o) = self.object(id) {
            return Ok(o.pos);
        }
        self.station(id).map(|s| s.center).ok_or_else(|| SimError::UnknownId(id.to_string()))
    }

    pub fn total_volume(&self) -> u64 {
        self.containers.values().map(|c| u64::from(c.volume())).sum()
    }

    pub fn fill_fraction(&self, container: &str) -> f64 {
        self.containers
            .get(container)
            .map(|c| f64::from(c.volume()) / f64::from(self.config.capacity_ml))
            .unwrap_or(0.0)
    }

    /// Distance between two entities' discs (stations count as discs too).
    pub fn distance(&self, a: &str, b: &str) -> Result<f64, SimError> {
        let disc = |id: &str| -> Result<(Vec2, f64), SimError> {
            if let Some(o) = self.object(id) {
                return Ok((o.pos, o.radius));
            }
            self.station(id)
                .map(|s| (s.center, s.radius))
                .ok_or_else(|| SimError::UnknownId(id.to_string()))
        };
        let (pa, ra) = disc(a)?;
        let (pb, rb) = disc(b)?;
        if a == b {
            return Ok(0.0);
        }
        Ok(disc_gap(pa, ra, pb, rb))
    }

    /// Pairs of free-standing objects whose discs overlap. Held objects and
    /// objects inside containers are excluded.
    pub fn detect_collision(&self) -> Vec<(String, String)> {
        let free: Vec<&SimObject> = self
            .objects
            .iter()
            .filter(|o| o.inside.is_none() && self.arm.held.as_deref() != Some(o.id.as_str()))
            .collect();
        let mut out = Vec::new();
        for (i, a) in free.iter().enumerate() {
            for b in &free[i + 1..] {
                if discs_overlap(a.pos, a.radius, b.pos, b.radius) {
                    out.push((a.id.clone(), b.id.clone()));
                }
            }
        }
        out
    }

    /// Station whose region contains the object center.
    pub fn station_of(&self, id: &str) -> Option<&str> {
        let o = self.object(id)?;
        self.stations
            .iter()
            .find(|s| dist(s.center, o.pos) <= s.radius)
            .map(|s| s.id.as_str())
    }

    /// Ids of objects transitively inside `id`.
    pub fn contained_in(&self, id: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut frontier = vec![id.to_string()];
        while let Some(c) = frontier.pop() {
            for o in &self.objects {
                if o.inside.as_deref() == Some(c.as_str()) {
                    out.push(o.id.clone());
                    frontier.push(o.id.clone());
                }
            }
        }
        out
    }

    /// Symbolic abstraction of the concrete state.
    pub fn sym_state(&self) -> SymState {
        let mut s = SymState { holding: self.arm.held.clone(), ..SymState::default() };
        for o in &self.objects {
            let loc = if self.arm.held.as_deref() == Some(o.id.as_str()) {
                HAND.to_string()
            } else if let Some(c) = &o.inside {
                c.clone()
            } else if let Some(st) = self.station_of(&o.id) {
                st.to_string()
            } else {
                self.objects
                    .iter()
                    .filter(|p| p.id != o.id && p.inside.as_deref() != Some(o.id.as_str()))
                    .filter(|p| dist(p.pos, o.pos) <= self.config.eps_place)
                    .min_by(|a, b| dist(a.pos, o.pos).total_cmp(&dist(b.pos, o.pos)))
                    .map(|p| p.id.clone())
                    .unwrap_or_else(|| TABLE.to_string())
            };
            s.location.insert(o.id.clone(), loc);
            if let Some(c) = &o.inside {
                s.inside.insert(o.id.clone(), c.clone());
            }
        }
        for (id, c) in &self.containers {
            let ls: BTreeSet<String> =
                c.contents.iter().filter(|(_, v)| **v > 0).map(|(l, _)| l.clone()).collect();
            s.contents.insert(id.clone(), ls);
            if c.mixed {
                s.mixed.insert(id.clone());
            }
            if c.crystallized {
                s.crystallized.insert(id.clone());
            }
            if c.shaken {
                s.shaken.insert(id.clone());
            }
        }
        if self.weight_reading.is_some() {
            for o in &self.objects {
                if self.station_of(&o.id) == Some(crate::tasks::BALANCE) {
                    s.weighed.insert(o.id.clone());
                }
            }
        }
        s
    }

    /// Symbolic schema (catalog plus current abstract state).
    pub fn schema(&self) -> WorldSchema {
        let objects = self
            .objects
            .iter()
            .map(|o| ObjectInfo {
                id: o.id.clone(),
                class: o.class,
                graspable: o.graspable,
                container: o.is_container(),
            })
            .collect();
        let mut liquids = Vec::new();
        for (c, st) in &self.containers {
            for (l, v) in &st.contents {
                if *v > 0 {
                    liquids.push(LiquidInfo { id: l.clone(), container: c.clone() });
                }
            }
        }
        let mut schema = WorldSchema::from_catalog(
            objects,
            liquids,
            self.stations.iter().map(|s| s.id.clone()).collect(),
        );
        schema.initial = self.sym_state();
        schema
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("world serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: &str, class: ObjectClass, pos: Vec2) -> SimObject {
        SimObject { id: id.into(), class, pos, radius: class.radius(), graspable: true, inside: None }
    }

    #[test]
    fn distance_is_symmetric_and_reflexive() {
        let w = LabWorld::new(
            vec![obj("cup", ObjectClass::Cup, [0.2, 0.2]), obj("beaker", ObjectClass::Beaker, [0.5, 0.2])],
            0,
            SimConfig::default(),
        );
        assert_eq!(w.distance("cup", "cup").unwrap(), 0.0);
        assert_eq!(w.distance("cup", "beaker").unwrap(), w.distance("beaker", "cup").unwrap());
        assert!((w.distance("cup", "beaker").unwrap() - 0.22).abs() < 1e-12);
        assert_eq!(w.distance("beaker", "beaker").unwrap(), 0.0);
        assert!(matches!(w.distance("cup", "nope"), Err(SimError::UnknownId(_))));
    }

    #[test]
    fn overlapping_discs_collide() {
        let mut a = obj("a", ObjectClass::Cup, [0.3, 0.3]);
        let mut b = obj("b", ObjectClass::Cup, [0.35, 0.3]);
        a.radius = 0.03;
        b.radius = 0.03;
        let w = LabWorld::new(vec![a, b], 0, SimConfig::default());
        assert_eq!(w.detect_collision(), vec![("a".to_string(), "b".to_string())]);
    }
}
