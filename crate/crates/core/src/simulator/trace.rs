use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::world::LabWorld;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub x: f64,
    pub y: f64,
    pub engaged: bool,
    #[serde(default)]
    pub held: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// One trace line: `{t, arm, objects, containers, event}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: u64,
    pub arm: ArmRecord,
    pub objects: Vec<ObjectRecord>,
    pub containers: BTreeMap<String, BTreeMap<String, u32>>,
    pub event: String,
}

impl TickRecord {
    pub fn capture(world: &LabWorld, event: &str) -> Self {
        TickRecord {
            t: world.tick,
            arm: ArmRecord {
                x: world.arm.ee[0],
                y: world.arm.ee[1],
                engaged: world.arm.engaged,
                held: world.arm.held.clone(),
            },
            objects: world
                .objects
                .iter()
                .map(|o| ObjectRecord { id: o.id.clone(), x: o.pos[0], y: o.pos[1] })
                .collect(),
            containers: world
                .containers
                .iter()
                .map(|(id, c)| (id.clone(), c.contents.clone()))
                .collect(),
            event: event.to_string(),
        }
    }
}

pub fn write_trace<W: Write>(records: &[TickRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// SHA-256 of the JSON-lines encoding.
pub fn trace_hash(records: &[TickRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(records, &mut buf).expect("writing to memory");
    hex::encode(Sha256::digest(&buf))
}
