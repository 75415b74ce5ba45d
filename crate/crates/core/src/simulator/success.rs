use super::geometry::dist;
use super::world::LabWorld;
use crate::plan_ir::TaskKind;
use crate::tasks::{TaskSpec, BALANCE, CRYSTALLIZATION_STATION, SHAKER};

fn resting(world: &LabWorld, id: &str) -> bool {
    world.object(id).is_some() && world.arm.held.as_deref() != Some(id)
}

fn contains(world: &LabWorld, container: &str, liquid: &str) -> bool {
    world
        .containers
        .get(container)
        .and_then(|c| c.contents.get(liquid))
        .is_some_and(|v| *v > 0)
}

fn flag(world: &LabWorld, container: &str, f: impl Fn(&super::world::ContainerState) -> bool) -> bool {
    world.containers.get(container).is_some_and(f)
}

fn at_station(world: &LabWorld, id: &str, station: &str) -> bool {
    resting(world, id) && world.station_of(id) == Some(station)
}

/// Per-task success predicate on a concrete world.
pub fn check_success(world: &LabWorld, spec: &TaskSpec) -> bool {
    let g = |k: &str| spec.get(k);
    match spec.kind {
        TaskKind::PickPlace => {
            let (o, d) = (g("object"), g("destination"));
            match (world.object(o), world.object(d)) {
                (Some(a), Some(b)) => resting(world, o) && dist(a.pos, b.pos) <= world.config.eps_place,
                _ => false,
            }
        }
        TaskKind::Pour => contains(world, g("container"), g("liquid")),
        TaskKind::Stir => flag(world, g("container"), |c| c.mixed),
        TaskKind::Mix => {
            let c = g("container");
            contains(world, c, g("liquid_a")) && contains(world, c, g("liquid_b")) && flag(world, c, |s| s.mixed)
        }
        TaskKind::Crystallize => {
            let dish = g("dish");
            at_station(world, dish, CRYSTALLIZATION_STATION)
                && contains(world, dish, g("solution"))
                && world.object(g("seed")).is_some_and(|s| s.inside.as_deref() == Some(dish))
                && flag(world, dish, |c| c.crystallized)
        }
        TaskKind::Weigh => at_station(world, g("object"), BALANCE),
        TaskKind::Shake => {
            let c = g("container");
            at_station(world, c, SHAKER) && flag(world, c, |s| s.shaken)
        }
        TaskKind::Freeform => false,
    }
}
