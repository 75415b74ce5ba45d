//! Primitive semantics.

use serde::{Deserialize, Serialize};

use super::geometry::{dist, segment_hits_disc, sub, Vec2};
use super::trace::TickRecord;
use super::world::LabWorld;
use super::SimError;
use crate::controller::{reward, ControlAction, ControlObservation, Driver, TickEvents};
use crate::grounder::Primitive;
use crate::plan_ir::ObjectClass;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "detail")]
pub enum Outcome {
    Done,
    PreconditionFailed(String),
    Collision(String),
    Timeout,
}

impl Outcome {
    pub fn is_done(&self) -> bool {
        matches!(self, Outcome::Done)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub outcome: Outcome,
    pub steps: u32,
    pub reward: f64,
    #[serde(default)]
    pub note: String,
    /// Per-tick states, filled only when tracing is requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TickRecord>,
}

impl ExecutionResult {
    fn instant(outcome: Outcome) -> Self {
        ExecutionResult { outcome, steps: 0, reward: 0.0, note: String::new(), trace: Vec::new() }
    }
}

/// Per-tick hook for learners: `(prev_obs, action, reward, next_obs, done)`.
pub type TickHook<'a> = &'a mut dyn FnMut(&ControlObservation, &ControlAction, f64, &ControlObservation, bool);

/// Executes one primitive. `Move` is driven tick by tick by `driver`; the other
/// primitives resolve atomically.
pub fn step_primitive(
    world: &mut LabWorld,
    primitive: &Primitive,
    driver: &mut dyn Driver,
) -> Result<ExecutionResult, SimError> {
    step_primitive_traced(world, primitive, driver, false, None)
}

pub fn step_primitive_traced(
    world: &mut LabWorld,
    primitive: &Primitive,
    driver: &mut dyn Driver,
    trace: bool,
    hook: Option<TickHook<'_>>,
) -> Result<ExecutionResult, SimError> {
    let mut result = match primitive {
        Primitive::Move { target } => drive_to(world, target, driver, trace, hook)?,
        Primitive::Grasp { engage: true } => grasp(world),
        Primitive::Grasp { engage: false } => release(world),
        Primitive::Pour => pour(world),
        Primitive::Stir => stir(world),
    };
    if trace && !matches!(primitive, Primitive::Move { .. }) {
        world.tick += 1;
        result.trace.push(TickRecord::capture(world, &primitive.to_string()));
    }
    Ok(result)
}

/// Observation relative to a target point.
pub fn observe_control(world: &LabWorld, target: Vec2, exempt: &[String]) -> ControlObservation {
    let ee = world.arm.ee;
    let obstacle = world
        .objects
        .iter()
        .filter(|o| !exempt.contains(&o.id) && o.inside.is_none())
        .filter(|o| world.arm.held.as_deref() != Some(o.id.as_str()))
        .map(|o| sub(o.pos, ee))
        .min_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])))
        .unwrap_or([1.0, 1.0]);
    ControlObservation { ee, to_target: sub(target, ee), engaged: world.arm.engaged, obstacle }
}

fn set_ee(world: &mut LabWorld, p: Vec2) {
    world.arm.ee = p;
    if let Some(h) = world.arm.held.clone() {
        let carried = world.contained_in(&h);
        for o in world.objects.iter_mut() {
            if o.id == h || carried.contains(&o.id) {
                o.pos = p;
            }
        }
    }
}

fn drive_to(
    world: &mut LabWorld,
    target: &str,
    driver: &mut dyn Driver,
    trace: bool,
    mut hook: Option<TickHook<'_>>,
) -> Result<ExecutionResult, SimError> {
    let goal = world.position_of(target)?;
    world.last_target = Some(target.to_string());
    let cfg = world.config;
    let mut result = ExecutionResult::instant(Outcome::Timeout);
    // Discs the arm may pass through: what it carries, what it is heading for,
    // anything it is touching (within reach tolerance) at either end.
    let start = world.arm.ee;
    let mut exempt: Vec<String> = Vec::new();
    if let Some(h) = &world.arm.held {
        exempt.push(h.clone());
        exempt.extend(world.contained_in(h));
    }
    exempt.push(target.to_string());
    for o in &world.objects {
        let touch = o.radius + cfg.eps_reach;
        if o.inside.is_some() || dist(o.pos, start) < touch || dist(o.pos, goal) < touch {
            exempt.push(o.id.clone());
        }
    }
    let mut obs = observe_control(world, goal, &exempt);
    if obs.distance() <= cfg.eps_reach {
        result.outcome = Outcome::Done;
        return Ok(result);
    }
    while result.steps < cfg.tick_budget {
        let action = driver.act(&obs).clamped(cfg.v_max);
        let from = world.arm.ee;
        let mut to = [from[0] + action.velocity[0], from[1] + action.velocity[1]];
        to[0] = to[0].clamp(0.0, world.bounds[0]);
        to[1] = to[1].clamp(0.0, world.bounds[1]);
        let hit = world
            .objects
            .iter()
            .find(|o| !exempt.contains(&o.id) && segment_hits_disc(from, to, o.pos, o.radius))
            .map(|o| o.id.clone());
        result.steps += 1;
        world.tick += 1;
        if let Some(id) = hit {
            let next = observe_control(world, goal, &exempt);
            let ev = TickEvents { grasp: false, collision: true };
            let r = reward(&cfg.reward, &obs, &action, &next, ev);
            result.reward += r;
            if let Some(h) = hook.as_mut() {
                h(&obs, &action, r, &next, true);
            }
            if trace {
                result.trace.push(TickRecord::capture(world, &format!("collision {id}")));
            }
            result.outcome = Outcome::Collision(id);
            return Ok(result);
        }
        set_ee(world, to);
        let next = observe_control(world, goal, &exempt);
        let r = reward(&cfg.reward, &obs, &action, &next, TickEvents::default());
        result.reward += r;
        let done = next.distance() <= cfg.eps_reach;
        if let Some(h) = hook.as_mut() {
            h(&obs, &action, r, &next, done);
        }
        if trace {
            result.trace.push(TickRecord::capture(world, &format!("move {target}")));
        }
        obs = next;
        if done {
            result.outcome = Outcome::Done;
            return Ok(result);
        }
    }
    Ok(result)
}

fn failed(msg: impl Into<String>) -> ExecutionResult {
    ExecutionResult::instant(Outcome::PreconditionFailed(msg.into()))
}

fn grasp(world: &mut LabWorld) -> ExecutionResult {
    if world.arm.held.is_some() {
        return failed("gripper occupied");
    }
    let ee = world.arm.ee;
    let eps = world.config.eps_grasp;
    let preferred = world
        .last_target
        .as_deref()
        .and_then(|t| world.object(t))
        .filter(|o| o.graspable && dist(o.pos, ee) <= eps)
        .map(|o| o.id.clone());
    let chosen = preferred.or_else(|| {
        world
            .objects
            .iter()
            .filter(|o| o.graspable && dist(o.pos, ee) <= eps)
            .min_by(|a, b| dist(a.pos, ee).total_cmp(&dist(b.pos, ee)))
            .map(|o| o.id.clone())
    });
    let Some(id) = chosen else {
        return failed(format!("no graspable object within {eps} m"));
    };
    if let Some(o) = world.object_mut(&id) {
        o.inside = None;
    }
    world.arm.held = Some(id.clone());
    world.arm.engaged = true;
    set_ee(world, ee);
    let mut r = ExecutionResult::instant(Outcome::Done);
    r.reward = world.config.reward.w_grasp;
    r.note = format!("grasped {id}");
    r
}

/// Container under the end-effector other than `exclude`, preferring the last target.
fn container_under(world: &LabWorld, exclude: &[String], reach: Option<f64>) -> Option<String> {
    let ee = world.arm.ee;
    let ok = |o: &&super::world::SimObject| {
        o.is_container()
            && !exclude.contains(&o.id)
            && dist(o.pos, ee) <= reach.unwrap_or(o.radius)
    };
    if let Some(t) = world.last_target.as_deref().and_then(|t| world.object(t)) {
        if ok(&t) {
            return Some(t.id.clone());
        }
    }
    world
        .objects
        .iter()
        .filter(ok)
        .min_by(|a, b| dist(a.pos, ee).total_cmp(&dist(b.pos, ee)))
        .map(|o| o.id.clone())
}

fn release(world: &mut LabWorld) -> ExecutionResult {
    let Some(id) = world.arm.held.take() else {
        return failed("nothing held");
    };
    world.arm.engaged = false;
    let is_container = world.object(&id).is_some_and(|o| o.is_container());
    let mut carried = world.contained_in(&id);
    carried.push(id.clone());
    let into = if is_container { None } else { container_under(world, &carried, None) };
    if let Some(o) = world.object_mut(&id) {
        o.inside = into.clone();
    }
    let mut r = ExecutionResult::instant(Outcome::Done);
    r.note = match into {
        Some(c) => format!("released {id} into {c}"),
        None => format!("released {id}"),
    };
    r
}

fn pour(world: &mut LabWorld) -> ExecutionResult {
    let Some(src) = world.arm.held.clone() else {
        return failed("nothing held");
    };
    let Some(state) = world.containers.get(&src) else {
        return failed(format!("{src} is not a container"));
    };
    if state.volume() == 0 {
        return failed(format!("{src} is empty"));
    }
    let mut exclude = world.contained_in(&src);
    exclude.push(src.clone());
    let Some(dst) = container_under(world, &exclude, Some(world.config.eps_pour)) else {
        return failed(format!("no container within {} m", world.config.eps_pour));
    };
    let spill = world.config.spill_fraction;
    let moved = std::mem::take(&mut world.containers.get_mut(&src).expect("source").contents);
    world.containers.get_mut(&src).expect("source").mixed = false;
    let dest = world.containers.get_mut(&dst).expect("destination");
    for (l, v) in moved {
        let kept = (f64::from(v) * (1.0 - spill)).round() as u32;
        *dest.contents.entry(l).or_insert(0) += kept;
    }
    dest.mixed = false;
    let mut r = ExecutionResult::instant(Outcome::Done);
    r.note = format!("poured {src} into {dst}");
    r
}

fn stir(world: &mut LabWorld) -> ExecutionResult {
    let Some(held) = world.arm.held.clone() else {
        return failed("nothing held");
    };
    if world.object(&held).map(|o| o.class) != Some(ObjectClass::Stick) {
        return failed(format!("{held} is not a stick"));
    }
    let Some(c) = container_under(world, &[held.clone()], None) else {
        return failed("end-effector not over a container");
    };
    let state = world.containers.get_mut(&c).expect("container");
    let mut r = ExecutionResult::instant(Outcome::Done);
    if state.liquid_count() >= 2 {
        state.mixed = true;
        r.note = format!("mixed {c}");
    } else {
        r.note = format!("stirred {c}: fewer than two liquids, nothing to mix");
    }
    r
}

/// Station effects of one idle tick: incubation, shaking, and the balance reading.
/// Returns the notes of what changed.
pub fn dwell(world: &mut LabWorld) -> Vec<String> {
    use crate::tasks::{BALANCE, CRYSTALLIZATION_STATION, SHAKER};
    world.tick += 1;
    let mut notes = Vec::new();
    let ids: Vec<String> = world.containers.keys().cloned().collect();
    for id in ids {
        if world.arm.held.as_deref() == Some(id.as_str()) {
            continue;
        }
        let station = world.station_of(&id).map(str::to_string);
        let has_seed = !world.contained_in(&id).is_empty();
        let density = world.config.density_g_per_ml;
        let tare = world.config.tare_g;
        let c = world.containers.get_mut(&id).expect("container");
        match station.as_deref() {
            Some(s) if s == CRYSTALLIZATION_STATION => {
                if c.volume() > 0 && has_seed && !c.crystallized {
                    c.crystallized = true;
                    notes.push(format!("crystallized {id}"));
                }
            }
            Some(s) if s == SHAKER => {
                if !c.shaken {
                    c.shaken = true;
                    notes.push(format!("shaken {id}"));
                }
            }
            Some(s) if s == BALANCE => {
                let grams = density * f64::from(c.volume()) + tare;
                world.weight_reading = Some(grams);
                notes.push(format!("weighed {id}: {grams:.1} g"));
            }
            _ => {}
        }
    }
    notes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ScriptedController;
    use crate::simulator::world::{SimConfig, SimObject};

    fn world() -> LabWorld {
        let o = |id: &str, class: ObjectClass, pos: Vec2| SimObject {
            id: id.into(),
            class,
            pos,
            radius: class.radius(),
            graspable: true,
            inside: None,
        };
        let mut w = LabWorld::new(
            vec![
                o("cup", ObjectClass::Cup, [0.3, 0.5]),
                o("beaker", ObjectClass::Beaker, [0.7, 0.5]),
                o("cuboid", ObjectClass::Cuboid, [0.5, 0.3]),
            ],
            0,
            SimConfig::default(),
        );
        w.containers.get_mut("cup").unwrap().contents.insert("water".into(), 50);
        w
    }

    fn run(w: &mut LabWorld, p: Primitive) -> Outcome {
        step_primitive(w, &p, &mut ScriptedController::default()).unwrap().outcome
    }

    #[test]
    fn pour_conserves_volume() {
        let mut w = world();
        assert_eq!(run(&mut w, Primitive::move_to("cup")), Outcome::Done);
        assert_eq!(run(&mut w, Primitive::Grasp { engage: true }), Outcome::Done);
        assert_eq!(run(&mut w, Primitive::move_to("beaker")), Outcome::Done);
        assert_eq!(run(&mut w, Primitive::Pour), Outcome::Done);
        assert_eq!(w.containers["cup"].volume(), 0);
        assert_eq!(w.containers["beaker"].contents["water"], 50);
        assert_eq!(w.total_volume(), 50);
        // Second pour from the now-empty cup.
        assert!(matches!(run(&mut w, Primitive::Pour), Outcome::PreconditionFailed(_)));
    }

    #[test]
    fn far_grasp_fails() {
        let mut w = world();
        w.arm.ee = [0.8, 0.9];
        assert!(matches!(run(&mut w, Primitive::Grasp { engage: true }), Outcome::PreconditionFailed(_)));
    }

    #[test]
    fn release_with_empty_gripper_fails() {
        let mut w = world();
        assert!(matches!(run(&mut w, Primitive::Grasp { engage: false }), Outcome::PreconditionFailed(_)));
    }

    #[test]
    fn held_object_follows_and_drops_inside() {
        let mut w = world();
        run(&mut w, Primitive::move_to("cuboid"));
        run(&mut w, Primitive::Grasp { engage: true });
        let mut ticks = 0;
        let mut tracer = |_: &ControlObservation, _: &ControlAction, _: f64, _: &ControlObservation, _: bool| {
            ticks += 1;
        };
        let mut d = ScriptedController::default();
        let r = step_primitive_traced(&mut w, &Primitive::move_to("beaker"), &mut d, true, Some(&mut tracer)).unwrap();
        assert_eq!(r.outcome, Outcome::Done);
        assert!(ticks > 0);
        for rec in &r.trace {
            let c = rec.objects.iter().find(|o| o.id == "cuboid").unwrap();
            assert_eq!([c.x, c.y], [rec.arm.x, rec.arm.y]);
        }
        run(&mut w, Primitive::Grasp { engage: false });
        assert_eq!(w.object("cuboid").unwrap().inside.as_deref(), Some("beaker"));
    }

    #[test]
    fn blocked_path_collides() {
        let mut w = world();
        w.arm.ee = [0.1, 0.5];
        // cup sits between the arm and the beaker.
        assert!(matches!(run(&mut w, Primitive::move_to("beaker")), Outcome::Collision(id) if id == "cup"));
    }

    #[test]
    fn weigh_reading() {
        let mut w = world();
        w.containers.get_mut("beaker").unwrap().contents.insert("water".into(), 50);
        w.object_mut("beaker").unwrap().pos = [0.85, 0.15];
        dwell(&mut w);
        assert_eq!(w.weight_reading, Some(25.0));
    }
}
