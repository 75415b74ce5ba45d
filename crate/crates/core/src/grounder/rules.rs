//! Deterministic grounding table keyed by verb and argument classes.

use super::{GroundingContext, Primitive, PrimitiveSeq};
use crate::plan_ir::{ObjectClass, Role, Verb};
use crate::simulator::SceneDigest;
use crate::tasks::{BALANCE, SHAKER};

/// What an argument id denotes in the current scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArgClass {
    Solid,
    Container,
    Stick,
    Liquid,
    Station,
    Missing,
    Unknown,
}

impl ArgClass {
    pub const ALL: [ArgClass; 7] = [
        ArgClass::Solid,
        ArgClass::Container,
        ArgClass::Stick,
        ArgClass::Liquid,
        ArgClass::Station,
        ArgClass::Missing,
        ArgClass::Unknown,
    ];
}

pub fn classify(digest: &SceneDigest, id: Option<&str>) -> ArgClass {
    let Some(id) = id else { return ArgClass::Missing };
    if let Some(o) = digest.object(id) {
        return match o.class {
            ObjectClass::Stick => ArgClass::Stick,
            c if c.is_container() => ArgClass::Container,
            _ => ArgClass::Solid,
        };
    }
    if digest.stations.iter().any(|s| s == id) {
        ArgClass::Station
    } else if digest.container_of_liquid(id).is_some() {
        ArgClass::Liquid
    } else {
        ArgClass::Unknown
    }
}

fn mv(t: &str) -> Primitive {
    Primitive::move_to(t)
}

const GRAB: Primitive = Primitive::Grasp { engage: true };
const DROP: Primitive = Primitive::Grasp { engage: false };

struct Scene<'a> {
    digest: &'a SceneDigest,
}

impl Scene<'_> {
    fn held(&self) -> Option<&str> {
        self.digest.held.as_deref()
    }

    /// Object a theme denotes: liquids stand for their container.
    fn object_for(&self, id: Option<&str>) -> Option<String> {
        match classify(self.digest, id) {
            ArgClass::Liquid => id.and_then(|l| self.digest.container_of_liquid(l)).map(str::to_string),
            ArgClass::Missing => None,
            _ => id.map(str::to_string),
        }
    }

    fn container_for(&self, id: Option<&str>) -> Option<String> {
        match classify(self.digest, id) {
            ArgClass::Container => id.map(str::to_string),
            ArgClass::Liquid => id.and_then(|l| self.digest.container_of_liquid(l)).map(str::to_string),
            _ => None,
        }
    }

    fn first_stick(&self) -> Option<String> {
        self.digest.objects.iter().find(|o| o.class == ObjectClass::Stick).map(|o| o.id.clone())
    }

    fn first_filled_container(&self, not: Option<&str>) -> Option<String> {
        self.digest
            .containers
            .iter()
            .find(|(id, c)| Some(id.as_str()) != not && !c.contents.is_empty())
            .map(|(id, _)| id.clone())
    }

    fn other_container(&self, not: Option<&str>) -> Option<String> {
        self.digest
            .objects
            .iter()
            .find(|o| o.class.is_container() && Some(o.id.as_str()) != not)
            .map(|o| o.id.clone())
    }

    /// Primitives that leave `obj` in hand.
    fn acquire(&self, obj: &str) -> Vec<Primitive> {
        match self.held() {
            Some(h) if h == obj => Vec::new(),
            Some(_) => vec![DROP, mv(obj), GRAB],
            None => vec![mv(obj), GRAB],
        }
    }

    /// Primitives that put `obj` at `dest` (or down where it is).
    fn deliver(&self, obj: &str, dest: Option<&str>) -> Vec<Primitive> {
        let mut out = self.acquire(obj);
        if let Some(d) = dest {
            out.push(mv(d));
        }
        out.push(DROP);
        out
    }

    fn at_station(&self, obj: &str, station: &str) -> bool {
        self.held() != Some(obj) && self.digest.object(obj).is_some_and(|o| o.at == station)
    }
}

/// Grounds one subtask without a model. Total over the verb vocabulary;
/// subtasks without a recognized verb ground to nothing.
pub fn rule_ground(ctx: &GroundingContext) -> PrimitiveSeq {
    let s = Scene { digest: ctx.digest() };
    let st = &ctx.subtask;
    let theme = st.arg(Role::Theme);
    let dest = st.arg(Role::Destination);
    let source = st.arg(Role::Source);
    let instrument = st.arg(Role::Instrument);
    let prims = match st.verb {
        None => Vec::new(),
        Some(Verb::Pick) => match s.object_for(theme) {
            Some(o) => s.acquire(&o),
            None => Vec::new(),
        },
        Some(Verb::Place) | Some(Verb::Move) => {
            let obj = s.object_for(theme).or_else(|| s.held().map(str::to_string));
            match obj {
                Some(o) if s.held() == Some(o.as_str()) || dest.is_some() => s.deliver(&o, dest),
                _ => Vec::new(),
            }
        }
        Some(Verb::Pour) => {
            let src = s
                .container_for(source)
                .or_else(|| s.container_for(theme))
                .or_else(|| s.held().filter(|h| classify(s.digest, Some(h)) == ArgClass::Container).map(str::to_string))
                .or_else(|| s.first_filled_container(dest));
            let dst = dest.map(str::to_string).or_else(|| s.other_container(src.as_deref()));
            match (src, dst) {
                (Some(src), Some(dst)) => {
                    let mut out = s.acquire(&src);
                    out.extend([mv(&dst), Primitive::Pour]);
                    out
                }
                _ => Vec::new(),
            }
        }
        Some(Verb::Add) => {
            let src = s.container_for(source).or_else(|| s.container_for(theme));
            match (src, dest) {
                (Some(src), Some(dst)) => {
                    let mut out = s.acquire(&src);
                    out.extend([mv(dst), Primitive::Pour, DROP]);
                    out
                }
                _ => Vec::new(),
            }
        }
        Some(Verb::Stir) => {
            let c = s
                .container_for(dest)
                .or_else(|| s.container_for(theme))
                .or_else(|| s.first_filled_container(None));
            let stick = instrument
                .filter(|i| classify(s.digest, Some(i)) == ArgClass::Stick)
                .map(str::to_string)
                .or_else(|| s.held().filter(|h| classify(s.digest, Some(h)) == ArgClass::Stick).map(str::to_string))
                .or_else(|| s.first_stick());
            match (c, stick) {
                (Some(c), Some(stick)) => {
                    let mut out = s.acquire(&stick);
                    out.extend([mv(&c), Primitive::Stir, DROP]);
                    out
                }
                _ => Vec::new(),
            }
        }
        Some(Verb::Wait) => Vec::new(),
        Some(verb @ (Verb::Weigh | Verb::Shake)) => {
            let station = if verb == Verb::Weigh { BALANCE } else { SHAKER };
            match s.object_for(theme) {
                Some(o) if s.at_station(&o, station) => Vec::new(),
                Some(o) => s.deliver(&o, Some(station)),
                None => Vec::new(),
            }
        }
    };
    PrimitiveSeq { primitives: prims, provenance: st.text.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounder::static_check;
    use crate::plan_ir::{parse_instruction, TaskKind};
    use crate::simulator::{observe, sample_scene};
    use crate::tasks::TaskSpec;

    fn ground(kind: TaskKind, text: &str, prep: impl FnOnce(&mut crate::simulator::LabWorld)) -> Vec<Primitive> {
        let mut w = sample_scene(&TaskSpec::variant(kind, 0), 1).unwrap();
        prep(&mut w);
        rule_ground(&GroundingContext::new(parse_instruction(1, text, None), observe(&w))).primitives
    }

    fn hold(w: &mut crate::simulator::LabWorld, id: &str) {
        let p = w.object(id).unwrap().pos;
        w.arm.ee = p;
        w.arm.held = Some(id.into());
        w.arm.engaged = true;
    }

    #[test]
    fn pick_up_cuboid() {
        assert_eq!(ground(TaskKind::PickPlace, "pick up cuboid", |_| {}), vec![mv("cuboid"), GRAB]);
    }

    #[test]
    fn place_while_holding() {
        let p = ground(TaskKind::PickPlace, "place cuboid in beaker", |w| hold(w, "cuboid"));
        assert_eq!(p, vec![mv("beaker"), DROP]);
    }

    #[test]
    fn pour_while_holding_source() {
        let p = ground(TaskKind::Pour, "pour water into beaker", |w| hold(w, "cup"));
        assert_eq!(p, vec![mv("beaker"), Primitive::Pour]);
    }

    #[test]
    fn stir_in_beaker() {
        let p = ground(TaskKind::Stir, "stir liquid in beaker", |_| {});
        assert_eq!(p, vec![mv("stick"), GRAB, mv("beaker"), Primitive::Stir, DROP]);
    }

    #[test]
    fn weigh_on_balance_is_skipped() {
        let p = ground(TaskKind::Weigh, "weigh beaker", |w| {
            let b = w.station(BALANCE).unwrap().center;
            w.object_mut("beaker").unwrap().pos = b;
        });
        assert!(p.is_empty());
    }

    #[test]
    fn table_is_total_and_statically_valid() {
        let w = sample_scene(&TaskSpec::variant(TaskKind::Mix, 0), 2).unwrap();
        let ids = ["cup_a", "beaker", "stick", "reagent_a", "balance", "unicorn"];
        let verbs = ["pick up", "place", "move", "pour", "stir", "add", "wait at", "weigh", "shake", "frobnicate"];
        for held in [None, Some("cup_a"), Some("stick")] {
            let mut w = w.clone();
            if let Some(h) = held {
                hold(&mut w, h);
            }
            let obs = observe(&w);
            for v in verbs {
                for a in ids {
                    for d in ["", " into beaker", " to shaker"] {
                        let st = parse_instruction(1, &format!("{v} {a}{d}"), None);
                        let seq = rule_ground(&GroundingContext::new(st, obs.clone()));
                        static_check(&seq, Some(held.is_some())).unwrap();
                    }
                }
            }
        }
    }
}
