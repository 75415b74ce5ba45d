//! Abstract interpretation of plans over the symbolic state.
//!
//! Each step is checked for redundancy first (E1: duplicate of the previous
//! step, or postcondition already true). Only non-redundant steps have their
//! preconditions checked (E2). Redundant steps still apply their idempotent
//! effects; steps with a failed precondition apply none.

use std::collections::BTreeSet;

use super::SimError;
use crate::plan_ir::{
    Constraint, ConstraintKind, ObjectClass, Plan, Role, Rule, Subtask, SymState, Verb, Violation,
    WorldSchema, HAND, TABLE,
};
use crate::tasks::CRYSTALLIZATION_STATION;

/// Runs `plan` from `schema.initial`, reporting violations of the active `pack`.
pub fn symbolic_execute(
    plan: &Plan,
    schema: &WorldSchema,
    pack: &[Constraint],
) -> Result<(SymState, Vec<Violation>), SimError> {
    for step in &plan.steps {
        if step.verb.is_none() {
            continue;
        }
        if let Some(a) = step.args.iter().find(|a| schema.resolve(&a.id).is_none()) {
            return Err(SimError::UnresolvedReference { step: step.index, id: a.id.clone() });
        }
    }
    let mut ex = Executor { schema, pack, state: schema.initial.clone(), out: Vec::new() };
    let mut prev: Option<&Subtask> = None;
    for step in &plan.steps {
        ex.step(step, prev);
        prev = Some(step);
    }
    Ok((ex.state, ex.out))
}

struct Executor<'a> {
    schema: &'a WorldSchema,
    pack: &'a [Constraint],
    state: SymState,
    out: Vec<Violation>,
}

/// Objects and liquids a step touches, resolved against the state before it.
#[derive(Debug, Default)]
struct Resolved {
    theme: Option<String>,
    dest: Option<String>,
    source: Option<String>,
    liquid: Option<String>,
    stick: Option<String>,
}

impl Resolved {
    fn involved(&self) -> BTreeSet<&str> {
        [&self.theme, &self.dest, &self.source, &self.liquid, &self.stick]
            .into_iter()
            .flatten()
            .map(String::as_str)
            .collect()
    }
}

impl<'a> Executor<'a> {
    fn active(&self, rule: Rule, verb: Verb) -> Option<&'a Constraint> {
        self.pack.iter().find(|c| c.rule == rule && c.applies_to(verb))
    }

    fn is_container(&self, id: &str) -> bool {
        self.schema.object(id).is_some_and(|o| o.container)
    }

    fn is_liquid(&self, id: &str) -> bool {
        self.schema.liquid(id).is_some()
    }

    fn loc(&self, id: &str) -> Option<&str> {
        self.state.location.get(id).map(String::as_str)
    }

    fn sticks(&self) -> Vec<&'a str> {
        self.schema.objects_of(ObjectClass::Stick).map(|o| o.id.as_str()).collect()
    }

    fn resolve(&self, step: &Subtask, verb: Verb) -> Resolved {
        let theme = step.arg(Role::Theme).map(str::to_string);
        let dest = step.arg(Role::Destination).map(str::to_string);
        let source_arg = step.arg(Role::Source).map(str::to_string);
        let instrument = step.arg(Role::Instrument).map(str::to_string);
        let held = self.state.holding.clone();
        let liquid_container = |l: &str| self.state.container_of_liquid(l).map(str::to_string);
        let mut r = Resolved { theme: theme.clone(), dest: dest.clone(), ..Resolved::default() };
        match verb {
            Verb::Pour | Verb::Add => {
                r.liquid = theme.clone().filter(|t| self.is_liquid(t));
                r.source = source_arg
                    .or_else(|| theme.clone().filter(|t| self.is_container(t)))
                    .or_else(|| if verb == Verb::Pour { held.clone().filter(|h| self.is_container(h)) } else { None })
                    .or_else(|| r.liquid.as_deref().and_then(liquid_container))
                    .or_else(|| if verb == Verb::Pour { held.clone() } else { None });
                if verb == Verb::Pour {
                    r.theme = r.source.clone();
                }
            }
            Verb::Stir => {
                r.dest = dest
                    .or_else(|| theme.clone().filter(|t| self.is_container(t)))
                    .or_else(|| theme.as_deref().filter(|t| self.is_liquid(t)).and_then(liquid_container))
                    .or_else(|| {
                        self.schema
                            .objects
                            .iter()
                            .find(|o| o.container && self.state.has_liquid(&o.id))
                            .map(|o| o.id.clone())
                    });
                r.stick = instrument
                    .or_else(|| held.clone().filter(|h| self.sticks().contains(&h.as_str())))
                    .or_else(|| self.sticks().first().map(|s| s.to_string()));
            }
            Verb::Place => {
                r.theme = theme.or(held);
            }
            Verb::Wait => {
                r.dest = dest.or(theme).or_else(|| Some(CRYSTALLIZATION_STATION.to_string()));
                // The container being incubated is whatever rests at the station.
                r.theme = r.dest.as_deref().and_then(|st| {
                    self.schema
                        .objects
                        .iter()
                        .find(|o| o.container && self.loc(&o.id) == Some(st))
                        .map(|o| o.id.clone())
                });
            }
            _ => {}
        }
        r
    }

    fn emit(&mut self, step: &Subtask, rule: Rule, kind: ConstraintKind, subject: Option<&str>, message: String) {
        self.out.push(Violation {
            step_index: step.index,
            category: rule.category(),
            constraint_kind: kind,
            rule,
            subject: subject.map(str::to_string),
            message,
        });
    }

    /// Emits `rule` when `ok` is false and the rule is active. Returns whether it fired.
    fn require(&mut self, step: &Subtask, verb: Verb, rule: Rule, ok: bool, subject: Option<&str>, msg: &str) -> bool {
        if ok {
            return false;
        }
        let Some(c) = self.active(rule, verb) else { return false };
        let kind = c.kind;
        self.emit(step, rule, kind, subject, msg.to_string());
        true
    }

    fn postcondition_holds(&self, verb: Verb, r: &Resolved) -> bool {
        let st = &self.state;
        let theme = r.theme.as_deref().unwrap_or("");
        match verb {
            Verb::Pick => !theme.is_empty() && st.holding.as_deref() == Some(theme),
            Verb::Place => {
                let want = r.dest.as_deref().unwrap_or(TABLE);
                !theme.is_empty() && st.holding.as_deref() != Some(theme) && self.loc(theme) == Some(want)
            }
            Verb::Move => {
                r.dest.is_some()
                    && st.holding.as_deref() != Some(theme)
                    && self.loc(theme) == r.dest.as_deref()
            }
            Verb::Pour => match (&r.dest, &r.source) {
                (Some(d), Some(s)) if d != s => {
                    let poured: Vec<&str> = match &r.liquid {
                        Some(l) => vec![l.as_str()],
                        None => st.contents.get(d).map(|c| c.iter().map(String::as_str).collect()).unwrap_or_default(),
                    };
                    !poured.is_empty()
                        && poured.iter().all(|l| st.contents.get(d).is_some_and(|c| c.contains(*l)))
                        && !st.has_liquid(s)
                }
                _ => false,
            },
            Verb::Add => match (&r.liquid, &r.dest) {
                (Some(l), Some(d)) => st.contents.get(d).is_some_and(|c| c.contains(l)),
                _ => false,
            },
            Verb::Stir => r.dest.as_deref().is_some_and(|c| st.mixed.contains(c)),
            Verb::Wait => r.theme.as_deref().is_some_and(|c| st.crystallized.contains(c)),
            Verb::Weigh => st.weighed.contains(theme),
            Verb::Shake => st.shaken.contains(theme),
        }
    }

    fn step(&mut self, step: &Subtask, prev: Option<&Subtask>) {
        let Some(verb) = step.verb else { return };
        let r = self.resolve(step, verb);

        // Avoided objects.
        let avoided: Vec<(ConstraintKind, String)> = self
            .pack
            .iter()
            .filter(|c| c.rule == Rule::AvoidObject && c.applies_to(verb))
            .flat_map(|c| c.literal_args().map(move |a| (c.kind, a.to_string())))
            .filter(|(_, a)| r.involved().contains(a.as_str()))
            .collect();

        // E1.
        let duplicate = prev.is_some_and(|p| p.normalized_text() == step.normalized_text());
        let redundant = if duplicate && self.active(Rule::DuplicateStep, verb).is_some() {
            let kind = self.active(Rule::DuplicateStep, verb).map(|c| c.kind).unwrap_or(ConstraintKind::Temporal);
            self.emit(step, Rule::DuplicateStep, kind, r.theme.as_deref(), "repeats the previous step".into());
            true
        } else if self.postcondition_holds(verb, &r) && self.active(Rule::RedundantPostcondition, verb).is_some() {
            let kind = self
                .active(Rule::RedundantPostcondition, verb)
                .map(|c| c.kind)
                .unwrap_or(ConstraintKind::Causal);
            self.emit(step, Rule::RedundantPostcondition, kind, r.theme.as_deref(), "effect already holds".into());
            true
        } else {
            false
        };

        let mut blocked = false;
        for (kind, a) in &avoided {
            self.emit(step, Rule::AvoidObject, *kind, Some(a), format!("uses avoided object {a}"));
            blocked = true;
        }
        if !redundant {
            blocked |= self.preconditions(step, verb, &r);
        }
        if !blocked {
            self.apply(verb, &r);
        }
    }

    /// Emits E2 violations; returns whether any fired.
    fn preconditions(&mut self, step: &Subtask, verb: Verb, r: &Resolved) -> bool {
        let held = self.state.holding.clone();
        let theme = r.theme.clone();
        let t = theme.as_deref();
        let graspable = |s: &Self, id: Option<&str>| id.and_then(|i| s.schema.object(i)).is_some_and(|o| o.graspable);
        let mut fired = false;
        match verb {
            Verb::Pick => {
                fired |= self.require(step, verb, Rule::Graspable, graspable(self, t), t, "not a graspable object");
                fired |= self.require(step, verb, Rule::HandFree, held.is_none(), held.as_deref(), "gripper is holding something");
            }
            Verb::Place => {
                let ok = t.is_some() && held.as_deref() == t;
                fired |= self.require(step, verb, Rule::Holding, ok, t, "object is not in hand");
            }
            Verb::Move => {
                fired |= self.require(step, verb, Rule::Graspable, graspable(self, t), t, "not a graspable object");
                let ok = held.is_none() || held.as_deref() == t;
                fired |= self.require(step, verb, Rule::HandFree, ok, held.as_deref(), "gripper is holding something else");
            }
            Verb::Pour => {
                let s = r.source.as_deref();
                let ok = s.is_some() && held.as_deref() == s;
                fired |= self.require(step, verb, Rule::Holding, ok, s, "source is not in hand");
                let has = s.is_some_and(|s| self.is_container(s) && self.state.has_liquid(s));
                fired |= self.require(step, verb, Rule::SourceHasLiquid, has, s, "source holds no liquid");
                if let Some(d) = r.dest.as_deref() {
                    let ok = self.is_container(d);
                    fired |= self.require(step, verb, Rule::ContainerDestination, ok, Some(d), "destination is not a container");
                }
            }
            Verb::Add => {
                let s = r.source.as_deref();
                let ok = held.is_none() || held.as_deref() == s;
                fired |= self.require(step, verb, Rule::HandFree, ok, held.as_deref(), "gripper is holding something else");
                let has = match (s, r.liquid.as_deref()) {
                    (Some(s), Some(l)) => self.state.contents.get(s).is_some_and(|c| c.contains(l)),
                    (Some(s), None) => self.is_container(s) && self.state.has_liquid(s),
                    _ => false,
                };
                fired |= self.require(step, verb, Rule::SourceHasLiquid, has, s.or(r.liquid.as_deref()), "source holds no liquid");
                let d = r.dest.as_deref();
                let ok = d.is_some_and(|d| self.is_container(d));
                fired |= self.require(step, verb, Rule::ContainerDestination, ok, d, "destination is not a container");
            }
            Verb::Stir => {
                let ok = held.is_none() || held.as_deref() == r.stick.as_deref();
                fired |= self.require(step, verb, Rule::HandFree, ok, held.as_deref(), "gripper is holding something else");
                let c = r.dest.as_deref();
                let is_c = c.is_some_and(|c| self.is_container(c));
                fired |= self.require(step, verb, Rule::ContainerDestination, is_c, c, "nothing to stir in");
                let stick_ok = r
                    .stick
                    .as_deref()
                    .and_then(|s| self.schema.object(s))
                    .is_some_and(|o| o.class == ObjectClass::Stick);
                fired |= self.require(step, verb, Rule::StirrerAvailable, stick_ok, r.stick.as_deref(), "no stirrer");
                if is_c {
                    let has = c.is_some_and(|c| self.state.has_liquid(c));
                    fired |= self.require(step, verb, Rule::HasLiquid, has, c, "container holds no liquid");
                }
            }
            Verb::Wait => {
                let st = r.dest.as_deref().unwrap_or(CRYSTALLIZATION_STATION);
                let occupied = self.state.location.values().any(|l| l == st);
                let f = self.require(step, verb, Rule::StationOccupied, occupied, Some(st), "nothing placed at the station");
                fired |= f;
                if !f {
                    if let Some(c) = t {
                        let ready = self.state.has_liquid(c) && self.state.inside.values().any(|v| v == c);
                        fired |= self.require(step, verb, Rule::ReadyToIncubate, ready, Some(c), "needs solution and a seed");
                    }
                }
            }
            Verb::Weigh => {
                let ok = t.is_some_and(|t| self.loc(t) == Some(crate::tasks::BALANCE));
                fired |= self.require(step, verb, Rule::AtBalance, ok, t, "not on the balance");
            }
            Verb::Shake => {
                let ok = t.is_some_and(|t| self.loc(t) == Some(crate::tasks::SHAKER));
                fired |= self.require(step, verb, Rule::AtShaker, ok, t, "not on the shaker");
            }
        }
        fired
    }

    fn put(&mut self, obj: &str, dest: Option<&str>) {
        let d = dest.unwrap_or(TABLE).to_string();
        if self.state.holding.as_deref() == Some(obj) {
            self.state.holding = None;
        }
        self.state.location.insert(obj.to_string(), d.clone());
        if self.is_container(&d) && !self.is_container(obj) {
            self.state.inside.insert(obj.to_string(), d);
        } else {
            self.state.inside.remove(obj);
        }
    }

    fn transfer(&mut self, source: &str, dest: &str, liquid: Option<&str>) {
        if source == dest {
            return;
        }
        let moved: Vec<String> = match liquid {
            Some(l) => vec![l.to_string()],
            None => self.state.contents.get(source).map(|c| c.iter().cloned().collect()).unwrap_or_default(),
        };
        if let Some(c) = self.state.contents.get_mut(source) {
            for l in &moved {
                c.remove(l);
            }
        }
        self.state.mixed.remove(source);
        let d = self.state.contents.entry(dest.to_string()).or_default();
        d.extend(moved);
        self.state.mixed.remove(dest);
    }

    fn apply(&mut self, verb: Verb, r: &Resolved) {
        let theme = r.theme.clone().unwrap_or_default();
        match verb {
            Verb::Pick => {
                self.state.holding = Some(theme.clone());
                self.state.location.insert(theme.clone(), HAND.to_string());
                self.state.inside.remove(&theme);
            }
            Verb::Place | Verb::Move => self.put(&theme, r.dest.as_deref()),
            Verb::Pour => {
                if let (Some(s), Some(d)) = (&r.source, &r.dest) {
                    self.transfer(s, d, None);
                }
            }
            Verb::Add => {
                if let (Some(s), Some(d)) = (r.source.clone(), r.dest.clone()) {
                    self.transfer(&s, &d, r.liquid.as_deref());
                    self.state.holding = None;
                    self.state.location.insert(s.clone(), d.clone());
                    self.state.inside.remove(&s);
                }
            }
            Verb::Stir => {
                if let Some(c) = r.dest.clone() {
                    if self.state.contents.get(&c).is_some_and(|l| l.len() >= 2) {
                        self.state.mixed.insert(c.clone());
                    }
                    if let Some(s) = r.stick.clone() {
                        self.put(&s, Some(&c));
                    }
                    self.state.holding = None;
                }
            }
            Verb::Wait => {
                if let Some(c) = r.theme.clone() {
                    if r.dest.as_deref() == Some(CRYSTALLIZATION_STATION) {
                        self.state.crystallized.insert(c);
                    }
                }
            }
            Verb::Weigh => {
                self.state.weighed.insert(theme);
            }
            Verb::Shake => {
                self.state.shaken.insert(theme);
            }
        }
    }
}
