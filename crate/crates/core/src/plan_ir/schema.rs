use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PlanError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Cuboid,
    Cylinder,
    Cup,
    Stick,
    Beaker,
    PetriDish,
}

impl ObjectClass {
    pub fn is_container(self) -> bool {
        matches!(self, ObjectClass::Cup | ObjectClass::Beaker | ObjectClass::PetriDish)
    }

    pub fn radius(self) -> f64 {
        match self {
            ObjectClass::Cuboid | ObjectClass::Cylinder => 0.025,
            ObjectClass::Cup => 0.03,
            ObjectClass::Stick => 0.02,
            ObjectClass::Beaker => 0.05,
            ObjectClass::PetriDish => 0.045,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Cuboid => "cuboid",
            ObjectClass::Cylinder => "cylinder",
            ObjectClass::Cup => "cup",
            ObjectClass::Stick => "stick",
            ObjectClass::Beaker => "beaker",
            ObjectClass::PetriDish => "petri_dish",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub id: String,
    pub class: ObjectClass,
    pub graspable: bool,
    pub container: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiquidInfo {
    pub id: String,
    /// Container holding the liquid in the initial state.
    pub container: String,
}

/// What a name in a plan refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entity<'a> {
    Object(&'a ObjectInfo),
    Liquid(&'a LiquidInfo),
    Station(&'a str),
}

pub const PREDICATES: [&str; 11] = [
    "hand-empty",
    "holding",
    "at",
    "in",
    "contains",
    "container-empty",
    "graspable",
    "mixed",
    "crystallized",
    "shaken",
    "weighed",
];

/// Ground condition atom such as `contains(cup, solution)` or `hand-empty`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(predicate: &str, args: &[&str]) -> Self {
        Atom {
            predicate: predicate.to_string(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            f.write_str(&self.predicate)
        } else {
            write!(f, "{}({})", self.predicate, self.args.join(", "))
        }
    }
}

impl FromStr for Atom {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (pred, args) = match s.find('(') {
            Some(open) => {
                let close = s.rfind(')').ok_or_else(|| PlanError::BadAtom(s.to_string()))?;
                if close < open {
                    return Err(PlanError::BadAtom(s.to_string()));
                }
                let args = s[open + 1..close]
                    .split(',')
                    .map(|a| a.trim().to_string())
                    .filter(|a| !a.is_empty())
                    .collect();
                (s[..open].trim(), args)
            }
            None => (s, Vec::new()),
        };
        if !PREDICATES.contains(&pred) {
            return Err(PlanError::UnknownPredicate(pred.to_string()));
        }
        Ok(Atom { predicate: pred.to_string(), args })
    }
}

impl Serialize for Atom {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Atom {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Symbolic world state: containment, locations, hand, and container flags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymState {
    pub holding: Option<String>,
    /// Object id to the place it rests: another object id, a station id, or `table`.
    pub location: BTreeMap<String, String>,
    /// Non-container objects sitting inside a container.
    pub inside: BTreeMap<String, String>,
    pub contents: BTreeMap<String, BTreeSet<String>>,
    pub mixed: BTreeSet<String>,
    pub crystallized: BTreeSet<String>,
    pub shaken: BTreeSet<String>,
    pub weighed: BTreeSet<String>,
}

pub const TABLE: &str = "table";
pub const HAND: &str = "hand";

impl SymState {
    pub fn container_of_liquid(&self, liquid: &str) -> Option<&str> {
        self.contents
            .iter()
            .find(|(_, ls)| ls.contains(liquid))
            .map(|(c, _)| c.as_str())
    }

    pub fn has_liquid(&self, container: &str) -> bool {
        self.contents.get(container).is_some_and(|c| !c.is_empty())
    }

    pub fn holds(&self, atom: &Atom, schema: &WorldSchema) -> bool {
        let a = |i: usize| atom.args.get(i).map(String::as_str).unwrap_or("");
        match atom.predicate.as_str() {
            "hand-empty" => self.holding.is_none(),
            "holding" => self.holding.as_deref() == Some(a(0)),
            "at" => self.location.get(a(0)).map(String::as_str) == Some(a(1)),
            "in" => self.inside.get(a(0)).map(String::as_str) == Some(a(1)),
            "contains" => self.contents.get(a(0)).is_some_and(|c| c.contains(a(1))),
            "container-empty" => !self.has_liquid(a(0)),
            "graspable" => schema.object(a(0)).is_some_and(|o| o.graspable),
            "mixed" => self.mixed.contains(a(0)),
            "crystallized" => self.crystallized.contains(a(0)),
            "shaken" => self.shaken.contains(a(0)),
            "weighed" => self.weighed.contains(a(0)),
            _ => false,
        }
    }
}

/// Symbolic description of a scene: catalog, predicate vocabulary, initial state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSchema {
    pub objects: Vec<ObjectInfo>,
    pub liquids: Vec<LiquidInfo>,
    pub stations: Vec<String>,
    pub predicates: Vec<String>,
    pub initial: SymState,
}

impl WorldSchema {
    pub fn object(&self, id: &str) -> Option<&ObjectInfo> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn liquid(&self, id: &str) -> Option<&LiquidInfo> {
        self.liquids.iter().find(|l| l.id == id)
    }

    pub fn is_station(&self, id: &str) -> bool {
        self.stations.iter().any(|s| s == id)
    }

    pub fn resolve(&self, id: &str) -> Option<Entity<'_>> {
        if let Some(o) = self.object(id) {
            return Some(Entity::Object(o));
        }
        if let Some(l) = self.liquid(id) {
            return Some(Entity::Liquid(l));
        }
        self.stations
            .iter()
            .find(|s| s.as_str() == id)
            .map(|s| Entity::Station(s.as_str()))
    }

    pub fn objects_of(&self, class: ObjectClass) -> impl Iterator<Item = &ObjectInfo> {
        self.objects.iter().filter(move |o| o.class == class)
    }

    /// Builds a schema from a catalog and initial liquid placement; everything rests on the table.
    pub fn from_catalog(
        objects: Vec<ObjectInfo>,
        liquids: Vec<LiquidInfo>,
        stations: Vec<String>,
    ) -> Self {
        let mut initial = SymState::default();
        for o in &objects {
            initial.location.insert(o.id.clone(), TABLE.to_string());
            if o.container {
                initial.contents.insert(o.id.clone(), BTreeSet::new());
            }
        }
        for l in &liquids {
            initial
                .contents
                .entry(l.container.clone())
                .or_default()
                .insert(l.id.clone());
        }
        WorldSchema {
            objects,
            liquids,
            stations,
            predicates: PREDICATES.iter().map(|s| s.to_string()).collect(),
            initial,
        }
    }

    /// Compact one-line-per-entity description used in prompts.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for o in &self.objects {
            let mut flags = Vec::new();
            if o.graspable {
                flags.push("graspable");
            }
            if o.container {
                flags.push("container");
            }
            out.push_str(&format!("object {} class={} [{}]", o.id, o.class.as_str(), flags.join(",")));
            if let Some(c) = self.initial.contents.get(&o.id) {
                if !c.is_empty() {
                    out.push_str(&format!(" holds={}", c.iter().cloned().collect::<Vec<_>>().join("+")));
                }
            }
            if let Some(loc) = self.initial.location.get(&o.id) {
                if loc != TABLE {
                    out.push_str(&format!(" at={loc}"));
                }
            }
            out.push('\n');
        }
        for l in &self.liquids {
            out.push_str(&format!("liquid {} in={}\n", l.id, l.container));
        }
        for s in &self.stations {
            out.push_str(&format!("station {s}\n"));
        }
        out
    }

    /// Inverse of [`describe`](Self::describe) for the fields the rule backend needs.
    pub fn from_description(text: &str) -> Result<Self, PlanError> {
        let mut objects = Vec::new();
        let mut liquids = Vec::new();
        let mut stations = Vec::new();
        let mut placed = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("object") => {
                    let id = parts.next().ok_or_else(|| PlanError::Footer(line.to_string()))?;
                    let mut class = None;
                    let mut graspable = false;
                    let mut container = false;
                    for p in parts {
                        if let Some(c) = p.strip_prefix("class=") {
                            class = Some(parse_class(c)?);
                        } else if let Some(f) = p.strip_prefix('[') {
                            let f = f.trim_end_matches(']');
                            graspable = f.split(',').any(|x| x == "graspable");
                            container = f.split(',').any(|x| x == "container");
                        } else if let Some(loc) = p.strip_prefix("at=") {
                            placed.push((id.to_string(), loc.to_string()));
                        }
                    }
                    let class = class.ok_or_else(|| PlanError::Footer(line.to_string()))?;
                    objects.push(ObjectInfo { id: id.to_string(), class, graspable, container });
                }
                Some("liquid") => {
                    let id = parts.next().ok_or_else(|| PlanError::Footer(line.to_string()))?;
                    let container = parts
                        .find_map(|p| p.strip_prefix("in="))
                        .ok_or_else(|| PlanError::Footer(line.to_string()))?;
                    liquids.push(LiquidInfo { id: id.to_string(), container: container.to_string() });
                }
                Some("station") => {
                    if let Some(s) = parts.next() {
                        stations.push(s.to_string());
                    }
                }
                _ => {}
            }
        }
        let mut schema = WorldSchema::from_catalog(objects, liquids, stations);
        for (id, loc) in placed {
            schema.initial.location.insert(id, loc);
        }
        Ok(schema)
    }
}

fn parse_class(s: &str) -> Result<ObjectClass, PlanError> {
    Ok(match s {
        "cuboid" => ObjectClass::Cuboid,
        "cylinder" => ObjectClass::Cylinder,
        "cup" => ObjectClass::Cup,
        "stick" => ObjectClass::Stick,
        "beaker" => ObjectClass::Beaker,
        "petri_dish" => ObjectClass::PetriDish,
        other => return Err(PlanError::Footer(format!("unknown object class {other}"))),
    })
}
