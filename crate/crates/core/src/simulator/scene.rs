//! Scene catalogs per task, randomized placement, and prompt sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::{dist, point_segment_distance, Vec2};
use super::world::{LabWorld, SimConfig, SimObject, HOME};
use super::SimError;
use crate::plan_ir::{LiquidInfo, ObjectClass, ObjectInfo, TaskKind, WorldSchema};
use crate::tasks::{self, Bindings, TaskSpec, STATIONS};

/// One catalog line: object id, class, and the liquids it starts with (mL).
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogItem {
    pub id: String,
    pub class: ObjectClass,
    pub liquids: Vec<(String, u32)>,
}

fn item(id: &str, liquids: &[(&str, u32)]) -> Result<CatalogItem, SimError> {
    Ok(CatalogItem {
        id: id.to_string(),
        class: class_of(id).ok_or_else(|| SimError::BadSpec(format!("no object class for '{id}'")))?,
        liquids: liquids.iter().map(|(l, v)| (l.to_string(), *v)).collect(),
    })
}

/// Object class implied by an id such as `cup_a` or `petri_dish`.
pub fn class_of(id: &str) -> Option<ObjectClass> {
    [
        ObjectClass::PetriDish,
        ObjectClass::Cuboid,
        ObjectClass::Cylinder,
        ObjectClass::Cup,
        ObjectClass::Stick,
        ObjectClass::Beaker,
    ]
    .into_iter()
    .find(|c| id == c.as_str() || id.starts_with(&format!("{}_", c.as_str())))
}

fn other<'a>(options: &[&'a str], not: &str) -> &'a str {
    options.iter().copied().find(|o| *o != not).unwrap_or(options[0])
}

/// Objects and liquids present in every scene of `spec`. Task-relevant
/// objects come first so they occupy the state-vector slots.
pub fn catalog(spec: &TaskSpec) -> Result<Vec<CatalogItem>, SimError> {
    let g = |k: &str| -> Result<&str, SimError> {
        spec.bindings
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| SimError::BadSpec(format!("{} spec lacks '{k}'", spec.kind)))
    };
    let containers = ["beaker", "petri_dish"];
    let items = match spec.kind {
        TaskKind::PickPlace => {
            let (o, d) = (g("object")?, g("destination")?);
            vec![
                item(o, &[])?,
                item(d, &[])?,
                item(other(&["cuboid", "cylinder"], o), &[])?,
                item(other(&containers, d), &[])?,
            ]
        }
        TaskKind::Pour => {
            let (l, c, s) = (g("liquid")?, g("container")?, g("source")?);
            vec![item(s, &[(l, 50)])?, item(c, &[])?, item(other(&containers, c), &[])?]
        }
        TaskKind::Stir => {
            let (l, c) = (g("liquid")?, g("container")?);
            let second = if l == "water" { "reagent_a" } else { "water" };
            vec![item(c, &[(l, 40), (second, 30)])?, item("stick", &[])?, item(other(&containers, c), &[])?]
        }
        TaskKind::Mix => {
            let (a, b, c) = (g("liquid_a")?, g("liquid_b")?, g("container")?);
            vec![
                item("cup_a", &[(a, 40)])?,
                item("cup_b", &[(b, 40)])?,
                item(c, &[])?,
                item("stick", &[])?,
                item(other(&containers, c), &[])?,
            ]
        }
        TaskKind::Crystallize => {
            let (seed, sol, dish) = (g("seed")?, g("solution")?, g("dish")?);
            vec![item("cup", &[(sol, 50)])?, item(dish, &[])?, item(seed, &[])?]
        }
        TaskKind::Weigh => {
            let o = g("object")?;
            let (first, second) = if o == "cup" {
                (item("cup", &[("reagent_a", 30)])?, item("beaker", &[("water", 50)])?)
            } else {
                (item(o, &[("water", 50)])?, item(other(&["cup", "beaker"], o), &[("reagent_a", 30)])?)
            };
            vec![first, second, item("cuboid", &[])?]
        }
        TaskKind::Shake => {
            let c = g("container")?;
            vec![
                item(c, &[("reagent_a", 40)])?,
                item(other(&["cup", "beaker"], c), &[("water", 30)])?,
                item("stick", &[])?,
            ]
        }
        TaskKind::Freeform => return Err(SimError::BadSpec("freeform tasks have no scene".into())),
    };
    for it in &items {
        if !it.liquids.is_empty() && !it.class.is_container() {
            return Err(SimError::BadSpec(format!("{} cannot hold liquid", it.id)));
        }
    }
    Ok(items)
}

/// Symbolic schema of a spec's scenes (positions do not matter symbolically).
pub fn schema_for(spec: &TaskSpec) -> Result<WorldSchema, SimError> {
    let items = catalog(spec)?;
    let objects = items
        .iter()
        .map(|i| ObjectInfo { id: i.id.clone(), class: i.class, graspable: true, container: i.class.is_container() })
        .collect();
    let liquids = items
        .iter()
        .flat_map(|i| i.liquids.iter().map(move |(l, _)| LiquidInfo { id: l.clone(), container: i.id.clone() }))
        .collect();
    Ok(WorldSchema::from_catalog(objects, liquids, STATIONS.iter().map(|s| s.to_string()).collect()))
}

/// Annulus around the arm's home position where objects are placed.
fn region(kind: TaskKind) -> (f64, f64) {
    match kind {
        TaskKind::Mix | TaskKind::PickPlace => (0.12, 0.34),
        _ => (0.12, 0.30),
    }
}

/// Margin straight routes between points of interest keep from other discs.
pub const ROUTE_MARGIN: f64 = 0.03;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Uniform placement with pairwise clearance `1.5·(r_i + r_j)` and clear straight
/// routes between objects, the home pose, and stations the task visits.
pub fn sample_scene(spec: &TaskSpec, seed: u64) -> Result<LabWorld, SimError> {
    sample_scene_with(spec, seed, SimConfig::default())
}

pub fn sample_scene_with(spec: &TaskSpec, seed: u64, config: SimConfig) -> Result<LabWorld, SimError> {
    let items = catalog(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r_min, r_max) = region(spec.kind);
    let template = LabWorld::new(Vec::new(), seed, config);
    // Station routes only matter for tasks that visit a station.
    let uses_stations = matches!(spec.kind, TaskKind::Crystallize | TaskKind::Weigh | TaskKind::Shake);
    let fixed: Vec<Vec2> = template
        .stations
        .iter()
        .filter(|_| uses_stations)
        .map(|s| s.center)
        .chain([HOME])
        .collect();
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let mut placed: Vec<(Vec2, f64)> = Vec::with_capacity(items.len());
        let mut ok = true;
        for it in &items {
            let r = it.class.radius();
            // Uniform over the annulus area.
            let rho = (rng.random_range(r_min * r_min..r_max * r_max) as f64).sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let p = [HOME[0] + rho * theta.cos(), HOME[1] + rho * theta.sin()];
            if placed.iter().any(|(q, rq)| dist(p, *q) < 1.5 * (r + rq)) || dist(p, HOME) < r + ROUTE_MARGIN {
                ok = false;
                break;
            }
            placed.push((p, r));
        }
        if !ok || !routes_clear(&placed, &fixed) {
            continue;
        }
        let objects = items
            .iter()
            .zip(&placed)
            .map(|(it, (p, r))| SimObject {
                id: it.id.clone(),
                class: it.class,
                pos: *p,
                radius: *r,
                graspable: true,
                inside: None,
            })
            .collect();
        let mut world = LabWorld::new(objects, seed, config);
        for it in items.iter().filter(|it| !it.liquids.is_empty()) {
            let c = world.containers.get_mut(&it.id).expect("container registered");
            for (l, v) in &it.liquids {
                c.contents.insert(l.clone(), *v);
            }
        }
        return Ok(world);
    }
    Err(SimError::PlacementFailed { attempts: MAX_PLACEMENT_ATTEMPTS })
}

/// Checks every route the arm can take: object to object, and object to each
/// station or the home pose. Station-to-station routes are never driven.
fn routes_clear(discs: &[(Vec2, f64)], fixed: &[Vec2]) -> bool {
    let points: Vec<Vec2> = discs.iter().map(|d| d.0).chain(fixed.iter().copied()).collect();
    for i in 0..discs.len() {
        for j in i + 1..points.len() {
            for (k, (c, r)) in discs.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                if point_segment_distance(*c, points[i], points[j]) < r + ROUTE_MARGIN {
                    return false;
                }
            }
        }
    }
    true
}

/// Templates whose filled-in text means the same task as `spec`.
pub fn compatible_templates(spec: &TaskSpec) -> Result<Vec<String>, SimError> {
    let entry = tasks::entry(spec.kind).ok_or(SimError::NoPool(spec.kind))?;
    let schema = schema_for(spec)?;
    let want = tasks::goal_atoms(spec.kind, &tasks::resolve_bindings(spec.kind, &spec.bindings, &schema));
    let mut out = Vec::new();
    for t in &entry.pool {
        let text = tasks::fill_template(t, &spec.bindings);
        let Some(m) = tasks::classify_goal(&text) else { continue };
        if m.kind != spec.kind {
            continue;
        }
        let got = tasks::goal_atoms(m.kind, &tasks::resolve_bindings(m.kind, &m.bindings, &schema));
        if got == want {
            out.push(text);
        }
    }
    Ok(out)
}

/// Uniform choice among the compatible pool templates, slots filled.
pub fn sample_prompt(spec: &TaskSpec, seed: u64) -> Result<String, SimError> {
    if spec.kind == TaskKind::Freeform {
        return Err(SimError::NoPool(spec.kind));
    }
    let pool = compatible_templates(spec)?;
    if pool.is_empty() {
        return Err(SimError::NoPool(spec.kind));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(pool[rng.random_range(0..pool.len())].clone())
}

/// Fills in default bindings so that any spec resolves against its catalog.
pub fn complete_spec(kind: TaskKind, partial: &Bindings) -> Result<TaskSpec, SimError> {
    let base = tasks::entry(kind).ok_or(SimError::NoPool(kind))?;
    // Prefer the first variant agreeing with every given binding.
    let variant = base
        .variants
        .iter()
        .find(|v| partial.iter().all(|(k, val)| v.get(k) == Some(val)))
        .cloned()
        .unwrap_or_else(|| {
            let mut v = base.variants[0].clone();
            v.extend(partial.clone());
            v
        });
    let spec = TaskSpec { kind, bindings: variant };
    catalog(&spec)?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        let spec = TaskSpec::variant(TaskKind::Mix, 0);
        assert_eq!(sample_scene(&spec, 7).unwrap().hash(), sample_scene(&spec, 7).unwrap().hash());
        assert_ne!(sample_scene(&spec, 7).unwrap().hash(), sample_scene(&spec, 8).unwrap().hash());
    }

    #[test]
    fn crystallize_catalog() {
        let w = sample_scene(&TaskSpec::variant(TaskKind::Crystallize, 0), 1).unwrap();
        assert!(w.object("petri_dish").is_some());
        assert!(w.object("cuboid").is_some());
        assert_eq!(w.containers["cup"].contents.get("solution"), Some(&50));
    }

    #[test]
    fn prompts() {
        let spec = TaskSpec::new(TaskKind::Pour, &[("liquid", "water"), ("container", "beaker"), ("source", "cup")]);
        let pool = compatible_templates(&spec).unwrap();
        assert!(pool.contains(&"Pour water into beaker.".to_string()));
        let spec = TaskSpec::variant(TaskKind::Stir, 0);
        assert!(compatible_templates(&spec).unwrap().contains(&"Perform stirring.".to_string()));
        assert_eq!(sample_prompt(&spec, 3).unwrap(), sample_prompt(&spec, 3).unwrap());
        assert!(matches!(
            sample_prompt(&TaskSpec::new(TaskKind::Freeform, &[]), 0),
            Err(SimError::NoPool(_))
        ));
    }

    #[test]
    fn every_variant_has_prompts() {
        for e in tasks::entries() {
            for v in &e.variants {
                let spec = TaskSpec { kind: e.kind, bindings: v.clone() };
                assert!(!compatible_templates(&spec).unwrap().is_empty(), "{spec:?}");
            }
        }
    }
}
