//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use labplan::grounder::{Primitive, PrimitiveSeq};
use labplan::simulator::LabWorld;
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

const VERB_PHRASES: &[&str] = &[
    "pick up", "grab", "take", "place", "put", "set down", "move", "carry", "transfer", "pour", "decant",
    "stir", "agitate", "add", "dispense", "wait", "incubate", "weigh", "measure", "shake",
];
const NOUNS: &[&str] = &[
    "cuboid", "beaker", "petri dish", "cup", "stick", "water", "reagent A", "reagent B", "solution",
    "flask", "balance", "shaker", "crystallization station",
];
const PREPS: &[&str] = &["in", "into", "on", "next to", "from", "with", "at", "to", "out of"];

/// One well-formed instruction: verb phrase, theme, optional prepositional argument.
pub fn instruction(rng: &mut impl RngCore) -> String {
    let mut s = format!("{} {}", VERB_PHRASES.choose(rng).unwrap(), NOUNS.choose(rng).unwrap());
    if rng.random_bool(0.6) {
        s.push_str(&format!(" {} {}", PREPS.choose(rng).unwrap(), NOUNS.choose(rng).unwrap()));
    }
    s
}

/// Numbered plan text with 1..=max_steps steps.
pub fn plan_text(rng: &mut impl RngCore, max_steps: usize) -> String {
    let n = rng.random_range(1..=max_steps);
    (1..=n).map(|i| format!("{i}. {}", instruction(rng))).collect::<Vec<_>>().join("\n")
}

/// Statically valid primitive sequence over `targets`: grasps alternate and
/// pour/stir only appear while engaged.
pub fn primitive_seq(rng: &mut impl RngCore, targets: &[String], max_len: usize) -> PrimitiveSeq {
    let n = rng.random_range(0..=max_len);
    let mut engaged: Option<bool> = None;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = match rng.random_range(0..4) {
            0 | 1 => Primitive::move_to(targets.choose(rng).unwrap().clone()),
            2 => {
                let next = !engaged.unwrap_or(false);
                engaged = Some(next);
                Primitive::Grasp { engage: next }
            }
            _ if engaged == Some(true) => {
                if rng.random_bool(0.5) { Primitive::Pour } else { Primitive::Stir }
            }
            _ => continue,
        };
        out.push(p);
    }
    PrimitiveSeq::new(out)
}

/// Object ids and station ids of a world.
pub fn move_targets(world: &LabWorld) -> Vec<String> {
    world.objects.iter().map(|o| o.id.clone()).chain(world.stations.iter().map(|s| s.id.clone())).collect()
}

/// Unit-cost edit distance between two sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1];
        for (j, y) in b.iter().enumerate() {
            let v = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
            cur.push(v);
        }
        prev = cur;
    }
    prev[b.len()]
}
