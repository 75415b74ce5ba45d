//! Controlled output corruption for degraded-planner ablations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, CompletionRequest};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    /// Per-line probability of an edit.
    pub rate: f64,
    pub seed: u64,
}

/// Edits each line with probability `rate`: delete it, duplicate it, or swap
/// it with the next line. Every line consumes the same draws whatever the
/// rate, so a higher rate corrupts a superset of the lines a lower one does.
pub fn corrupt_lines(lines: &[String], rate: f64, rng: &mut impl Rng) -> Vec<String> {
    let draws: Vec<(f64, u8)> = lines.iter().map(|_| (rng.random::<f64>(), rng.random_range(0..3u8))).collect();
    let mut work: Vec<String> = lines.to_vec();
    let mut out = Vec::with_capacity(lines.len() + 2);
    let mut i = 0;
    while i < work.len() {
        let (u, op) = draws.get(i).copied().unwrap_or((1.0, 0));
        if u >= rate {
            out.push(work[i].clone());
            i += 1;
            continue;
        }
        match op {
            0 => {}
            1 => {
                out.push(work[i].clone());
                out.push(work[i].clone());
            }
            _ => {
                if i + 1 < work.len() {
                    work.swap(i, i + 1);
                }
                out.push(work[i].clone());
            }
        }
        i += 1;
    }
    out
}

fn strip_number(line: &str) -> Option<&str> {
    let (num, rest) = line.trim_start().split_once('.')?;
    (!num.is_empty() && num.chars().all(|c| c.is_ascii_digit())).then(|| rest.trim_start())
}

/// Corrupts the responses of the selected request tags. Numbered lists are
/// renumbered after editing.
pub struct CorruptingBackend {
    inner: Arc<dyn Backend>,
    corruption: Corruption,
    tags: Vec<String>,
}

impl CorruptingBackend {
    pub fn new(inner: Arc<dyn Backend>, corruption: Corruption, tags: &[&str]) -> Self {
        CorruptingBackend { inner, corruption, tags: tags.iter().map(|t| t.to_string()).collect() }
    }

    /// Corrupts plan decomposition and flat primitive sampling.
    pub fn planner_noise(inner: Arc<dyn Backend>, corruption: Corruption) -> Self {
        Self::new(inner, corruption, &["reasoner/decompose", "reasoner/direct", "flat/sample"])
    }
}

impl Backend for CorruptingBackend {
    fn identity(&self) -> String {
        format!("corrupt({:.2}):{}", self.corruption.rate, self.inner.identity())
    }

    fn respond(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let text = self.inner.respond(request)?;
        if self.corruption.rate <= 0.0 || !self.tags.iter().any(|t| *t == request.tag) {
            return Ok(text);
        }
        let digest = Sha256::new()
            .chain_update(self.corruption.seed.to_le_bytes())
            .chain_update(request.hash().as_bytes())
            .finalize();
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let numbered = !lines.is_empty() && lines.iter().all(|l| strip_number(l).is_some());
        let bodies: Vec<String> =
            lines.iter().map(|l| if numbered { strip_number(l).unwrap_or(l) } else { l }.to_string()).collect();
        let edited = corrupt_lines(&bodies, self.corruption.rate, &mut rng);
        let out: Vec<String> = if numbered {
            edited.iter().enumerate().map(|(i, l)| format!("{}. {l}", i + 1)).collect()
        } else {
            edited
        };
        Ok(out.join("\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("step {i}")).collect()
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(corrupt_lines(&lines(6), 0.0, &mut rng), lines(6));
    }

    #[test]
    fn full_rate_changes_something() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_ne!(corrupt_lines(&lines(6), 1.0, &mut rng), lines(6));
    }

    #[test]
    fn numbered_lists_are_renumbered() {
        struct Fixed;
        impl Backend for Fixed {
            fn identity(&self) -> String {
                "fixed".into()
            }
            fn respond(&self, _: &CompletionRequest) -> Result<String, BackendError> {
                Ok("1. a\n2. b\n3. c\n4. d".into())
            }
        }
        let b = CorruptingBackend::planner_noise(Arc::new(Fixed), Corruption { rate: 1.0, seed: 3 });
        let out = b.respond(&CompletionRequest::new("reasoner/decompose", "", "")).unwrap();
        for (i, l) in out.lines().enumerate() {
            assert!(l.starts_with(&format!("{}. ", i + 1)), "{out}");
        }
        let untouched = b.respond(&CompletionRequest::new("reasoner/interpret", "", "")).unwrap();
        assert_eq!(untouched, "1. a\n2. b\n3. c\n4. d");
    }
}
