use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EMBED_DIM: usize = 32;
pub const TIME_DIM: usize = 16;

/// Hashed bag of unigrams and bigrams, L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionEmbedding(pub Vec<f64>);

fn bucket(token: &str, dim: usize) -> (usize, f64) {
    let h = Sha256::digest(token.as_bytes());
    let idx = u32::from_le_bytes([h[0], h[1], h[2], h[3]]) as usize % dim;
    let sign = if h[4] & 1 == 0 { 1.0 } else { -1.0 };
    (idx, sign)
}

pub fn embed_instruction(text: &str, dim: usize) -> InstructionEmbedding {
    let mut v = vec![0.0; dim];
    if dim == 0 {
        return InstructionEmbedding(v);
    }
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric() && c != '_').filter(|t| !t.is_empty()).collect();
    for t in &tokens {
        let (i, s) = bucket(t, dim);
        v[i] += s;
    }
    for w in tokens.windows(2) {
        let (i, s) = bucket(&format!("{} {}", w[0], w[1]), dim);
        v[i] += 0.5 * s;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    InstructionEmbedding(v)
}

/// Sinusoidal features of `t / T`.
pub fn time_embedding(t: usize, steps: usize) -> [f64; TIME_DIM] {
    let x = t as f64 / steps.max(1) as f64;
    let mut out = [0.0; TIME_DIM];
    for k in 0..TIME_DIM / 2 {
        let freq = std::f64::consts::PI * f64::from(1u32 << k.min(20)) / 2.0;
        out[2 * k] = (freq * x).sin();
        out[2 * k + 1] = (freq * x).cos();
    }
    out
}
