use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use super::embed::{time_embedding, TIME_DIM};
use super::schedule::NoiseSchedule;
use super::PredictorError;

const MAGIC: &[u8; 4] = b"LPDN";
const VERSION: u32 = 1;

/// Conditioning of one chain: current state, instruction embedding, and the
/// horizon position in `(0, 1]` of the frame being generated.
#[derive(Debug, Clone, PartialEq)]
pub struct Cond {
    pub current: Vec<f64>,
    pub instruction: Vec<f64>,
    pub horizon: f64,
}

/// Anything that predicts the injected noise.
pub trait NoiseModel {
    fn predict_noise(&self, x_t: &[f64], t: usize, cond: &Cond) -> Vec<f64>;
}

/// Two-hidden-layer SiLU network. The last layer estimates x̂0 and the noise is
/// read off the forward closed form, `ε̂ = (x_t − √ᾱ_t·x̂0) / √(1−ᾱ_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Frames per predicted horizon.
    pub horizon: usize,
    pub schedule: NoiseSchedule,
    pub params: Vec<f64>,
    /// Optimizer steps taken; zero means untrained.
    pub trained_steps: u64,
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Offsets of each parameter block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub input: usize,
    pub hidden: usize,
    pub out: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub w3: usize,
    pub b3: usize,
    pub total: usize,
}

impl Layout {
    fn new(dim: usize, embed_dim: usize, hidden: usize) -> Self {
        let input = 2 * dim + embed_dim + TIME_DIM + 1;
        let w1 = 0;
        let b1 = w1 + hidden * input;
        let w2 = b1 + hidden;
        let b2 = w2 + hidden * hidden;
        let w3 = b2 + hidden;
        let b3 = w3 + dim * hidden;
        let total = b3 + dim;
        Layout { input, hidden, out: dim, w1, b1, w2, b2, w3, b3, total }
    }
}

/// Activations kept for the backward pass.
pub(crate) struct Cache {
    pub input: Vec<f64>,
    pub pre1: Vec<f64>,
    pub h1: Vec<f64>,
    pub pre2: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: Vec<f64>,
}

impl Denoiser {
    pub fn new(dim: usize, embed_dim: usize, hidden: usize, horizon: usize, schedule: NoiseSchedule, rng: &mut impl Rng) -> Self {
        let l = Layout::new(dim, embed_dim, hidden);
        let mut params = vec![0.0; l.total];
        let mut init = |start: usize, fan_in: usize, fan_out: usize, scale: f64| {
            let s = scale * (2.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[start..start + fan_in * fan_out] {
                *p = s * rng.sample::<f64, _>(StandardNormal);
            }
        };
        init(l.w1, l.input, hidden, 1.0);
        init(l.w2, hidden, hidden, 1.0);
        init(l.w3, hidden, dim, 0.1);
        Denoiser { dim, embed_dim, hidden, horizon, schedule, params, trained_steps: 0 }
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.dim, self.embed_dim, self.hidden)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub(crate) fn input(&self, x_t: &[f64], t: usize, cond: &Cond) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().input);
        v.extend_from_slice(x_t);
        v.extend_from_slice(&cond.current);
        v.extend_from_slice(&cond.instruction);
        v.extend_from_slice(&time_embedding(t, self.schedule.steps));
        v.push(cond.horizon);
        v
    }

    pub(crate) fn forward(&self, input: Vec<f64>) -> Cache {
        let l = self.layout();
        let p = &self.params;
        let dense = |w: usize, b: usize, x: &[f64], rows: usize| -> Vec<f64> {
            let cols = x.len();
            (0..rows)
                .map(|r| {
                    let row = &p[w + r * cols..w + (r + 1) * cols];
                    p[b + r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect()
        };
        let pre1 = dense(l.w1, l.b1, &input, l.hidden);
        let h1: Vec<f64> = pre1.iter().map(|x| silu(*x)).collect();
        let pre2 = dense(l.w2, l.b2, &h1, l.hidden);
        let h2: Vec<f64> = pre2.iter().map(|x| silu(*x)).collect();
        let out = dense(l.w3, l.b3, &h2, l.out);
        Cache { input, pre1, h1, pre2, h2, out }
    }

    /// Adds `d loss / d params` for one sample to `grad`, given `d loss / d out`.
    pub(crate) fn backward(&self, cache: &Cache, d_out: &[f64], grad: &mut [f64]) {
        let l = self.layout();
        let p = &self.params;
        let back = |w: usize, b: usize, x: &[f64], d: &[f64], grad: &mut [f64]| -> Vec<f64> {
            let cols = x.len();
            let mut dx = vec![0.0; cols];
            for (r, dr) in d.iter().enumerate() {
                if *dr == 0.0 {
                    continue;
                }
                grad[b + r] += dr;
                let off = w + r * cols;
                for c in 0..cols {
                    grad[off + c] += dr * x[c];
                    dx[c] += dr * p[off + c];
                }
            }
            dx
        };
        let dh2 = back(l.w3, l.b3, &cache.h2, d_out, grad);
        let d2: Vec<f64> = dh2.iter().zip(&cache.pre2).map(|(g, x)| g * silu_grad(*x)).collect();
        let dh1 = back(l.w2, l.b2, &cache.h1, &d2, grad);
        let d1: Vec<f64> = dh1.iter().zip(&cache.pre1).map(|(g, x)| g * silu_grad(*x)).collect();
        back(l.w1, l.b1, &cache.input, &d1, grad);
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), PredictorError> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        for v in [self.dim, self.embed_dim, self.hidden, self.horizon, self.schedule.steps] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        out.write_all(&self.trained_steps.to_le_bytes())?;
        for b in &self.schedule.beta {
            out.write_all(&b.to_le_bytes())?;
        }
        out.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self, PredictorError> {
        let mut m = [0u8; 4];
        input.read_exact(&mut m)?;
        if &m != MAGIC {
            return Err(PredictorError::BadCheckpoint("bad magic".into()));
        }
        let mut u32s = [0u32; 6];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        let [version, dim, embed_dim, hidden, horizon, steps] = u32s.map(|v| v as usize);
        if version != VERSION as usize {
            return Err(PredictorError::BadCheckpoint(format!("version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> Result<u64, PredictorError> {
            input.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let trained_steps = next_u64(&mut input)?;
        let beta = (0..steps).map(|_| next_u64(&mut input).map(f64::from_bits)).collect::<Result<Vec<_>, _>>()?;
        let n = next_u64(&mut input)? as usize;
        let expected = Layout::new(dim, embed_dim, hidden).total;
        if n != expected {
            return Err(PredictorError::BadCheckpoint(format!("{n} parameters, expected {expected}")));
        }
        let params = (0..n).map(|_| next_u64(&mut input).map(f64::from_bits)).collect::<Result<Vec<_>, _>>()?;
        let schedule = NoiseSchedule::from_betas(beta)?;
        Ok(Denoiser { dim, embed_dim, hidden, horizon, schedule, params, trained_steps })
    }
}

impl Denoiser {
    /// ε̂ from the network's x̂0 output.
    pub(crate) fn noise_from_x0(&self, x_t: &[f64], t: usize, x0_hat: &[f64]) -> Vec<f64> {
        let a = self.schedule.alpha_bar[t];
        let (s, n) = (a.sqrt(), (1.0 - a).sqrt());
        x_t.iter().zip(x0_hat).map(|(x, o)| (x - s * o) / n).collect()
    }
}

impl NoiseModel for Denoiser {
    fn predict_noise(&self, x_t: &[f64], t: usize, cond: &Cond) -> Vec<f64> {
        let out = self.forward(self.input(x_t, t, cond)).out;
        self.noise_from_x0(x_t, t, &out)
    }
}
