use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::Triple;
use super::embed::embed_instruction;
use super::model::{Cond, Denoiser};
use super::schedule::make_schedule;
use super::{predict_frame, PredictorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    /// Diffusion steps T.
    pub diffusion_steps: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Optimizer steps.
    pub train_steps: usize,
    /// SNR clip in the loss weight.
    pub snr_gamma: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub seed: u64,
    /// Loss-curve resolution in optimizer steps.
    pub log_every: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            diffusion_steps: 100,
            hidden: 128,
            embed_dim: super::EMBED_DIM,
            learning_rate: 1e-5,
            batch_size: 1,
            train_steps: 20_000,
            snr_gamma: 5.0,
            grad_clip: 1.0,
            seed: 0,
            log_every: 100,
        }
    }
}

impl PredictorConfig {
    /// Larger step and batch so a CPU run converges in minutes.
    pub fn desk() -> Self {
        PredictorConfig { learning_rate: 1e-3, batch_size: 32, train_steps: 6000, ..PredictorConfig::default() }
    }
}

/// Mean weighted loss per `log_every` window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub every: usize,
    pub values: Vec<f64>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{v:.8}\n", (i + 1) * self.every));
        }
        s
    }
}

struct Prepared {
    current: Vec<f64>,
    instruction: Vec<f64>,
    future: Vec<Vec<f64>>,
}

fn prepare(data: &[Triple], embed_dim: usize) -> Result<(usize, usize, Vec<Prepared>), PredictorError> {
    let first = data.first().ok_or(PredictorError::EmptyDataset)?;
    let dim = first.state.dim();
    let horizon = first.future.len();
    if horizon == 0 {
        return Err(PredictorError::DimensionMismatch { expected: 1, found: 0 });
    }
    let mut out = Vec::with_capacity(data.len());
    for d in data {
        if d.future.len() != horizon {
            return Err(PredictorError::DimensionMismatch { expected: horizon, found: d.future.len() });
        }
        for s in std::iter::once(&d.state).chain(&d.future) {
            if s.dim() != dim {
                return Err(PredictorError::DimensionMismatch { expected: dim, found: s.dim() });
            }
        }
        out.push(Prepared {
            current: d.state.0.clone(),
            instruction: embed_instruction(&d.instruction, embed_dim).0,
            future: d.future.iter().map(|f| f.0.clone()).collect(),
        });
    }
    Ok((dim, horizon, out))
}

/// One draw of the training objective; returns the weighted loss and fills the
/// gradient when `grad` is given.
fn sample_loss(
    model: &Denoiser,
    sample: &Prepared,
    rng: &mut ChaCha8Rng,
    gamma: f64,
    scale: f64,
    grad: Option<&mut [f64]>,
) -> f64 {
    let horizon = sample.future.len();
    let k = rng.random_range(0..horizon);
    let x0: Vec<f64> = sample.future[k].iter().zip(&sample.current).map(|(f, c)| f - c).collect();
    let t = rng.random_range(1..=model.schedule.steps);
    let z: Vec<f64> = (0..model.dim).map(|_| rng.sample(StandardNormal)).collect();
    let x_t = model.schedule.forward_noise(&x0, t, &z);
    let cond = Cond { current: sample.current.clone(), instruction: sample.instruction.clone(), horizon: (k + 1) as f64 / horizon as f64 };
    let cache = model.forward(model.input(&x_t, t, &cond));
    let eps = model.noise_from_x0(&x_t, t, &cache.out);
    let w = model.schedule.min_snr_weight(t, gamma);
    let n = model.dim as f64;
    let loss = w * eps.iter().zip(&z).map(|(o, e)| (o - e) * (o - e)).sum::<f64>() / n;
    if let Some(g) = grad {
        // dε̂/dx̂0 = −√SNR_t
        let d = -model.schedule.snr(t).sqrt();
        let d_out: Vec<f64> = eps.iter().zip(&z).map(|(o, e)| scale * 2.0 * w * (o - e) * d / n).collect();
        model.backward(&cache, &d_out, g);
    }
    loss
}

/// Trains a fresh denoiser with Adam on the SNR-weighted noise-prediction loss.
pub fn train(data: &[Triple], config: &PredictorConfig) -> Result<(Denoiser, LossCurve), PredictorError> {
    let (dim, horizon, prepared) = prepare(data, config.embed_dim)?;
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(PredictorError::InvalidConfig("batch_size and learning_rate must be positive".into()));
    }
    let schedule = make_schedule(config.diffusion_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Denoiser::new(dim, config.embed_dim, config.hidden, horizon, schedule, &mut rng);
    let n = model.params.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let every = config.log_every.max(1);
    let mut curve = LossCurve { every, values: Vec::new() };
    let mut window = 0.0;
    let mut grad = vec![0.0; n];
    for step in 1..=config.train_steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let scale = 1.0 / config.batch_size as f64;
        for _ in 0..config.batch_size {
            let i = rng.random_range(0..prepared.len());
            loss += sample_loss(&model, &prepared[i], &mut rng, config.snr_gamma, scale, Some(&mut grad)) * scale;
        }
        if !loss.is_finite() {
            return Err(PredictorError::Diverged { step });
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if config.grad_clip > 0.0 && norm > config.grad_clip {
            let s = config.grad_clip / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
        let c1 = 1.0 - b1.powi(step as i32);
        let c2 = 1.0 - b2.powi(step as i32);
        for i in 0..n {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            model.params[i] -= config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
        model.trained_steps += 1;
        window += loss;
        if step % every == 0 {
            curve.values.push(window / every as f64);
            window = 0.0;
        }
    }
    if !model.is_finite() {
        return Err(PredictorError::Diverged { step: config.train_steps });
    }
    Ok((model, curve))
}

/// Mean weighted loss over `draws` fixed-seed samples of the objective.
pub fn evaluate_loss(model: &Denoiser, data: &[Triple], draws: usize, seed: u64) -> Result<f64, PredictorError> {
    let (dim, _, prepared) = prepare(data, model.embed_dim)?;
    if dim != model.dim {
        return Err(PredictorError::DimensionMismatch { expected: model.dim, found: dim });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..draws {
        let i = rng.random_range(0..prepared.len());
        total += sample_loss(model, &prepared[i], &mut rng, 5.0, 1.0, None);
    }
    Ok(total / draws.max(1) as f64)
}

/// Held-out final-frame error of the model and of copying the current state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOutReport {
    pub mse: f64,
    pub copy_mse: f64,
    pub samples: usize,
}

/// Final-frame MSE on `data`. With `shuffle_instructions` each triple is paired
/// with another triple's instruction.
pub fn held_out_mse(model: &Denoiser, data: &[Triple], seed: u64, shuffle_instructions: bool) -> Result<HeldOutReport, PredictorError> {
    if data.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    let mut instructions: Vec<&str> = data.iter().map(|d| d.instruction.as_str()).collect();
    if shuffle_instructions {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_5546);
        instructions.shuffle(&mut rng);
    }
    let (mut mse, mut copy) = (0.0, 0.0);
    for (i, (d, instr)) in data.iter().zip(instructions).enumerate() {
        let last = d.future.last().ok_or(PredictorError::DimensionMismatch { expected: 1, found: 0 })?;
        let k = model.horizon.max(1);
        let pred = predict_frame(model, &d.state, instr, k, k, seed.wrapping_add(i as u64))?;
        mse += pred.mse(last);
        copy += d.state.mse(last);
    }
    let n = data.len() as f64;
    Ok(HeldOutReport { mse: mse / n, copy_mse: copy / n, samples: data.len() })
}
