//! Conditional denoising diffusion over normalized world-state vectors.
//!
//! The chain runs on the residual between a future frame and the current
//! state; samples are added back onto the current state and clamped to the
//! normalized box.

mod data;
mod embed;
mod model;
mod schedule;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use data::{horizon_frames, read_jsonl, record_state, write_jsonl, Triple};
pub use embed::{embed_instruction, time_embedding, InstructionEmbedding, EMBED_DIM, TIME_DIM};
pub use model::{Cond, Denoiser, NoiseModel};
pub use schedule::{make_schedule, NoiseSchedule, BETA_END, BETA_START};
pub use train::{evaluate_loss, held_out_mse, train, HeldOutReport, LossCurve, PredictorConfig};

use crate::simulator::StateVec;

/// Default frames per horizon.
pub const DEFAULT_HORIZON: usize = 8;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("diffusion needs at least one step, got {0}")]
    InvalidSteps(usize),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Full reverse chain from `x_T ~ N(0, I)` down to `x_0`.
pub fn sample_chain(model: &impl NoiseModel, schedule: &NoiseSchedule, dim: usize, cond: &Cond, rng: &mut impl Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    for t in (1..=schedule.steps).rev() {
        let eps = model.predict_noise(&x, t, cond);
        let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        x = schedule.reverse_step(&x, t, &eps, &z);
    }
    x
}

/// Frame `k` of `horizon` (1-based) for one instruction.
pub fn predict_frame(
    model: &Denoiser,
    current: &StateVec,
    instruction: &str,
    k: usize,
    horizon: usize,
    seed: u64,
) -> Result<StateVec, PredictorError> {
    if model.trained_steps == 0 {
        return Err(PredictorError::UntrainedModel);
    }
    if current.dim() != model.dim {
        return Err(PredictorError::DimensionMismatch { expected: model.dim, found: current.dim() });
    }
    let cond = Cond {
        current: current.0.clone(),
        instruction: embed_instruction(instruction, model.embed_dim).0,
        horizon: k as f64 / horizon.max(1) as f64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let x = sample_chain(model, &model.schedule, model.dim, &cond, &mut rng);
    Ok(StateVec(current.0.iter().zip(&x).map(|(c, d)| (c + d).clamp(-1.0, 1.0)).collect()))
}

/// `k` future states, one reverse chain each. Pure given the seed.
pub fn predict_future(
    model: &Denoiser,
    current: &StateVec,
    instruction: &str,
    k: usize,
    seed: u64,
) -> Result<Vec<StateVec>, PredictorError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    (1..=k).map(|j| predict_frame(model, current, instruction, j, k, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Knows x0 and reports the noise that explains x_t exactly.
    struct Oracle<'a> {
        x0: &'a [f64],
        schedule: &'a NoiseSchedule,
    }

    impl NoiseModel for Oracle<'_> {
        fn predict_noise(&self, x_t: &[f64], t: usize, _: &Cond) -> Vec<f64> {
            let a = self.schedule.alpha_bar[t];
            x_t.iter().zip(self.x0).map(|(x, x0)| (x - a.sqrt() * x0) / (1.0 - a).sqrt()).collect()
        }
    }

    fn cond() -> Cond {
        Cond { current: vec![], instruction: vec![], horizon: 1.0 }
    }

    #[test]
    fn oracle_chain_recovers_x0() {
        let s = make_schedule(100).unwrap();
        let x0 = [0.7, -0.3, 0.05, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = sample_chain(&Oracle { x0: &x0, schedule: &s }, &s, 4, &cond(), &mut rng);
        for (a, b) in out.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn composed_steps_match_closed_form_in_distribution() {
        // Composition of Gaussian steps: x_t = √ᾱ_t·x0 + noise with variance 1 − ᾱ_t.
        let s = make_schedule(100).unwrap();
        let x0 = [0.4];
        let t = 37;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 20_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..draws {
            let mut x = x0.to_vec();
            for step in 1..=t {
                let z = [rng.sample::<f64, _>(StandardNormal)];
                x = s.forward_step(&x, step, &z);
            }
            sum += x[0];
            sq += x[0] * x[0];
        }
        let mean = sum / draws as f64;
        let var = sq / draws as f64 - mean * mean;
        assert!((mean - s.alpha_bar[t].sqrt() * 0.4).abs() < 0.02);
        assert!((var - (1.0 - s.alpha_bar[t])).abs() < 0.03);
    }

    #[test]
    fn composed_steps_match_closed_form_exactly() {
        let s = make_schedule(100).unwrap();
        let x0 = [0.4, -0.9];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = 64;
        let zs: Vec<[f64; 2]> = (0..t).map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        let mut x = x0.to_vec();
        for (i, z) in zs.iter().enumerate() {
            x = s.forward_step(&x, i + 1, z);
        }
        // accumulated noise, renormalized to a unit draw
        let mut z_eff = [0.0; 2];
        for (i, z) in zs.iter().enumerate() {
            let tail: f64 = ((i + 2)..=t).map(|r| (1.0 - s.beta_at(r)).sqrt()).product();
            let c = tail * s.beta_at(i + 1).sqrt();
            z_eff[0] += c * z[0];
            z_eff[1] += c * z[1];
        }
        let norm = (1.0 - s.alpha_bar[t]).sqrt();
        let closed = s.forward_noise(&x0, t, &[z_eff[0] / norm, z_eff[1] / norm]);
        for (a, b) in x.iter().zip(&closed) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn untrained_model_refuses_and_zero_horizon_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Denoiser::new(2, 4, 4, 2, make_schedule(5).unwrap(), &mut rng);
        let cur = StateVec(vec![0.0, 0.0]);
        assert!(matches!(predict_future(&m, &cur, "pour", 2, 0), Err(PredictorError::UntrainedModel)));
        assert!(predict_future(&m, &cur, "pour", 0, 0).unwrap().is_empty());
    }

    #[test]
    fn constant_future_is_memorized() {
        let t = Triple {
            state: StateVec(vec![0.2, -0.4, 0.6]),
            instruction: "pick up cuboid".into(),
            future: vec![StateVec(vec![0.2, -0.4, 0.6]); 2],
            task: None,
        };
        let data = vec![t; 4];
        let cfg = PredictorConfig { diffusion_steps: 20, hidden: 32, learning_rate: 3e-3, batch_size: 16, train_steps: 1500, ..PredictorConfig::default() };
        let (m, curve) = train(&data, &cfg).unwrap();
        assert!(curve.values.last().unwrap() < curve.values.first().unwrap());
        let pred = predict_future(&m, &data[0].state, "pick up cuboid", 2, 1).unwrap();
        assert_eq!(pred.len(), 2);
        assert!(pred[1].mse(&data[0].future[1]) < 1e-2, "{:?}", pred[1]);
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let t = Triple { state: StateVec(vec![0.0, 0.5]), instruction: "pour".into(), future: vec![StateVec(vec![0.3, 0.5])], task: None };
        let cfg = PredictorConfig { diffusion_steps: 10, hidden: 8, train_steps: 50, log_every: 10, ..PredictorConfig::default() };
        let (a, ca) = train(&[t.clone()], &cfg).unwrap();
        let (b, cb) = train(&[t], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        assert!(matches!(train(&[], &cfg), Err(PredictorError::EmptyDataset)));
    }
}
