use serde::{Deserialize, Serialize};

use super::PredictorError;

/// β range at the 1000-step reference length. Shorter chains scale both ends
/// by `1000 / T`, at most 10×, so the terminal marginal stays close to a
/// standard normal without β approaching 1.
pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 2e-2;
const REFERENCE_STEPS: f64 = 1000.0;
const MAX_SCALE: f64 = 10.0;

/// Linear noise schedule. `alpha_bar[0] = 1`; index `t` runs 1..=T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    /// `beta[t - 1]` is β_t.
    pub beta: Vec<f64>,
    /// `alpha_bar[t]` is ᾱ_t, with ᾱ_0 = 1.
    pub alpha_bar: Vec<f64>,
    /// `sigma[t - 1] = √β_t`.
    pub sigma: Vec<f64>,
}

pub fn make_schedule(steps: usize) -> Result<NoiseSchedule, PredictorError> {
    if steps == 0 {
        return Err(PredictorError::InvalidSteps(steps));
    }
    let scale = (REFERENCE_STEPS / steps as f64).min(MAX_SCALE);
    let (lo, hi) = (BETA_START * scale, BETA_END * scale);
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            let frac = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
            lo + (hi - lo) * frac
        })
        .collect();
    NoiseSchedule::from_betas(beta)
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self, PredictorError> {
        if beta.is_empty() {
            return Err(PredictorError::InvalidSteps(0));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(PredictorError::InvalidSchedule(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(beta.len() + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        let sigma = beta.iter().map(|b| b.sqrt()).collect();
        Ok(NoiseSchedule { steps: beta.len(), beta, alpha_bar, sigma })
    }

    pub fn beta_at(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    /// ᾱ_t / (1 − ᾱ_t).
    pub fn snr(&self, t: usize) -> f64 {
        let a = self.alpha_bar[t];
        a / (1.0 - a)
    }

    /// Loss weight `min(SNR, γ) / SNR`.
    pub fn min_snr_weight(&self, t: usize, gamma: f64) -> f64 {
        let s = self.snr(t);
        s.min(gamma) / s
    }

    /// Closed form `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·z`.
    pub fn forward_noise(&self, x0: &[f64], t: usize, z: &[f64]) -> Vec<f64> {
        let a = self.alpha_bar[t];
        let (s, n) = (a.sqrt(), (1.0 - a).sqrt());
        x0.iter().zip(z).map(|(x, e)| s * x + n * e).collect()
    }

    /// One transition of the forward chain: `x_t = √(1−β_t)·x_{t−1} + √β_t·z`.
    pub fn forward_step(&self, x_prev: &[f64], t: usize, z: &[f64]) -> Vec<f64> {
        let b = self.beta_at(t);
        let (s, n) = ((1.0 - b).sqrt(), b.sqrt());
        x_prev.iter().zip(z).map(|(x, e)| s * x + n * e).collect()
    }

    /// `x_{t−1} = (x_t − β_t/√(1−ᾱ_t)·ε̂) / √(1−β_t) + σ_t·z`, with `z` ignored at t = 1.
    pub fn reverse_step(&self, x_t: &[f64], t: usize, eps: &[f64], z: &[f64]) -> Vec<f64> {
        let b = self.beta_at(t);
        let c = b / (1.0 - self.alpha_bar[t]).sqrt();
        let inv = 1.0 / (1.0 - b).sqrt();
        let sig = if t > 1 { self.sigma[t - 1] } else { 0.0 };
        x_t.iter()
            .zip(eps)
            .enumerate()
            .map(|(i, (x, e))| inv * (x - c * e) + sig * z.get(i).copied().unwrap_or(0.0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_steps_strictly_decreasing() {
        let s = make_schedule(100).unwrap();
        assert_eq!(s.beta.len(), 100);
        assert_eq!(s.alpha_bar[0], 1.0);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(s.beta.iter().all(|b| *b > 0.0 && *b < 1.0));
    }

    #[test]
    fn single_step() {
        let s = make_schedule(1).unwrap();
        assert_eq!(s.alpha_bar[1], 1.0 - s.beta[0]);
        assert!(matches!(make_schedule(0), Err(PredictorError::InvalidSteps(0))));
    }

    #[test]
    fn thousand_steps_match_reference_range() {
        let s = make_schedule(1000).unwrap();
        assert!((s.beta[0] - BETA_START).abs() < 1e-15);
        assert!((s.beta[999] - BETA_END).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_forward_and_zero_eps_reverse() {
        let s = make_schedule(50).unwrap();
        let x = [0.5, -0.25];
        let xt = s.forward_noise(&x, 17, &[0.0, 0.0]);
        assert!((xt[0] - s.alpha_bar[17].sqrt() * 0.5).abs() < 1e-15);
        let back = s.reverse_step(&xt, 17, &[0.0, 0.0], &[0.0, 0.0]);
        assert!((back[0] - xt[0] / (1.0 - s.beta_at(17)).sqrt()).abs() < 1e-15);
    }
}
