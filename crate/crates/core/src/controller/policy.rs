use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::{ControlAction, ControlObservation, Driver, V_MAX};

/// Inputs of the linear map: vector to target, obstacle vector, bias.
pub const FEATURES: usize = 5;

const MAGIC: &[u8; 4] = b"LPPL";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("not a policy checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint has {found} features, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn features(obs: &ControlObservation) -> [f64; FEATURES] {
    [obs.to_target[0], obs.to_target[1], obs.obstacle[0], obs.obstacle[1], 1.0]
}

/// `v = clamp(W·φ(obs))` with optional Gaussian exploration on the velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    /// Row-major 2 × FEATURES.
    pub weights: Vec<f64>,
    pub noise: f64,
    pub v_max: f64,
}

impl Default for LinearPolicy {
    fn default() -> Self {
        LinearPolicy { weights: vec![0.0; 2 * FEATURES], noise: 0.0, v_max: V_MAX }
    }
}

impl LinearPolicy {
    pub fn mean(&self, obs: &ControlObservation) -> [f64; 2] {
        let f = features(obs);
        let row = |r: usize| (0..FEATURES).map(|j| self.weights[r * FEATURES + j] * f[j]).sum::<f64>();
        [row(0), row(1)]
    }

    pub fn act_deterministic(&self, obs: &ControlObservation) -> ControlAction {
        ControlAction { velocity: self.mean(obs), grip: obs.engaged }.clamped(self.v_max)
    }

    /// Mean plus `noise`-scaled Gaussian draw, before clamping.
    pub fn sample(&self, obs: &ControlObservation, rng: &mut impl Rng) -> [f64; 2] {
        let m = self.mean(obs);
        let n0: f64 = rng.sample(StandardNormal);
        let n1: f64 = rng.sample(StandardNormal);
        [m[0] + self.noise * n0, m[1] + self.noise * n1]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), PolicyError> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(FEATURES as u32).to_le_bytes())?;
        out.write_all(&self.noise.to_le_bytes())?;
        out.write_all(&self.v_max.to_le_bytes())?;
        for w in &self.weights {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self, PolicyError> {
        let mut m = [0u8; 4];
        input.read_exact(&mut m)?;
        if &m != MAGIC {
            return Err(PolicyError::BadMagic);
        }
        let mut u = [0u8; 4];
        input.read_exact(&mut u)?;
        let version = u32::from_le_bytes(u);
        if version != VERSION {
            return Err(PolicyError::BadVersion(version));
        }
        input.read_exact(&mut u)?;
        let found = u32::from_le_bytes(u) as usize;
        if found != FEATURES {
            return Err(PolicyError::Shape { expected: FEATURES, found });
        }
        let mut f = [0u8; 8];
        let mut next = || -> Result<f64, PolicyError> {
            input.read_exact(&mut f)?;
            Ok(f64::from_le_bytes(f))
        };
        let noise = next()?;
        let v_max = next()?;
        let weights = (0..2 * FEATURES).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
        Ok(LinearPolicy { weights, noise, v_max })
    }
}

impl Driver for LinearPolicy {
    fn act(&mut self, obs: &ControlObservation) -> ControlAction {
        self.act_deterministic(obs)
    }

    fn name(&self) -> &str {
        "learned"
    }
}

/// Exploring driver: samples around the policy mean and remembers the raw draws.
pub(crate) struct Explorer<'a, R: Rng> {
    pub policy: &'a LinearPolicy,
    pub rng: &'a mut R,
    pub raw: Vec<[f64; 2]>,
}

impl<R: Rng> Driver for Explorer<'_, R> {
    fn act(&mut self, obs: &ControlObservation) -> ControlAction {
        let v = self.policy.sample(obs, self.rng);
        self.raw.push(v);
        ControlAction { velocity: v, grip: obs.engaged }.clamped(self.policy.v_max)
    }

    fn name(&self) -> &str {
        "explorer"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let p = LinearPolicy { weights: (0..10).map(|i| i as f64 * 0.25 - 1.0).collect(), noise: 0.01, v_max: 0.05 };
        let mut buf = Vec::new();
        p.save(&mut buf).unwrap();
        assert_eq!(LinearPolicy::load(buf.as_slice()).unwrap(), p);
        buf[0] = b'X';
        assert!(matches!(LinearPolicy::load(buf.as_slice()), Err(PolicyError::BadMagic)));
    }

    #[test]
    fn actions_are_clamped() {
        let p = LinearPolicy { weights: vec![50.0; 10], ..LinearPolicy::default() };
        let obs = ControlObservation { ee: [0.0, 0.0], to_target: [0.9, -0.4], engaged: false, obstacle: [0.3, 0.3] };
        assert!(p.act_deterministic(&obs).speed() <= V_MAX + 1e-12);
    }
}
