//! Move-task environment and the two policy learners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::policy::{features, Explorer};
use super::{ControlAction, ControlObservation, ControllerError, Driver, LinearPolicy, ReplayBuffer, RewardWeights, Transition, FEATURES};
use crate::grounder::Primitive;
use crate::plan_ir::TaskKind;
use crate::simulator::{sample_scene, step_primitive_traced, ExecutionResult, LabWorld, Outcome};
use crate::tasks::TaskSpec;

/// One Move episode: a fresh scene, the arm at home, one object to reach.
#[derive(Debug, Clone)]
pub struct MoveEnv {
    pub world: LabWorld,
    pub target: String,
}

impl MoveEnv {
    /// Straight-line distance from the arm to the target at reset.
    pub fn distance(&self) -> f64 {
        let p = self.world.position_of(&self.target).expect("target exists");
        let e = self.world.arm.ee;
        (p[0] - e[0]).hypot(p[1] - e[1])
    }

    pub fn run(&mut self, driver: &mut dyn Driver) -> Result<ExecutionResult, ControllerError> {
        Ok(step_primitive_traced(&mut self.world, &Primitive::move_to(&self.target), driver, false, None)?)
    }
}

/// Scene for `seed`: task kinds rotate, the target is a seeded pick among the objects.
pub fn move_env(seed: u64, weights: RewardWeights) -> Result<MoveEnv, ControllerError> {
    let kinds = TaskKind::TEMPLATED;
    let kind = kinds[(seed % kinds.len() as u64) as usize];
    let spec = TaskSpec::variant(kind, (seed / kinds.len() as u64) as usize);
    let mut world = sample_scene(&spec, seed)?;
    world.config.reward = weights;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f7665);
    let target = world.objects[rng.random_range(0..world.objects.len())].id.clone();
    Ok(MoveEnv { world, target })
}

/// First seed of the evaluation range; training never draws from it.
pub const HELD_OUT_BASE: u64 = 1 << 40;

/// Fraction of Move episodes on `seeds` that reach the target.
pub fn evaluate_move(
    driver: &mut dyn Driver,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<f64, ControllerError> {
    let (mut ok, mut n) = (0usize, 0usize);
    for s in seeds {
        let mut env = move_env(s, RewardWeights::default())?;
        ok += usize::from(env.run(driver)?.outcome == Outcome::Done);
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { ok as f64 / n as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Antithetic random search over the policy weights.
    RandomSearch,
    /// Gaussian actor with a linear state-value critic fed from the replay buffer.
    ActorCritic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Training episodes.
    pub budget: usize,
    pub seed: u64,
    pub weights: RewardWeights,
    /// Replay capacity in episodes.
    pub replay_episodes: usize,
    /// Random search: directions per update, perturbation scale, step size.
    pub directions: usize,
    /// Random search: only the best directions (by max of the pair) enter the update.
    pub top_directions: usize,
    pub perturbation: f64,
    pub step_size: f64,
    /// Random search: every `validate_every` updates the deterministic policy runs on
    /// `validation_episodes` training scenes and the best one so far is kept. 0 disables.
    pub validate_every: usize,
    pub validation_episodes: usize,
    /// Actor-critic: exploration noise, learning rates, discount.
    pub noise: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::RandomSearch,
            budget: 8000,
            seed: 7,
            weights: RewardWeights::default(),
            replay_episodes: 4,
            directions: 8,
            top_directions: 4,
            perturbation: 0.2,
            step_size: 0.1,
            validate_every: 10,
            validation_episodes: 24,
            noise: 0.02,
            actor_lr: 0.5,
            critic_lr: 0.05,
            gamma: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub episode: usize,
    pub mean_return: f64,
    pub success: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<TrainStats>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("episode,return,success\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.6},{:.4}\n", r.episode, r.mean_return, r.success));
        }
        s
    }

    /// Sum of per-row success, the learning-curve area.
    pub fn area(&self) -> f64 {
        self.rows.iter().map(|r| r.success).sum()
    }
}

fn check(episode: usize, value: f64) -> Result<f64, ControllerError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ControllerError::DivergedTraining { episode, value })
    }
}

/// Trains a linear Move policy. A zero budget returns the initial policy.
pub fn train_policy(config: &TrainConfig) -> Result<(LinearPolicy, TrainLog), ControllerError> {
    match config.algorithm {
        Algorithm::RandomSearch => random_search(config),
        Algorithm::ActorCritic => actor_critic(config),
    }
}

fn random_search(cfg: &TrainConfig) -> Result<(LinearPolicy, TrainLog), ControllerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = LinearPolicy::default();
    let mut log = TrainLog::default();
    let n = cfg.directions.max(1);
    let mut episode = 0usize;
    let mut env_seed = cfg.seed.wrapping_mul(1_000_003);
    let val_base = cfg.seed.wrapping_mul(1_000_003).wrapping_add(1 << 32);
    let mut best: Option<(f64, LinearPolicy)> = None;
    let mut updates = 0usize;
    while episode + 2 * n <= cfg.budget {
        let mut deltas = Vec::with_capacity(n);
        let mut returns = Vec::with_capacity(2 * n);
        let mut successes = 0usize;
        for _ in 0..n {
            let delta: Vec<f64> = (0..2 * FEATURES).map(|_| rng.sample(StandardNormal)).collect();
            env_seed = env_seed.wrapping_add(1);
            let mut pair = [0.0; 2];
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut p = policy.clone();
                for (w, d) in p.weights.iter_mut().zip(&delta) {
                    *w += sign * cfg.perturbation * d;
                }
                let r = move_env(env_seed, cfg.weights)?.run(&mut p)?;
                successes += usize::from(r.outcome == Outcome::Done);
                pair[k] = check(episode, r.reward)?;
                episode += 1;
            }
            returns.extend(pair);
            deltas.push((delta, pair[0] - pair[1]));
        }
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let b = cfg.top_directions.clamp(1, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            let key = |k: usize| returns[2 * k].max(returns[2 * k + 1]);
            key(j).total_cmp(&key(i))
        });
        order.truncate(b);
        let kept: Vec<f64> = order.iter().flat_map(|&k| [returns[2 * k], returns[2 * k + 1]]).collect();
        let kmean = kept.iter().sum::<f64>() / kept.len() as f64;
        let sd = (kept.iter().map(|r| (r - kmean).powi(2)).sum::<f64>() / kept.len() as f64).sqrt();
        if sd > 1e-12 {
            for &k in &order {
                let (delta, diff) = &deltas[k];
                for (w, d) in policy.weights.iter_mut().zip(delta) {
                    *w += cfg.step_size / (b as f64 * sd) * diff * d;
                }
            }
        }
        if !policy.is_finite() {
            return Err(ControllerError::DivergedTraining { episode, value: f64::NAN });
        }
        log.rows.push(TrainStats { episode, mean_return: mean, success: successes as f64 / (2 * n) as f64 });
        updates += 1;
        let m = cfg.validation_episodes;
        if cfg.validate_every > 0 && m > 0 && updates % cfg.validate_every == 0 && episode + m <= cfg.budget {
            // successes first, return breaks ties
            let mut total = 0.0;
            for k in 0..m {
                let mut p = policy.clone();
                let r = move_env(val_base.wrapping_add(k as u64), cfg.weights)?.run(&mut p)?;
                total += check(episode, r.reward)? * 1e-3 + f64::from(u8::from(r.outcome == Outcome::Done));
            }
            episode += m;
            if best.as_ref().is_none_or(|(b, _)| total > *b) {
                best = Some((total, policy.clone()));
            }
        }
    }
    let policy = best.map_or(policy, |(_, p)| p);
    Ok((policy, log))
}

fn value_features(o: &ControlObservation) -> [f64; 2] {
    [o.distance(), 1.0]
}

fn actor_critic(cfg: &TrainConfig) -> Result<(LinearPolicy, TrainLog), ControllerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = LinearPolicy { noise: cfg.noise.max(1e-6), ..LinearPolicy::default() };
    let mut critic = [0.0f64; 2];
    let mut buffer = ReplayBuffer::new(cfg.replay_episodes);
    let mut log = TrainLog::default();
    let sigma2 = policy.noise * policy.noise;
    for episode in 0..cfg.budget {
        let mut env = move_env(cfg.seed.wrapping_mul(1_000_003).wrapping_add(episode as u64), cfg.weights)?;
        let mut steps: Vec<(ControlObservation, ControlAction, f64, ControlObservation, bool)> = Vec::new();
        let mut hook = |o: &ControlObservation, a: &ControlAction, r: f64, n: &ControlObservation, d: bool| {
            steps.push((*o, *a, r, *n, d));
        };
        let (result, raw) = {
            let mut explorer = Explorer { policy: &policy, rng: &mut rng, raw: Vec::new() };
            let target = env.target.clone();
            let r = step_primitive_traced(&mut env.world, &Primitive::move_to(&target), &mut explorer, false, Some(&mut hook))?;
            (r, explorer.raw)
        };
        let ret = check(episode, result.reward)?;
        for ((o, a, r, n, d), raw) in steps.into_iter().zip(raw) {
            buffer.push(Transition { obs: o, action: a, raw, reward: r, next: n, done: d });
        }
        buffer.end_episode();
        let updates = (result.steps as usize).clamp(1, 200);
        for _ in 0..updates {
            let Some(t) = buffer.sample(&mut rng).copied() else { break };
            let v = |o: &ControlObservation| {
                let g = value_features(o);
                critic[0] * g[0] + critic[1] * g[1]
            };
            let target = t.reward + if t.done { 0.0 } else { cfg.gamma * v(&t.next) };
            let delta = target - v(&t.obs);
            let g = value_features(&t.obs);
            for (c, gi) in critic.iter_mut().zip(g) {
                *c += cfg.critic_lr * delta * gi;
            }
            let mean = policy.mean(&t.obs);
            let f = features(&t.obs);
            for row in 0..2 {
                let score = (t.raw[row] - mean[row]) / sigma2;
                for (j, fj) in f.iter().enumerate() {
                    policy.weights[row * FEATURES + j] += cfg.actor_lr * sigma2 * delta * score * fj;
                }
            }
        }
        if !policy.is_finite() || !critic.iter().all(|c| c.is_finite()) {
            return Err(ControllerError::DivergedTraining { episode, value: f64::NAN });
        }
        log.rows.push(TrainStats { episode: episode + 1, mean_return: ret, success: f64::from(u8::from(result.outcome == Outcome::Done)) });
    }
    Ok((policy, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ScriptedController;

    #[test]
    fn zero_budget_returns_initial_policy() {
        let cfg = TrainConfig { budget: 0, ..TrainConfig::default() };
        let (p, log) = train_policy(&cfg).unwrap();
        assert_eq!(p, LinearPolicy::default());
        assert!(log.rows.is_empty());
        let cfg = TrainConfig { budget: 0, algorithm: Algorithm::ActorCritic, ..TrainConfig::default() };
        assert_eq!(train_policy(&cfg).unwrap().0.weights, LinearPolicy::default().weights);
    }

    #[test]
    fn scripted_reaches_every_target() {
        let rate = evaluate_move(&mut ScriptedController::default(), 0..50).unwrap();
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let cfg = TrainConfig { budget: 64, ..TrainConfig::default() };
        assert_eq!(train_policy(&cfg).unwrap().0, train_policy(&cfg).unwrap().0);
        let cfg = TrainConfig { budget: 8, algorithm: Algorithm::ActorCritic, ..TrainConfig::default() };
        assert_eq!(train_policy(&cfg).unwrap().0, train_policy(&cfg).unwrap().0);
    }
}
