use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ControlAction, ControlObservation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: ControlObservation,
    pub action: ControlAction,
    /// Unclamped velocity the exploring policy drew.
    pub raw: [f64; 2],
    pub reward: f64,
    pub next: ControlObservation,
    pub done: bool,
}

/// FIFO of whole episodes. Capacity counts episodes, not transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Vec<Transition>>,
    open: Vec<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity_episodes: usize) -> Self {
        ReplayBuffer { capacity: capacity_episodes.max(1), episodes: VecDeque::new(), open: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        self.open.push(t);
    }

    /// Closes the current episode, evicting the oldest one when full.
    pub fn end_episode(&mut self) {
        if self.open.is_empty() {
            return;
        }
        self.episodes.push_back(std::mem::take(&mut self.open));
        while self.episodes.len() > self.capacity {
            self.episodes.pop_front();
        }
    }

    pub fn episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Stored transitions in closed episodes.
    pub fn len(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Uniform draw over stored transitions.
    pub fn sample(&self, rng: &mut impl Rng) -> Option<&Transition> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let mut k = rng.random_range(0..n);
        for ep in &self.episodes {
            if k < ep.len() {
                return ep.get(k);
            }
            k -= ep.len();
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        let o = ControlObservation { ee: [0.0; 2], to_target: [0.1, 0.0], engaged: false, obstacle: [1.0, 1.0] };
        Transition { obs: o, action: ControlAction::default(), raw: [0.0; 2], reward: r, next: o, done: false }
    }

    #[test]
    fn evicts_whole_episodes() {
        let mut b = ReplayBuffer::new(4);
        for ep in 0..6 {
            for i in 0..=ep {
                b.push(t(ep as f64 * 10.0 + i as f64));
            }
            b.end_episode();
            assert!(b.episodes() <= 4);
        }
        assert_eq!(b.len(), 3 + 4 + 5 + 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert!(b.sample(&mut rng).unwrap().reward >= 20.0);
        }
    }
}
