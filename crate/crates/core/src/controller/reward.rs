use serde::{Deserialize, Serialize};

use super::{ControlAction, ControlObservation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Per meter of progress toward the target.
    pub w_move: f64,
    pub w_grasp: f64,
    pub w_collision: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { w_move: 1.0, w_grasp: 5.0, w_collision: 10.0 }
    }
}

/// What happened during one tick besides motion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickEvents {
    pub grasp: bool,
    pub collision: bool,
}

/// `w_move·(prev_dist − next_dist) + w_grasp·[grasp] − w_collision·[collision]`.
pub fn reward(
    w: &RewardWeights,
    prev: &ControlObservation,
    _action: &ControlAction,
    next: &ControlObservation,
    events: TickEvents,
) -> f64 {
    let progress = prev.distance() - next.distance();
    let mut r = w.w_move * progress;
    if events.grasp {
        r += w.w_grasp;
    }
    if events.collision {
        r -= w.w_collision;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(dx: f64) -> ControlObservation {
        ControlObservation { ee: [0.0, 0.0], to_target: [dx, 0.0], engaged: false, obstacle: [1.0, 1.0] }
    }

    #[test]
    fn still_tick_is_zero() {
        let w = RewardWeights::default();
        let r = reward(&w, &obs(0.3), &ControlAction::default(), &obs(0.3), TickEvents::default());
        assert_eq!(r, 0.0);
    }

    #[test]
    fn progress_is_rewarded_per_meter() {
        let w = RewardWeights::default();
        let r = reward(&w, &obs(0.30), &ControlAction::default(), &obs(0.28), TickEvents::default());
        assert!((r - 0.02).abs() < 1e-12);
    }

    #[test]
    fn collision_bound() {
        let w = RewardWeights::default();
        let ev = TickEvents { grasp: false, collision: true };
        let r = reward(&w, &obs(0.30), &ControlAction::default(), &obs(0.25), ev);
        assert!(r <= -10.0 + w.w_move * 0.05 + 1e-12);
    }
}
