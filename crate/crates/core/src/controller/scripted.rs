use super::{ControlAction, ControlObservation, Driver};

/// Proportional oracle: `v = clamp(k_p · to_target, v_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedController {
    pub k_p: f64,
    pub v_max: f64,
}

impl Default for ScriptedController {
    fn default() -> Self {
        ScriptedController { k_p: 1.0, v_max: super::V_MAX }
    }
}

pub fn scripted_step(obs: &ControlObservation, k_p: f64, v_max: f64) -> ControlAction {
    ControlAction {
        velocity: [k_p * obs.to_target[0], k_p * obs.to_target[1]],
        grip: obs.engaged,
    }
    .clamped(v_max)
}

impl Driver for ScriptedController {
    fn act(&mut self, obs: &ControlObservation) -> ControlAction {
        scripted_step(obs, self.k_p, self.v_max)
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(dx: f64, dy: f64) -> ControlObservation {
        ControlObservation { ee: [0.5, 0.5], to_target: [dx, dy], engaged: true, obstacle: [1.0, 1.0] }
    }

    #[test]
    fn far_target_saturates() {
        let a = scripted_step(&obs(0.3, 0.4), 1.0, 0.05);
        assert!((a.speed() - 0.05).abs() < 1e-12);
        assert!((a.velocity[0] / a.velocity[1] - 0.75).abs() < 1e-12);
        assert!(a.grip);
    }

    #[test]
    fn at_target_is_still() {
        assert_eq!(scripted_step(&obs(0.0, 0.0), 1.0, 0.05).velocity, [0.0, 0.0]);
    }
}
