//! Fixed-gain PID baseline: throttle holds airspeed, virtual aileron holds
//! roll and virtual elevator holds pitch.

use serde::{Deserialize, Serialize};

use crate::actuators::ControlCommand;
use crate::environment::{command_to_action, Action, FlightSnapshot};
use crate::evaluation::Controller;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp_airspeed: f64,
    pub ki_airspeed: f64,
    pub kp_roll: f64,
    pub ki_roll: f64,
    pub kd_roll: f64,
    pub kp_pitch: f64,
    pub ki_pitch: f64,
    pub kd_pitch: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp_airspeed: 0.5,
            ki_airspeed: 0.1,
            kp_roll: 1.0,
            ki_roll: 0.0,
            kd_roll: 0.5,
            kp_pitch: -4.0,
            ki_pitch: -0.75,
            kd_pitch: -0.1,
        }
    }
}

/// Integrals of the airspeed, roll and pitch errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidIntegrators {
    pub airspeed: f64,
    pub roll: f64,
    pub pitch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidController {
    pub gains: PidGains,
    pub integrators: PidIntegrators,
    deflection_limit: f64,
}

/// Output of one loop and whether its integrator may absorb `increment`:
/// integration stops while the output is saturated in the direction the
/// increment would push it.
fn saturate(raw: f64, lo: f64, hi: f64, increment: f64) -> (f64, bool) {
    let integrate = !((raw >= hi && increment > 0.0) || (raw <= lo && increment < 0.0));
    (raw.clamp(lo, hi), integrate)
}

impl PidController {
    pub fn new(gains: PidGains, deflection_limit: f64) -> Self {
        Self {
            gains,
            integrators: PidIntegrators::default(),
            deflection_limit,
        }
    }

    /// One control update from errors `(roll, pitch, airspeed)` (measured
    /// minus desired; roll wrapped) and body rates `p`, `q`. Integrators
    /// advance by forward Euler after the output is formed.
    pub fn step(&mut self, errors: [f64; 3], p: f64, q: f64, dt: f64) -> ControlCommand {
        let g = &self.gains;
        let [e_roll, e_pitch, e_va] = errors;
        let i = &mut self.integrators;
        let lim = self.deflection_limit;

        let raw_t = -g.kp_airspeed * e_va - g.ki_airspeed * i.airspeed;
        let (throttle, int_t) = saturate(raw_t, 0.0, 1.0, -g.ki_airspeed * e_va);
        let raw_a = -g.kp_roll * e_roll - g.ki_roll * i.roll - g.kd_roll * p;
        let (aileron, int_a) = saturate(raw_a, -lim, lim, -g.ki_roll * e_roll);
        let raw_e = -g.kp_pitch * e_pitch - g.ki_pitch * i.pitch - g.kd_pitch * q;
        let (elevator, int_e) = saturate(raw_e, -lim, lim, -g.ki_pitch * e_pitch);

        if int_t {
            i.airspeed += e_va * dt;
        }
        if int_a {
            i.roll += e_roll * dt;
        }
        if int_e {
            i.pitch += e_pitch * dt;
        }
        ControlCommand::new(aileron, elevator, throttle)
    }

    /// Unsaturated outputs for the current integrators, without updating them.
    pub fn raw_output(&self, errors: [f64; 3], p: f64, q: f64) -> ControlCommand {
        let g = &self.gains;
        let i = &self.integrators;
        let [e_roll, e_pitch, e_va] = errors;
        ControlCommand::new(
            -g.kp_roll * e_roll - g.ki_roll * i.roll - g.kd_roll * p,
            -g.kp_pitch * e_pitch - g.ki_pitch * i.pitch - g.kd_pitch * q,
            -g.kp_airspeed * e_va - g.ki_airspeed * i.airspeed,
        )
    }
}

impl Controller for PidController {
    fn reset(&mut self) {
        self.integrators = PidIntegrators::default();
    }

    fn act(&mut self, snapshot: &FlightSnapshot, _observation: &[f64], dt: f64) -> Action {
        let w = snapshot.state.angular_velocity;
        let cmd = self.step(snapshot.errors(), w.x, w.y, dt);
        command_to_action(&cmd, self.deflection_limit)
    }
}
