//! Elevon and throttle actuator dynamics.
//!
//! Each elevon is a second-order servo `ω₀² / (s² + 2ζω₀s + ω₀²)` integrated
//! with semi-implicit Euler substeps; the rate and the deflection are
//! saturated after every substep. The throttle is a first-order lag
//! discretized exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorConfig {
    pub natural_frequency_rad_s: f64,
    pub damping_ratio: f64,
    pub deflection_limit_rad: f64,
    pub rate_limit_rad_s: f64,
    pub throttle_time_constant_s: f64,
    /// Servo substeps per simulation step.
    pub substeps: usize,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        Self {
            natural_frequency_rad_s: 100.0,
            damping_ratio: std::f64::consts::FRAC_1_SQRT_2,
            deflection_limit_rad: 30f64.to_radians(),
            rate_limit_rad_s: 200f64.to_radians(),
            throttle_time_constant_s: 0.2,
            substeps: 10,
        }
    }
}

impl ActuatorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.natural_frequency_rad_s > 0.0
            && self.damping_ratio > 0.0
            && self.deflection_limit_rad > 0.0
            && self.rate_limit_rad_s > 0.0
            && self.throttle_time_constant_s > 0.0
            && self.substeps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid actuator parameters: {self:?}")))
        }
    }
}

/// Commanded virtual aileron and elevator (rad) and throttle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub aileron: f64,
    pub elevator: f64,
    pub throttle: f64,
}

impl ControlCommand {
    pub fn new(aileron: f64, elevator: f64, throttle: f64) -> Self {
        Self {
            aileron,
            elevator,
            throttle,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.aileron.is_finite() && self.elevator.is_finite() && self.throttle.is_finite()
    }

    /// Clamps to the reachable range: ±limit for the surfaces, [0, 1] throttle.
    pub fn saturated(&self, deflection_limit: f64) -> Self {
        Self {
            aileron: self.aileron.clamp(-deflection_limit, deflection_limit),
            elevator: self.elevator.clamp(-deflection_limit, deflection_limit),
            throttle: self.throttle.clamp(0.0, 1.0),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.aileron, self.elevator, self.throttle]
    }
}

/// Virtual (aileron, elevator) to (right, left) elevon deflection.
pub fn map_virtual_to_elevon(aileron: f64, elevator: f64) -> (f64, f64) {
    (elevator - aileron, elevator + aileron)
}

/// (right, left) elevon deflection to virtual (aileron, elevator).
pub fn map_elevon_to_virtual(right: f64, left: f64) -> (f64, f64) {
    (-0.5 * right + 0.5 * left, 0.5 * right + 0.5 * left)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ServoState {
    /// rad
    pub deflection: f64,
    /// rad/s
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorState {
    pub right: ServoState,
    pub left: ServoState,
    pub throttle: f64,
}

impl ActuatorState {
    /// Actuators at rest at the given command.
    pub fn at_rest(command: &ControlCommand, cfg: &ActuatorConfig) -> Self {
        let c = command.saturated(cfg.deflection_limit_rad);
        let (r, l) = map_virtual_to_elevon(c.aileron, c.elevator);
        let lim = cfg.deflection_limit_rad;
        Self {
            right: ServoState {
                deflection: r.clamp(-lim, lim),
                rate: 0.0,
            },
            left: ServoState {
                deflection: l.clamp(-lim, lim),
                rate: 0.0,
            },
            throttle: c.throttle,
        }
    }

    /// Actual virtual (aileron, elevator) deflections.
    pub fn virtual_deflections(&self) -> (f64, f64) {
        map_elevon_to_virtual(self.right.deflection, self.left.deflection)
    }

    /// Advances both elevons and the throttle by `dt` towards `command`.
    pub fn step(&mut self, command: &ControlCommand, cfg: &ActuatorConfig, dt: f64) {
        let c = command.saturated(cfg.deflection_limit_rad);
        let (r, l) = map_virtual_to_elevon(c.aileron, c.elevator);
        step_elevon(&mut self.right, r, cfg, dt);
        step_elevon(&mut self.left, l, cfg, dt);
        self.throttle = step_throttle(self.throttle, c.throttle, cfg, dt);
    }
}

pub fn step_elevon(servo: &mut ServoState, command: f64, cfg: &ActuatorConfig, dt: f64) {
    let lim = cfg.deflection_limit_rad;
    let rate_lim = cfg.rate_limit_rad_s;
    let w0 = cfg.natural_frequency_rad_s;
    let zeta = cfg.damping_ratio;
    let u = command.clamp(-lim, lim);
    let h = dt / cfg.substeps as f64;
    for _ in 0..cfg.substeps {
        let accel = w0 * w0 * (u - servo.deflection) - 2.0 * zeta * w0 * servo.rate;
        servo.rate = (servo.rate + h * accel).clamp(-rate_lim, rate_lim);
        servo.deflection += h * servo.rate;
        if servo.deflection.abs() >= lim {
            servo.deflection = servo.deflection.clamp(-lim, lim);
            // the surface is against its stop; it cannot keep moving outwards
            if servo.rate * servo.deflection > 0.0 {
                servo.rate = 0.0;
            }
        }
    }
}

pub fn step_throttle(throttle: f64, command: f64, cfg: &ActuatorConfig, dt: f64) -> f64 {
    let c = command.clamp(0.0, 1.0);
    let decay = (-dt / cfg.throttle_time_constant_s).exp();
    (c + (throttle - c) * decay).clamp(0.0, 1.0)
}
