//! Propeller thrust and reaction moment.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigid_body::BodyWrench;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropulsionConfig {
    /// Motor constant k_m (discharge velocity at full throttle), m/s.
    pub motor_constant_mps: f64,
    /// Propeller disc area S_p, m².
    pub disc_area_m2: f64,
    /// Efficiency factor C_p.
    pub efficiency: f64,
    /// k_Ω, rad/s per unit throttle.
    pub k_omega: f64,
    /// k_Q, N·m·s².
    pub k_q: f64,
    pub air_density_kg_m3: f64,
}

impl PropulsionConfig {
    /// Skywalker X8 motor/propeller. k_Ω and k_Q are measured values; k_m,
    /// S_p and C_p are representative, not authoritative.
    pub fn skywalker_x8() -> Self {
        Self {
            motor_constant_mps: 40.0,
            disc_area_m2: 0.1018,
            efficiency: 1.0,
            k_omega: 797.1268,
            k_q: 1.1871e-6,
            air_density_kg_m3: 1.225,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.motor_constant_mps > 0.0
            && self.disc_area_m2 > 0.0
            && self.efficiency > 0.0
            && self.efficiency <= 2.0
            && self.k_omega > 0.0
            && self.k_q > 0.0
            && self.air_density_kg_m3 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid propulsion parameters: {self:?}")))
        }
    }

    /// Discharge velocity V_d.
    pub fn discharge_velocity(&self, airspeed: f64, throttle: f64) -> f64 {
        airspeed + throttle * (self.motor_constant_mps - airspeed)
    }

    pub fn thrust(&self, airspeed: f64, throttle: f64) -> f64 {
        let vd = self.discharge_velocity(airspeed, throttle);
        0.5 * self.air_density_kg_m3 * self.disc_area_m2 * self.efficiency * vd * (vd - airspeed)
    }

    /// Reaction moment about the body x axis.
    pub fn reaction_moment(&self, throttle: f64) -> f64 {
        let omega = self.k_omega * throttle;
        -self.k_q * omega * omega
    }
}

impl Default for PropulsionConfig {
    fn default() -> Self {
        Self::skywalker_x8()
    }
}

/// Thrust along body x and the propeller reaction moment. Throttle must
/// already be saturated to [0, 1].
pub fn propulsion_wrench(airspeed: f64, throttle: f64, cfg: &PropulsionConfig) -> Result<BodyWrench> {
    if !(0.0..=1.0).contains(&throttle) {
        return Err(Error::InvalidConfig(format!("throttle {throttle} outside [0, 1]")));
    }
    Ok(BodyWrench::new(
        Vector3::new(cfg.thrust(airspeed, throttle), 0.0, 0.0),
        Vector3::new(cfg.reaction_moment(throttle), 0.0, 0.0),
    ))
}
