//! One simulated aircraft: rigid body, actuators and the load models glued
//! together.

use std::sync::Arc;

use nalgebra::Vector3;

use crate::actuators::{ActuatorState, ControlCommand};
use crate::aerodynamics::{compute_airdata, AirData};
use crate::airframe::Airframe;
use crate::atmosphere::WindSample;
use crate::error::{Error, Result};
use crate::rigid_body::{euler_to_quat, integrate_step, BodyWrench, SimState};

#[derive(Debug, Clone)]
pub struct Aircraft {
    airframe: Arc<Airframe>,
    pub state: SimState,
    pub actuators: ActuatorState,
}

impl Aircraft {
    pub fn new(airframe: Arc<Airframe>, state: SimState, actuators: ActuatorState) -> Self {
        Self {
            airframe,
            state,
            actuators,
        }
    }

    pub fn airframe(&self) -> &Arc<Airframe> {
        &self.airframe
    }

    pub fn airdata(&self, wind: &WindSample) -> AirData {
        compute_airdata(&self.state, &wind.steady, &wind.gust, &wind.gust_rates)
    }

    /// Gravity, aerodynamic and propulsion loads at `state`.
    pub fn wrench_at(
        &self,
        state: &SimState,
        wind: &WindSample,
        delta_a: f64,
        delta_e: f64,
        throttle: f64,
    ) -> BodyWrench {
        let cfg = &self.airframe.config;
        let air = compute_airdata(state, &wind.steady, &wind.gust, &wind.gust_rates);
        let aero = cfg.aero.loads(&air, delta_a, delta_e).wrench;
        let prop = &cfg.propulsion;
        let throttle = throttle.clamp(0.0, 1.0);
        let thrust = BodyWrench::new(
            Vector3::new(prop.thrust(air.airspeed, throttle), 0.0, 0.0),
            Vector3::new(prop.reaction_moment(throttle), 0.0, 0.0),
        );
        self.airframe.inertial.gravity_wrench(&state.attitude) + aero + thrust
    }

    /// Steps the actuators towards `command`, then integrates the rigid body
    /// with the resulting deflections held over the step.
    pub fn step(&mut self, command: &ControlCommand, wind: &WindSample, dt: f64) -> Result<()> {
        if !command.is_finite() {
            return Err(Error::NonFinite("control command"));
        }
        self.actuators.step(command, &self.airframe.config.actuators, dt);
        let (da, de) = self.actuators.virtual_deflections();
        let dt_throttle = self.actuators.throttle;
        let next = integrate_step(
            &self.state,
            |s| self.wrench_at(s, wind, da, de, dt_throttle),
            &self.airframe.inertial,
            dt,
        )?;
        self.state = next;
        Ok(())
    }
}

/// Initial condition in flight-test terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightCondition {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub airspeed: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Body rates (p, q, r), rad/s.
    pub rates: Vector3<f64>,
    /// m, positive up.
    pub altitude: f64,
}

impl FlightCondition {
    /// Body velocity in still air for the given airspeed, α and β.
    pub fn to_state(&self) -> SimState {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        SimState {
            position: Vector3::new(0.0, 0.0, -self.altitude),
            attitude: euler_to_quat(self.roll, self.pitch, self.yaw),
            velocity: Vector3::new(ca * cb, sb, sa * cb) * self.airspeed,
            angular_velocity: self.rates,
        }
    }
}

/// Wings-level steady flight: angle of attack (= pitch), elevator and
/// throttle that zero the longitudinal accelerations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trim {
    pub alpha: f64,
    pub elevator: f64,
    pub throttle: f64,
}

/// Newton iteration on (u̇, ẇ, q̇) for level flight at `airspeed`.
pub fn trim_level_flight(airframe: &Arc<Airframe>, airspeed: f64) -> Result<Trim> {
    let calm = WindSample::default();
    let residual = |x: &[f64; 3]| -> [f64; 3] {
        let [alpha, elevator, throttle] = *x;
        let state = FlightCondition {
            roll: 0.0,
            pitch: alpha,
            yaw: 0.0,
            airspeed,
            alpha,
            beta: 0.0,
            rates: Vector3::zeros(),
            altitude: 100.0,
        }
        .to_state();
        let ac = Aircraft::new(airframe.clone(), state, ActuatorState::default());
        // evaluate with the throttle unclamped so the Jacobian stays smooth
        let cfg = &airframe.config;
        let air = ac.airdata(&calm);
        let aero = cfg.aero.loads(&air, 0.0, elevator).wrench;
        let thrust = cfg.propulsion.thrust(air.airspeed, throttle);
        let w = airframe.inertial.gravity_wrench(&state.attitude)
            + aero
            + BodyWrench::new(Vector3::new(thrust, 0.0, 0.0), Vector3::zeros());
        let m = airframe.inertial.mass();
        [w.force.x / m, w.force.z / m, w.moment.y]
    };
    let mut x = [0.05, 0.0, 0.3];
    for _ in 0..50 {
        let r = residual(&x);
        if r.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10 {
            break;
        }
        let mut jac = nalgebra::Matrix3::zeros();
        for j in 0..3 {
            let h = 1e-7;
            let mut xp = x;
            xp[j] += h;
            let rp = residual(&xp);
            for i in 0..3 {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let dx = jac
            .lu()
            .solve(&Vector3::new(-r[0], -r[1], -r[2]))
            .ok_or_else(|| Error::InvalidConfig("trim Jacobian is singular".into()))?;
        for i in 0..3 {
            x[i] += dx[i];
        }
    }
    let r = residual(&x);
    if r.iter().any(|v| !v.is_finite() || v.abs() > 1e-6) {
        return Err(Error::InvalidConfig(format!("no level trim at {airspeed} m/s")));
    }
    Ok(Trim {
        alpha: x[0],
        elevator: x[1],
        throttle: x[2],
    })
}

/// Quasi-steady coordinated flight holding a roll, pitch and airspeed setpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyFlight {
    pub alpha: f64,
    /// Flight-path angle, rad.
    pub gamma: f64,
    pub elevator: f64,
    pub throttle: f64,
}

/// Searches for steady coordinated flight (zero sideslip, pitch moment
/// balanced, lift carrying the load factor of a level turn) at the given
/// attitude and airspeed. Returns `None` when no angle of attack balances
/// the lift or when the required elevator or throttle falls outside its
/// range. Turn-rate damping terms are neglected.
pub fn steady_flight(airframe: &Airframe, roll: f64, pitch: f64, airspeed: f64) -> Option<SteadyFlight> {
    let cfg = &airframe.config;
    let aero = &cfg.aero;
    let m = airframe.inertial.mass();
    let g = airframe.inertial.gravity();
    let (cphi, (sth, cth)) = (roll.cos(), pitch.sin_cos());
    if cphi <= 0.0 || airspeed <= 0.0 {
        return None;
    }
    let qbar_s = 0.5 * aero.air_density_kg_m3 * airspeed * airspeed * aero.wing_area_m2;
    let elevator = |alpha: f64| -aero.pitch_coefficient(alpha, 0.0, 0.0) / aero.pitch.delta_e_per_rad;
    let gamma = |alpha: f64| {
        let (sa, ca) = f64::sin_cos(alpha);
        (ca * sth - sa * cth * cphi).clamp(-1.0, 1.0).asin()
    };
    let residual = |alpha: f64| {
        qbar_s * aero.lift_coefficient(alpha, 0.0, elevator(alpha)) * cphi - m * g * gamma(alpha).cos()
    };

    let (lo, hi, n) = (-0.35, 0.45, 160);
    let mut bracket = None;
    let mut prev = (lo, residual(lo));
    for i in 1..=n {
        let a = lo + (hi - lo) * i as f64 / n as f64;
        let r = residual(a);
        if prev.1.signum() != r.signum() {
            bracket = Some((prev.0, a, prev.1));
            break;
        }
        prev = (a, r);
    }
    let (mut a0, mut a1, r0) = bracket?;
    let mut r0 = r0;
    for _ in 0..60 {
        let mid = 0.5 * (a0 + a1);
        let r = residual(mid);
        if r.signum() == r0.signum() {
            a0 = mid;
            r0 = r;
        } else {
            a1 = mid;
        }
    }
    let alpha = 0.5 * (a0 + a1);
    let gamma = gamma(alpha);
    let elevator = elevator(alpha);
    if elevator.abs() > airframe.deflection_limit() {
        return None;
    }
    let drag = qbar_s * aero.drag_coefficient(alpha, 0.0, 0.0, elevator);
    let required = drag + m * g * gamma.sin();
    let prop = &cfg.propulsion;
    if required < prop.thrust(airspeed, 0.0) || required > prop.thrust(airspeed, 1.0) {
        return None;
    }
    let (mut t0, mut t1) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (t0 + t1);
        if prop.thrust(airspeed, mid) < required {
            t0 = mid;
        } else {
            t1 = mid;
        }
    }
    Some(SteadyFlight {
        alpha,
        gamma,
        elevator,
        throttle: 0.5 * (t0 + t1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuators::ControlCommand;
    use crate::airframe::Airframe;

    #[test]
    fn trim_holds_level_flight() {
        let af = Airframe::x8();
        let trim = trim_level_flight(&af, 18.0).unwrap();
        assert!(trim.alpha.abs() < 0.2, "{trim:?}");
        assert!((0.0..1.0).contains(&trim.throttle), "{trim:?}");
        let cmd = ControlCommand::new(0.0, trim.elevator, trim.throttle);
        let state = FlightCondition {
            roll: 0.0,
            pitch: trim.alpha,
            yaw: 0.0,
            airspeed: 18.0,
            alpha: trim.alpha,
            beta: 0.0,
            rates: Vector3::zeros(),
            altitude: 100.0,
        }
        .to_state();
        let mut ac = Aircraft::new(af.clone(), state, ActuatorState::at_rest(&cmd, &af.config.actuators));
        let wind = WindSample::default();
        for _ in 0..100 {
            ac.step(&cmd, &wind, 0.01).unwrap();
        }
        let air = ac.airdata(&wind);
        assert!((air.airspeed - 18.0).abs() < 0.05, "{}", air.airspeed);
        assert!((ac.state.altitude() - 100.0).abs() < 0.1);
        let (roll, pitch, _) = ac.state.euler();
        // propeller torque is not trimmed out, so a slow roll drift remains
        assert!(roll.abs() < 1e-2 && (pitch - trim.alpha).abs() < 1e-2, "{roll} {pitch} {trim:?}");
    }

    #[test]
    fn steady_flight_matches_level_trim() {
        let af = Airframe::x8();
        let trim = trim_level_flight(&af, 18.0).unwrap();
        let sf = steady_flight(&af, 0.0, trim.alpha, 18.0).unwrap();
        assert!(sf.gamma.abs() < 1e-3, "{sf:?}");
        assert!((sf.alpha - trim.alpha).abs() < 1e-3, "{sf:?} {trim:?}");
        // thrust acts along the body axis in the trim but along the path here
        assert!((sf.throttle - trim.throttle).abs() < 0.02, "{sf:?} {trim:?}");
    }

    #[test]
    fn steep_slow_dive_is_not_steady() {
        let af = Airframe::x8();
        assert!(steady_flight(&af, 0.0, -25f64.to_radians(), 18.0).is_none());
        assert!(steady_flight(&af, 0.0, 10f64.to_radians(), 18.0).is_some());
    }

    #[test]
    fn non_finite_command_rejected() {
        let af = Airframe::x8();
        let mut ac = Aircraft::new(af, SimState::default(), ActuatorState::default());
        let bad = ControlCommand::new(f64::NAN, 0.0, 0.5);
        assert!(ac.step(&bad, &WindSample::default(), 0.01).is_err());
    }
}
