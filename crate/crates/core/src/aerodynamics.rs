//! Airdata and aerodynamic loads.
//!
//! Longitudinal coefficients blend a small-angle polynomial model with a
//! Newtonian flat-plate model through a sigmoid in angle of attack; the
//! lateral coefficients are linear. Only the angle-of-attack dependent static
//! part is blended, rate and control terms are added on top.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigid_body::{rotation_matrix, BodyWrench, SimState};

/// Airspeeds below this are treated as still air (α, β undefined).
pub const AIRSPEED_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirData {
    /// m/s
    pub airspeed: f64,
    /// rad
    pub alpha: f64,
    /// rad
    pub beta: f64,
    /// Body-frame velocity relative to the air mass, m/s.
    pub relative_velocity: Vector3<f64>,
    /// Body-frame angular velocity relative to the air mass, rad/s.
    pub relative_rates: Vector3<f64>,
    /// Set when `airspeed < AIRSPEED_FLOOR`; α and β are then zero.
    pub low_airspeed: bool,
}

impl AirData {
    pub fn from_relative(relative_velocity: Vector3<f64>, relative_rates: Vector3<f64>) -> Self {
        let airspeed = relative_velocity.norm();
        if airspeed < AIRSPEED_FLOOR {
            return Self {
                airspeed,
                alpha: 0.0,
                beta: 0.0,
                relative_velocity,
                relative_rates,
                low_airspeed: true,
            };
        }
        let alpha = relative_velocity.z.atan2(relative_velocity.x);
        let beta = (relative_velocity.y / airspeed).clamp(-1.0, 1.0).asin();
        Self {
            airspeed,
            alpha,
            beta,
            relative_velocity,
            relative_rates,
            low_airspeed: false,
        }
    }
}

/// Relative-air kinematics.
///
/// `steady_wind` is in NED, `gust` and `gust_rates` in the body frame.
pub fn compute_airdata(
    state: &SimState,
    steady_wind: &Vector3<f64>,
    gust: &Vector3<f64>,
    gust_rates: &Vector3<f64>,
) -> AirData {
    let r_bn = rotation_matrix(&state.attitude);
    let v_r = state.velocity - r_bn.transpose() * steady_wind - gust;
    let w_r = state.angular_velocity - gust_rates;
    AirData::from_relative(v_r, w_r)
}

/// Sigmoid weight of the flat-plate model: ≈0 near α = 0, ≈1 beyond ±α₀.
pub fn blending_sigma(alpha: f64, steepness: f64, cutoff: f64) -> f64 {
    // Written in terms of exp(-x) of non-negative arguments where possible so
    // the large-M limits stay finite.
    let a = (-steepness * (alpha - cutoff)).exp();
    let b = (steepness * (alpha + cutoff)).exp();
    if !a.is_finite() || !b.is_finite() {
        return 1.0;
    }
    (1.0 + a + b) / ((1.0 + a) * (1.0 + b))
}

/// Rotation of wind-frame (drag, side, lift) axes into the body frame.
///
/// The first column is the direction of the relative velocity,
/// `(cos α cos β, sin β, sin α cos β)`.
pub fn wind_to_body(alpha: f64, beta: f64) -> Matrix3<f64> {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    Matrix3::new(
        ca * cb, -ca * sb, -sa, //
        sb, cb, 0.0, //
        sa * cb, -sa * sb, ca,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongitudinalCoefficients {
    pub c0: f64,
    pub alpha_per_rad: f64,
    #[serde(default)]
    pub alpha2_per_rad2: f64,
    /// Per unit of nondimensional pitch rate `q c / (2 V_a)`.
    pub q_hat: f64,
    pub delta_e_per_rad: f64,
    #[serde(default)]
    pub delta_e2_per_rad2: f64,
    #[serde(default)]
    pub beta_per_rad: f64,
    #[serde(default)]
    pub beta2_per_rad2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateralCoefficients {
    pub c0: f64,
    pub beta_per_rad: f64,
    /// Per unit of nondimensional roll rate `p b / (2 V_a)`.
    pub p_hat: f64,
    /// Per unit of nondimensional yaw rate `r b / (2 V_a)`.
    pub r_hat: f64,
    pub delta_a_per_rad: f64,
}

impl LateralCoefficients {
    fn eval(&self, beta: f64, p_hat: f64, r_hat: f64, delta_a: f64) -> f64 {
        self.c0 + self.beta_per_rad * beta + self.p_hat * p_hat + self.r_hat * r_hat
            + self.delta_a_per_rad * delta_a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroCoefficientSet {
    pub wing_area_m2: f64,
    pub span_m: f64,
    pub chord_m: f64,
    pub air_density_kg_m3: f64,
    /// Sigmoid steepness M (dimensionless).
    pub blend_steepness: f64,
    /// Sigmoid cutoff α₀.
    pub blend_cutoff_rad: f64,
    /// Gain of the flat-plate pitch moment `k sign(α) sin²α`.
    pub flat_plate_pitch_gain: f64,
    pub lift: LongitudinalCoefficients,
    pub drag: LongitudinalCoefficients,
    pub pitch: LongitudinalCoefficients,
    pub side: LateralCoefficients,
    pub roll: LateralCoefficients,
    pub yaw: LateralCoefficients,
}

/// Body wrench plus the wind-frame drag, side and lift forces (N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroLoads {
    pub wrench: BodyWrench,
    pub lift: f64,
    pub drag: f64,
    pub side: f64,
}

impl AeroCoefficientSet {
    /// Skywalker X8-class flying wing.
    ///
    /// Not authoritative: representative values for this airframe class,
    /// editable through the airframe config file.
    pub fn skywalker_x8() -> Self {
        Self {
            wing_area_m2: 0.75,
            span_m: 2.1,
            chord_m: 0.3571,
            air_density_kg_m3: 1.225,
            blend_steepness: 50.0,
            blend_cutoff_rad: 0.4712,
            flat_plate_pitch_gain: -0.5,
            lift: LongitudinalCoefficients {
                c0: 0.0867,
                alpha_per_rad: 4.0203,
                alpha2_per_rad2: 0.0,
                q_hat: 3.87,
                delta_e_per_rad: 0.2781,
                delta_e2_per_rad2: 0.0,
                beta_per_rad: 0.0,
                beta2_per_rad2: 0.0,
            },
            drag: LongitudinalCoefficients {
                c0: 0.0197,
                alpha_per_rad: 0.0791,
                alpha2_per_rad2: 1.0555,
                q_hat: 0.0,
                delta_e_per_rad: 0.0,
                delta_e2_per_rad2: 0.0633,
                beta_per_rad: -0.0058,
                beta2_per_rad2: 0.1478,
            },
            pitch: LongitudinalCoefficients {
                c0: 0.0302,
                alpha_per_rad: -0.2601,
                alpha2_per_rad2: 0.0,
                q_hat: -1.3047,
                delta_e_per_rad: -0.2292,
                delta_e2_per_rad2: 0.0,
                beta_per_rad: 0.0,
                beta2_per_rad2: 0.0,
            },
            side: LateralCoefficients {
                c0: 0.0,
                beta_per_rad: -0.2239,
                p_hat: -0.1374,
                r_hat: 0.0839,
                delta_a_per_rad: 0.0433,
            },
            roll: LateralCoefficients {
                c0: 0.0,
                beta_per_rad: -0.0849,
                p_hat: -0.4042,
                r_hat: 0.0555,
                delta_a_per_rad: 0.1202,
            },
            yaw: LateralCoefficients {
                c0: 0.0,
                beta_per_rad: 0.0283,
                p_hat: 0.0044,
                r_hat: -0.072,
                delta_a_per_rad: -0.00339,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wing_area_m2", self.wing_area_m2),
            ("span_m", self.span_m),
            ("chord_m", self.chord_m),
            ("air_density_kg_m3", self.air_density_kg_m3),
            ("blend_steepness", self.blend_steepness),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.blend_cutoff_rad > 0.0 && self.blend_cutoff_rad < FRAC_PI_2) {
            return Err(Error::InvalidConfig(format!(
                "blend_cutoff_rad must lie in (0, pi/2), got {}",
                self.blend_cutoff_rad
            )));
        }
        let n = 2000;
        for i in 0..=n {
            let alpha = -FRAC_PI_2 + std::f64::consts::PI * i as f64 / n as f64;
            let cd = self.drag_coefficient(alpha, 0.0, 0.0, 0.0);
            if !(cd > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "drag coefficient {cd} is not positive at alpha = {alpha:.4} rad"
                )));
            }
        }
        Ok(())
    }

    pub fn sigma(&self, alpha: f64) -> f64 {
        blending_sigma(alpha, self.blend_steepness, self.blend_cutoff_rad)
    }

    pub fn lift_coefficient(&self, alpha: f64, q_hat: f64, delta_e: f64) -> f64 {
        let c = &self.lift;
        let sigma = self.sigma(alpha);
        let linear = c.c0 + c.alpha_per_rad * alpha + c.alpha2_per_rad2 * alpha * alpha;
        let (s, co) = alpha.sin_cos();
        let plate = 2.0 * alpha.signum() * s * s * co;
        (1.0 - sigma) * linear + sigma * plate + c.q_hat * q_hat + c.delta_e_per_rad * delta_e
            + c.delta_e2_per_rad2 * delta_e * delta_e
    }

    pub fn drag_coefficient(&self, alpha: f64, beta: f64, q_hat: f64, delta_e: f64) -> f64 {
        let c = &self.drag;
        let sigma = self.sigma(alpha);
        let linear = c.c0 + c.alpha_per_rad * alpha + c.alpha2_per_rad2 * alpha * alpha;
        let s = alpha.sin();
        let plate = 2.0 * s * s;
        (1.0 - sigma) * linear
            + sigma * plate
            + c.beta_per_rad * beta
            + c.beta2_per_rad2 * beta * beta
            + c.q_hat * q_hat
            + c.delta_e_per_rad * delta_e
            + c.delta_e2_per_rad2 * delta_e * delta_e
    }

    pub fn pitch_coefficient(&self, alpha: f64, q_hat: f64, delta_e: f64) -> f64 {
        let c = &self.pitch;
        let sigma = self.sigma(alpha);
        let linear = c.c0 + c.alpha_per_rad * alpha + c.alpha2_per_rad2 * alpha * alpha;
        let s = alpha.sin();
        let plate = self.flat_plate_pitch_gain * alpha.signum() * s * s;
        (1.0 - sigma) * linear + sigma * plate + c.q_hat * q_hat + c.delta_e_per_rad * delta_e
    }

    /// Aerodynamic force and moment for the given virtual aileron and
    /// elevator deflections (rad).
    pub fn loads(&self, air: &AirData, delta_a: f64, delta_e: f64) -> AeroLoads {
        if air.low_airspeed || air.airspeed < AIRSPEED_FLOOR {
            return AeroLoads {
                wrench: BodyWrench::zero(),
                lift: 0.0,
                drag: 0.0,
                side: 0.0,
            };
        }
        let va = air.airspeed;
        let (alpha, beta) = (air.alpha, air.beta);
        let rates = &air.relative_rates;
        let p_hat = rates.x * self.span_m / (2.0 * va);
        let q_hat = rates.y * self.chord_m / (2.0 * va);
        let r_hat = rates.z * self.span_m / (2.0 * va);

        let qbar_s = 0.5 * self.air_density_kg_m3 * va * va * self.wing_area_m2;
        let drag = qbar_s * self.drag_coefficient(alpha, beta, q_hat, delta_e);
        let side = qbar_s * self.side.eval(beta, p_hat, r_hat, delta_a);
        let lift = qbar_s * self.lift_coefficient(alpha, q_hat, delta_e);

        let force = wind_to_body(alpha, beta) * Vector3::new(-drag, side, -lift);
        let moment = Vector3::new(
            qbar_s * self.span_m * self.roll.eval(beta, p_hat, r_hat, delta_a),
            qbar_s * self.chord_m * self.pitch_coefficient(alpha, q_hat, delta_e),
            qbar_s * self.span_m * self.yaw.eval(beta, p_hat, r_hat, delta_a),
        );
        AeroLoads {
            wrench: BodyWrench::new(force, moment),
            lift,
            drag,
            side,
        }
    }
}

impl Default for AeroCoefficientSet {
    fn default() -> Self {
        Self::skywalker_x8()
    }
}

pub fn aero_wrench(
    air: &AirData,
    delta_a: f64,
    delta_e: f64,
    coeffs: &AeroCoefficientSet,
) -> BodyWrench {
    coeffs.loads(air, delta_a, delta_e).wrench
}
