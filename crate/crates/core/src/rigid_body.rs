//! Quaternion-based 6-DOF rigid-body state and fixed-step integration.
//!
//! Frames: positions and gravity live in north-east-down (NED); velocities,
//! forces and moments are expressed in the body frame. The attitude
//! quaternion is stored as `(η, ε1, ε2, ε3)` using nalgebra's `w, i, j, k`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// NED position, m.
    pub position: Vector3<f64>,
    /// Unit quaternion rotating body vectors into NED.
    pub attitude: Quaternion<f64>,
    /// Body-frame linear velocity (u, v, w), m/s.
    pub velocity: Vector3<f64>,
    /// Body-frame angular velocity (p, q, r), rad/s.
    pub angular_velocity: Vector3<f64>,
}

impl Default for SimState {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            attitude: Quaternion::identity(),
            velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        }
    }
}

impl SimState {
    pub fn euler(&self) -> (f64, f64, f64) {
        quat_to_euler(&self.attitude)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(&self.attitude)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.attitude.coords.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.angular_velocity.iter().all(|x| x.is_finite())
    }

    /// Altitude above the NED origin, m.
    pub fn altitude(&self) -> f64 {
        -self.position.z
    }

    fn add_scaled(&self, d: &StateDerivative, h: f64) -> SimState {
        SimState {
            position: self.position + d.position * h,
            attitude: self.attitude + d.attitude * h,
            velocity: self.velocity + d.velocity * h,
            angular_velocity: self.angular_velocity + d.angular_velocity * h,
        }
    }
}

/// Time derivative of every [`SimState`] field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub attitude: Quaternion<f64>,
    pub velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl StateDerivative {
    fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.attitude.coords.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.angular_velocity.iter().all(|x| x.is_finite())
    }
}

/// Total body-frame force (N) and moment (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyWrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl BodyWrench {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(force: Vector3<f64>, moment: Vector3<f64>) -> Self {
        Self { force, moment }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().all(|x| x.is_finite()) && self.moment.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Add for BodyWrench {
    type Output = BodyWrench;

    fn add(self, rhs: BodyWrench) -> BodyWrench {
        BodyWrench {
            force: self.force + rhs.force,
            moment: self.moment + rhs.moment,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InertialProperties {
    mass: f64,
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    gravity: f64,
}

impl InertialProperties {
    /// Validates `mass > 0` and a symmetric positive-definite inertia tensor,
    /// and precomputes its inverse.
    pub fn new(mass: f64, inertia: Matrix3<f64>, gravity: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidConfig(format!("mass must be positive, got {mass}")));
        }
        if (inertia - inertia.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidConfig("inertia tensor is not symmetric".into()));
        }
        if inertia.cholesky().is_none() {
            return Err(Error::InvalidConfig(
                "inertia tensor is not positive definite".into(),
            ));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("inertia tensor is singular".into()))?;
        Ok(Self {
            mass,
            inertia,
            inertia_inv,
            gravity,
        })
    }

    /// Builds the tensor from principal moments and the x-z product of inertia
    /// (`I_xz` enters with a negative sign off the diagonal).
    pub fn from_moments(
        mass: f64,
        jx: f64,
        jy: f64,
        jz: f64,
        jxz: f64,
        gravity: f64,
    ) -> Result<Self> {
        let inertia = Matrix3::new(jx, 0.0, -jxz, 0.0, jy, 0.0, -jxz, 0.0, jz);
        Self::new(mass, inertia, gravity)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    /// Gravity force expressed in the body frame.
    pub fn gravity_wrench(&self, attitude: &Quaternion<f64>) -> BodyWrench {
        let g_ned = Vector3::new(0.0, 0.0, self.mass * self.gravity);
        BodyWrench::new(rotation_matrix(attitude).transpose() * g_ned, Vector3::zeros())
    }
}

/// Skew-symmetric cross-product matrix, `skew(a) * b == a × b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Body-to-NED rotation `I + 2η S(ε) + 2 S(ε)²`.
pub fn rotation_matrix(q: &Quaternion<f64>) -> Matrix3<f64> {
    let eps = Vector3::new(q.i, q.j, q.k);
    let s = skew(&eps);
    Matrix3::identity() + s * (2.0 * q.w) + s * s * 2.0
}

/// ZYX (yaw-pitch-roll) Euler angles from a unit quaternion.
///
/// At pitch ±π/2 the roll is set to zero and yaw carries the remaining
/// rotation.
pub fn quat_to_euler(q: &Quaternion<f64>) -> (f64, f64, f64) {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let sin_pitch = 2.0 * (w * y - z * x);
    if sin_pitch.abs() >= 1.0 - 1e-12 {
        let pitch = (PI / 2.0).copysign(sin_pitch);
        let yaw = wrap_angle(2.0 * z.atan2(w));
        return (0.0, pitch, yaw);
    }
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let pitch = sin_pitch.asin();
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    (wrap_angle(roll), pitch, wrap_angle(yaw))
}

pub fn euler_to_quat(roll: f64, pitch: f64, yaw: f64) -> Quaternion<f64> {
    let (sr, cr) = (roll / 2.0).sin_cos();
    let (sp, cp) = (pitch / 2.0).sin_cos();
    let (sy, cy) = (yaw / 2.0).sin_cos();
    Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    )
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Rigid-body kinematics and Newton-Euler dynamics.
///
/// `wrench` is the total body-frame load, gravity included.
pub fn state_derivative(
    state: &SimState,
    wrench: &BodyWrench,
    inertial: &InertialProperties,
) -> Result<StateDerivative> {
    if !state.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    if !wrench.is_finite() {
        return Err(Error::NonFinite("wrench"));
    }
    let q = &state.attitude;
    let v = &state.velocity;
    let w = &state.angular_velocity;
    let eps = Vector3::new(q.i, q.j, q.k);

    let q_dot_scalar = -0.5 * w.dot(&eps);
    let q_dot_vec = 0.5 * (w * q.w - w.cross(&eps));

    let m = inertial.mass;
    let v_dot = wrench.force / m - w.cross(v);
    let w_dot = inertial.inertia_inv * (wrench.moment - w.cross(&(inertial.inertia * w)));

    Ok(StateDerivative {
        position: rotation_matrix(q) * v,
        attitude: Quaternion::new(q_dot_scalar, q_dot_vec.x, q_dot_vec.y, q_dot_vec.z),
        velocity: v_dot,
        angular_velocity: w_dot,
    })
}

/// One classical RK4 step with the attitude renormalized afterwards.
///
/// `wrench_of` is evaluated at each stage and must be pure within the step.
pub fn integrate_step<F>(
    state: &SimState,
    wrench_of: F,
    inertial: &InertialProperties,
    dt: f64,
) -> Result<SimState>
where
    F: Fn(&SimState) -> BodyWrench,
{
    let f = |s: &SimState| -> Result<StateDerivative> {
        let d = state_derivative(s, &wrench_of(s), inertial)?;
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NonFinite("state derivative"))
        }
    };
    let k1 = f(state)?;
    let k2 = f(&state.add_scaled(&k1, dt / 2.0))?;
    let k3 = f(&state.add_scaled(&k2, dt / 2.0))?;
    let k4 = f(&state.add_scaled(&k3, dt))?;

    let h = dt / 6.0;
    let mut next = SimState {
        position: state.position
            + (k1.position + k2.position * 2.0 + k3.position * 2.0 + k4.position) * h,
        attitude: state.attitude
            + (k1.attitude + k2.attitude * 2.0 + k3.attitude * 2.0 + k4.attitude) * h,
        velocity: state.velocity
            + (k1.velocity + k2.velocity * 2.0 + k3.velocity * 2.0 + k4.velocity) * h,
        angular_velocity: state.angular_velocity
            + (k1.angular_velocity
                + k2.angular_velocity * 2.0
                + k3.angular_velocity * 2.0
                + k4.angular_velocity)
                * h,
    };
    let norm = next.attitude.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::NonFinite("attitude"));
    }
    next.attitude /= norm;
    if !next.is_finite() {
        return Err(Error::NonFinite("integrated state"));
    }
    Ok(next)
}
