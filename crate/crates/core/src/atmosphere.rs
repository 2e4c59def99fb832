//! Steady wind plus Dryden turbulence.
//!
//! The gust components follow the MIL-F-8785C low-altitude Dryden forms,
//! written as continuous state-space shaping filters driven by white noise of
//! intensity π. Each filter is discretized exactly (Van Loan) for the current
//! transport speed, so the sampled process has the stationary variance of
//! the continuous one for any step size.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aerodynamics::AIRSPEED_FLOOR;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Transport speed used when the aircraft has (almost) no airspeed.
pub const NOMINAL_AIRSPEED: f64 = 18.0;

const FEET_PER_METER: f64 = 1.0 / 0.3048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    None,
    Light,
    Moderate,
    Severe,
}

impl Severity {
    pub const ALL: [Severity; 4] = [
        Severity::None,
        Severity::Light,
        Severity::Moderate,
        Severity::Severe,
    ];

    /// Magnitude of the steady wind that accompanies this turbulence level.
    pub fn steady_wind_mps(self) -> f64 {
        match self {
            Severity::None => 0.0,
            Severity::Light => 7.0,
            Severity::Moderate => 15.0,
            Severity::Severe => 23.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Severity::None => "none",
            Severity::Light => "light",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }
}

impl std::str::FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Severity::None),
            "light" => Ok(Severity::Light),
            "moderate" => Ok(Severity::Moderate),
            "severe" => Ok(Severity::Severe),
            other => Err(Error::InvalidConfig(format!("unknown severity '{other}'"))),
        }
    }
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Dryden turbulence parameters shared by every wind setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrydenConfig {
    /// Altitude the low-altitude scale lengths are evaluated at, m.
    pub altitude_m: f64,
    /// Half-angle of the steady-wind elevation band, deg.
    pub steady_wind_elevation_deg: f64,
}

impl Default for DrydenConfig {
    fn default() -> Self {
        Self {
            altitude_m: 100.0,
            steady_wind_elevation_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindSetting {
    pub severity: Severity,
    /// m/s, NED
    pub steady_wind: Vector3<f64>,
    /// (L_u, L_v, L_w), m
    pub scale_lengths: [f64; 3],
    /// (σ_u, σ_v, σ_w), m/s
    pub intensities: [f64; 3],
    pub seed: u64,
}

impl WindSetting {
    /// Calm air.
    pub fn calm() -> Self {
        Self::new(Severity::None, &DrydenConfig::default(), 0)
    }

    /// Draws the steady-wind orientation from `seed` and derives the Dryden
    /// intensities from the severity's steady-wind magnitude (taken as the
    /// 20 ft wind speed).
    pub fn new(severity: Severity, cfg: &DrydenConfig, seed: u64) -> Self {
        let mut rng = substream(seed, "steady-wind");
        let magnitude = severity.steady_wind_mps();
        let steady = steady_wind(magnitude, cfg.steady_wind_elevation_deg.to_radians(), &mut rng);
        let h_ft = cfg.altitude_m * FEET_PER_METER;
        let denom = 0.177 + 0.000823 * h_ft;
        let l_w = cfg.altitude_m;
        let l_u = h_ft / denom.powf(1.2) / FEET_PER_METER;
        let sigma_w = 0.1 * magnitude;
        let sigma_uv = sigma_w / denom.powf(0.4);
        Self {
            severity,
            steady_wind: steady,
            scale_lengths: [l_u, l_u, l_w],
            intensities: [sigma_uv, sigma_uv, sigma_w],
            seed,
        }
    }
}

/// Steady wind of the given magnitude with uniform azimuth and elevation
/// uniform in ±`max_elevation`.
pub fn steady_wind<R: Rng + ?Sized>(magnitude: f64, max_elevation: f64, rng: &mut R) -> Vector3<f64> {
    let azimuth = rng.random_range(-PI..PI);
    let elevation = if max_elevation > 0.0 {
        rng.random_range(-max_elevation..=max_elevation)
    } else {
        0.0
    };
    if magnitude == 0.0 {
        return Vector3::zeros();
    }
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vector3::new(ce * ca, ce * sa, -se) * magnitude
}

/// Linear shaping filter `x' = A x + B n`, outputs `y = C x`.
#[derive(Debug, Clone)]
struct ShapingFilter {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

/// Exactly discretized filter for one step size and transport speed.
#[derive(Debug, Clone)]
struct DiscreteFilter {
    phi: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
}

/// Continuous white-noise intensity the Dryden transfer functions assume.
const NOISE_INTENSITY: f64 = PI;

impl ShapingFilter {
    fn first_order(gain: f64, tau: f64) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, -1.0 / tau),
            b: DMatrix::from_element(1, 1, 1.0 / tau),
            c: DMatrix::from_element(1, 1, gain),
        }
    }

    /// `gain (1 + √3 τ s) / (1 + τ s)²`, augmented with a washout state that
    /// yields `sign (s / V) / (1 + τ_rate s)` of that output as a second output.
    fn second_order_with_rate(gain: f64, tau: f64, v: f64, tau_rate: f64, sign: f64) -> Self {
        let b0 = gain / (tau * tau);
        let b1 = gain * 3f64.sqrt() / tau;
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(3, 3, &[
            0.0, 1.0, 0.0,
            -1.0 / (tau * tau), -2.0 / tau, 0.0,
            b0 / tau_rate, b1 / tau_rate, -1.0 / tau_rate,
        ]);
        let b = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0]);
        let k = sign / (v * tau_rate);
        #[rustfmt::skip]
        let c = DMatrix::from_row_slice(2, 3, &[
            b0, b1, 0.0,
            k * b0, k * b1, -k,
        ]);
        Self { a, b, c }
    }

    fn order(&self) -> usize {
        self.a.nrows()
    }

    fn discretize(&self, dt: f64) -> DiscreteFilter {
        let n = self.order();
        let q = &self.b * self.b.transpose() * NOISE_INTENSITY;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&(-&self.a * dt));
        m.view_mut((0, n), (n, n)).copy_from(&(q * dt));
        m.view_mut((n, n), (n, n)).copy_from(&(self.a.transpose() * dt));
        let e = m.exp();
        let phi = e.view((n, n), (n, n)).transpose();
        let qd = &phi * e.view((0, n), (n, n));
        let qd = (&qd + qd.transpose()) * 0.5;
        DiscreteFilter {
            noise_factor: psd_sqrt(&qd),
            phi,
        }
    }

    /// Stationary state covariance from the continuous Lyapunov equation.
    fn stationary_covariance(&self) -> DMatrix<f64> {
        let n = self.order();
        let q = &self.b * self.b.transpose() * NOISE_INTENSITY;
        let eye = DMatrix::<f64>::identity(n, n);
        let lhs = eye.kronecker(&self.a) + self.a.kronecker(&eye);
        let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());
        let p = lhs.lu().solve(&rhs).expect("stable filter has a unique stationary covariance");
        let p = DMatrix::from_column_slice(n, n, p.as_slice());
        (&p + p.transpose()) * 0.5
    }
}

/// Square root factor `L` with `L Lᵀ = m` of a symmetric PSD matrix.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut l = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

#[derive(Debug, Clone)]
struct GustChannel {
    filter: ShapingFilter,
    discrete: DiscreteFilter,
    state: DMatrix<f64>,
}

/// Filter bank for one aircraft: u, (v, r), (w, q) and p channels.
#[derive(Debug, Clone)]
struct FilterBank {
    airspeed: f64,
    dt: f64,
    u: GustChannel,
    v: GustChannel,
    w: GustChannel,
    p: GustChannel,
}

/// Stateful Dryden gust generator. One instance per simulated aircraft.
#[derive(Debug, Clone)]
pub struct DrydenGusts {
    setting: WindSetting,
    wingspan: f64,
    rng: ChaCha8Rng,
    bank: Option<FilterBank>,
}

impl DrydenGusts {
    pub fn new(setting: WindSetting, wingspan_m: f64) -> Self {
        let rng = substream(setting.seed, "dryden");
        Self {
            setting,
            wingspan: wingspan_m,
            rng,
            bank: None,
        }
    }

    pub fn setting(&self) -> &WindSetting {
        &self.setting
    }

    fn filters(&self, v: f64) -> [ShapingFilter; 4] {
        let [l_u, l_v, l_w] = self.setting.scale_lengths;
        let [s_u, s_v, s_w] = self.setting.intensities;
        let b = self.wingspan;
        let u = ShapingFilter::first_order(s_u * (2.0 * l_u / (PI * v)).sqrt(), l_u / v);
        let vr = ShapingFilter::second_order_with_rate(
            s_v * (l_v / (PI * v)).sqrt(),
            l_v / v,
            v,
            3.0 * b / (PI * v),
            1.0,
        );
        let wq = ShapingFilter::second_order_with_rate(
            s_w * (l_w / (PI * v)).sqrt(),
            l_w / v,
            v,
            4.0 * b / (PI * v),
            -1.0,
        );
        let p_gain = s_w * (0.8 / v).sqrt() * (PI / (4.0 * b)).powf(1.0 / 6.0) / l_w.powf(1.0 / 3.0);
        let p = ShapingFilter::first_order(p_gain, 4.0 * b / (PI * v));
        [u, vr, wq, p]
    }

    fn channel(filter: ShapingFilter, dt: f64, rng: &mut ChaCha8Rng) -> GustChannel {
        let discrete = filter.discretize(dt);
        let n = filter.order();
        let chol = psd_sqrt(&filter.stationary_covariance());
        let z = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        GustChannel {
            state: chol * z,
            filter,
            discrete,
        }
    }

    /// Advances the filters by `dt` at transport speed `airspeed` and returns
    /// the body-frame gust velocity (m/s) and gust angular rate (rad/s).
    pub fn sample(&mut self, airspeed: f64, dt: f64) -> (Vector3<f64>, Vector3<f64>) {
        if self.setting.severity == Severity::None {
            return (Vector3::zeros(), Vector3::zeros());
        }
        let v = if airspeed.is_finite() && airspeed >= AIRSPEED_FLOOR {
            airspeed
        } else {
            NOMINAL_AIRSPEED
        };
        let stale = match &self.bank {
            None => true,
            Some(bank) => bank.airspeed != v || bank.dt != dt,
        };
        if stale {
            let [u, vr, wq, p] = self.filters(v);
            match &mut self.bank {
                None => {
                    // first call: start every channel from its stationary distribution
                    let rng = &mut self.rng;
                    self.bank = Some(FilterBank {
                        airspeed: v,
                        dt,
                        u: Self::channel(u, dt, rng),
                        v: Self::channel(vr, dt, rng),
                        w: Self::channel(wq, dt, rng),
                        p: Self::channel(p, dt, rng),
                    });
                }
                Some(bank) => {
                    for (ch, f) in [&mut bank.u, &mut bank.v, &mut bank.w, &mut bank.p]
                        .into_iter()
                        .zip([u, vr, wq, p])
                    {
                        ch.discrete = f.discretize(dt);
                        ch.filter = f;
                    }
                    bank.airspeed = v;
                    bank.dt = dt;
                }
            }
        }
        let bank = self.bank.as_mut().expect("initialized above");
        let rng = &mut self.rng;
        for ch in [&mut bank.u, &mut bank.v, &mut bank.w, &mut bank.p] {
            let n = ch.filter.order();
            let z = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            ch.state = &ch.discrete.phi * &ch.state + &ch.discrete.noise_factor * z;
        }
        let yu = &bank.u.filter.c * &bank.u.state;
        let yv = &bank.v.filter.c * &bank.v.state;
        let yw = &bank.w.filter.c * &bank.w.state;
        let yp = &bank.p.filter.c * &bank.p.state;
        (
            Vector3::new(yu[0], yv[0], yw[0]),
            Vector3::new(yp[0], yw[1], yv[1]),
        )
    }
}

/// Stationary variance of each gust output (u, v, w, p, q, r) at transport
/// speed `airspeed`, from the continuous filters.
pub fn stationary_variances(setting: &WindSetting, wingspan_m: f64, airspeed: f64) -> [f64; 6] {
    let g = DrydenGusts::new(setting.clone(), wingspan_m);
    let [u, vr, wq, p] = g.filters(airspeed);
    let var = |f: &ShapingFilter, row: usize| {
        let p = f.stationary_covariance();
        let c = f.c.row(row);
        (c * p * c.transpose())[0]
    };
    [
        var(&u, 0),
        var(&vr, 0),
        var(&wq, 0),
        var(&p, 0),
        var(&wq, 1),
        var(&vr, 1),
    ]
}

/// Full wind input for one simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindSample {
    /// NED, m/s
    pub steady: Vector3<f64>,
    /// body, m/s
    pub gust: Vector3<f64>,
    /// body, rad/s
    pub gust_rates: Vector3<f64>,
}

/// Steady wind plus turbulence for one episode.
#[derive(Debug, Clone)]
pub struct WindField {
    steady: Vector3<f64>,
    gusts: DrydenGusts,
}

impl WindField {
    pub fn new(setting: WindSetting, wingspan_m: f64) -> Self {
        Self {
            steady: setting.steady_wind,
            gusts: DrydenGusts::new(setting, wingspan_m),
        }
    }

    pub fn calm(wingspan_m: f64) -> Self {
        Self::new(WindSetting::calm(), wingspan_m)
    }

    pub fn setting(&self) -> &WindSetting {
        self.gusts.setting()
    }

    pub fn sample(&mut self, airspeed: f64, dt: f64) -> WindSample {
        let (gust, gust_rates) = self.gusts.sample(airspeed, dt);
        WindSample {
            steady: self.steady,
            gust,
            gust_rates,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn severity_wind_magnitudes() {
        let mags: Vec<f64> = Severity::ALL.iter().map(|s| s.steady_wind_mps()).collect();
        assert_eq!(mags, vec![0.0, 7.0, 15.0, 23.0]);
        assert_eq!("Moderate".parse::<Severity>().unwrap(), Severity::Moderate);
        assert!("gale".parse::<Severity>().is_err());
    }

    #[test]
    fn calm_air_is_exactly_zero() {
        let mut g = DrydenGusts::new(WindSetting::calm(), 2.1);
        for _ in 0..1000 {
            let (v, w) = g.sample(18.0, 0.01);
            assert_eq!(v, Vector3::zeros());
            assert_eq!(w, Vector3::zeros());
        }
        assert_eq!(WindSetting::calm().steady_wind, Vector3::zeros());
    }

    #[test]
    fn steady_wind_magnitude_and_orientation() {
        let cfg = DrydenConfig::default();
        let a = WindSetting::new(Severity::Severe, &cfg, 1);
        let b = WindSetting::new(Severity::Severe, &cfg, 2);
        assert_abs_diff_eq!(a.steady_wind.norm(), 23.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.steady_wind.norm(), 23.0, epsilon = 1e-9);
        assert!((a.steady_wind - b.steady_wind).norm() > 1e-6);
        let elev = (-a.steady_wind.z / 23.0).asin();
        assert!(elev.abs() <= 15f64.to_radians() + 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = DrydenConfig::default();
        let run = || {
            let mut g = DrydenGusts::new(WindSetting::new(Severity::Moderate, &cfg, 9), 2.1);
            (0..500).map(|i| g.sample(15.0 + (i as f64) * 0.01, 0.01)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn low_altitude_parameters() {
        let s = WindSetting::new(Severity::Light, &DrydenConfig::default(), 0);
        // h = 100 m: L_w = h, L_u = h / (0.177 + 0.000823 h_ft)^1.2 in feet
        assert_abs_diff_eq!(s.scale_lengths[2], 100.0, epsilon = 1e-12);
        let h_ft: f64 = 100.0 / 0.3048;
        let expected = h_ft / (0.177 + 0.000823 * h_ft).powf(1.2) * 0.3048;
        assert_abs_diff_eq!(s.scale_lengths[0], expected, epsilon = 1e-9);
        assert_abs_diff_eq!(s.intensities[2], 0.7, epsilon = 1e-12);
        assert!(s.intensities[0] > s.intensities[2]);
    }

    #[test]
    fn stationary_variance_matches_intensity() {
        // closed forms: first-order and (1+√3τs)/(1+τs)² filters with
        // intensity-π noise both give σ² exactly
        let s = WindSetting::new(Severity::Severe, &DrydenConfig::default(), 0);
        let v = stationary_variances(&s, 2.1, 18.0);
        for i in 0..3 {
            assert_abs_diff_eq!(v[i], s.intensities[i].powi(2), epsilon = 1e-9 * v[i]);
        }
        // p: π K² / (2 τ)
        let b = 2.1;
        let l_w = s.scale_lengths[2];
        let k = s.intensities[2] * (0.8f64 / 18.0).sqrt() * (PI / (4.0 * b)).powf(1.0 / 6.0) / l_w.powf(1.0 / 3.0);
        let tau = 4.0 * b / (PI * 18.0);
        assert_abs_diff_eq!(v[3], PI * k * k / (2.0 * tau), epsilon = 1e-9 * v[3]);
    }

    #[test]
    fn discretization_preserves_stationary_covariance() {
        let s = WindSetting::new(Severity::Moderate, &DrydenConfig::default(), 0);
        let g = DrydenGusts::new(s, 2.1);
        for f in g.filters(18.0) {
            for dt in [0.01, 0.5] {
                let d = f.discretize(dt);
                let p = f.stationary_covariance();
                let qd = &d.noise_factor * d.noise_factor.transpose();
                let next = &d.phi * &p * d.phi.transpose() + qd;
                assert!((&next - &p).amax() < 1e-9 * p.amax().max(1e-12), "dt = {dt}");
            }
        }
    }
}
