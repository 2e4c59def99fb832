//! Episodic attitude-tracking environment around one simulated aircraft.
//!
//! Observations hold the five most recent frames of twelve values each,
//! oldest first: `obs[slot * 12 + component]` with the components listed in
//! [`obs_index`]. Actions are three values in `[-1, 1]`: virtual aileron,
//! virtual elevator (both scaled to ±deflection limit) and throttle (scaled to
//! `[0, 1]`).

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actuators::{ActuatorState, ControlCommand};
use crate::aerodynamics::AirData;
use crate::aircraft::{Aircraft, FlightCondition};
use crate::airframe::Airframe;
use crate::atmosphere::{DrydenConfig, Severity, WindField, WindSample, WindSetting};
use crate::error::{Error, Result};
use crate::rigid_body::{wrap_angle, SimState};
use crate::rng::{child_seed, substream};

pub const HISTORY: usize = 5;
pub const FRAME_LEN: usize = 12;
pub const OBS_LEN: usize = HISTORY * FRAME_LEN;
pub const ACTION_LEN: usize = 3;
/// Window of the commanded-setpoint moving average and of the reward's
/// command-change term.
pub const COMMAND_WINDOW: usize = 5;
const COMMAND_MEMORY: usize = 2 * COMMAND_WINDOW - 1;

pub type Observation = [f64; OBS_LEN];
pub type Action = [f64; ACTION_LEN];

pub mod obs_index {
    pub const AIRSPEED: usize = 0;
    pub const ROLL: usize = 1;
    pub const PITCH: usize = 2;
    pub const P: usize = 3;
    pub const Q: usize = 4;
    pub const R: usize = 5;
    pub const ROLL_ERROR: usize = 6;
    pub const PITCH_ERROR: usize = 7;
    pub const AIRSPEED_ERROR: usize = 8;
    pub const AILERON_AVG: usize = 9;
    pub const ELEVATOR_AVG: usize = 10;
    pub const THROTTLE_AVG: usize = 11;

    /// Slot 0 is the oldest frame, slot `HISTORY - 1` the current one.
    pub const fn index(slot: usize, component: usize) -> usize {
        slot * super::FRAME_LEN + component
    }
}

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn symmetric(half: f64) -> Self {
        Self { min: -half, max: half }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    /// Same center, width multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Span {
        let c = self.center();
        let h = 0.5 * (self.max - self.min) * scale;
        Span::new(c - h, c + h)
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.min..=self.max).contains(&x)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }
}

/// Initial-state sampling ranges at full difficulty. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialRanges {
    pub roll_deg: Span,
    pub pitch_deg: Span,
    pub yaw_deg: Span,
    pub rate_deg_s: Span,
    pub alpha_deg: Span,
    pub beta_deg: Span,
    pub airspeed_mps: Span,
}

impl Default for InitialRanges {
    fn default() -> Self {
        Self {
            roll_deg: Span::symmetric(150.0),
            pitch_deg: Span::symmetric(45.0),
            yaw_deg: Span::symmetric(60.0),
            rate_deg_s: Span::symmetric(60.0),
            alpha_deg: Span::symmetric(26.0),
            beta_deg: Span::symmetric(26.0),
            airspeed_mps: Span::new(12.0, 30.0),
        }
    }
}

/// Setpoint ranges at full difficulty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetRanges {
    pub roll_deg: Span,
    pub pitch_deg: Span,
    pub airspeed_mps: Span,
}

impl Default for TargetRanges {
    fn default() -> Self {
        Self {
            roll_deg: Span::symmetric(60.0),
            pitch_deg: Span::symmetric(30.0),
            airspeed_mps: Span::new(12.0, 30.0),
        }
    }
}

impl TargetRanges {
    pub fn clamp(&self, t: &Targets) -> Targets {
        Targets {
            roll: self.roll_deg.clamp(t.roll.to_degrees()).to_radians(),
            pitch: self.pitch_deg.clamp(t.pitch.to_degrees()).to_radians(),
            airspeed: self.airspeed_mps.clamp(t.airspeed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Error scales for roll (rad), pitch (rad), airspeed (m/s) and command
    /// change (action units).
    pub zeta: [f64; 4],
    /// Saturation level of each term.
    pub gamma: [f64; 4],
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            zeta: [3.3, 2.25, 25.0, 60.0],
            gamma: [0.3, 0.3, 0.3, 0.1],
        }
    }
}

impl RewardConfig {
    /// Reward for tracking errors `(roll, pitch, airspeed)` and the summed
    /// absolute change of the recent commands.
    pub fn reward(&self, errors: [f64; 3], command_change: f64) -> f64 {
        let e = [errors[0], errors[1], errors[2], command_change];
        let t: [f64; 4] = std::array::from_fn(|i| (e[i].abs() / self.zeta[i]).clamp(0.0, self.gamma[i]));
        -pairwise(t)
    }

    pub fn min_reward(&self) -> f64 {
        -pairwise(self.gamma)
    }
}

// (a + b) + (c + d) makes the default saturation levels sum to exactly 1
fn pairwise(t: [f64; 4]) -> f64 {
    (t[0] + t[1]) + (t[2] + t[3])
}

/// Sum over the three channels of `|c[t-i] - c[t-1-i]|` for `i < window`,
/// where `history` is ordered oldest first and ends at `c[t]`.
pub fn command_change(history: &[Action], window: usize) -> f64 {
    let n = history.len();
    let pairs = window.min(n.saturating_sub(1));
    (0..pairs)
        .map(|i| {
            let (a, b) = (&history[n - 1 - i], &history[n - 2 - i]);
            (0..ACTION_LEN).map(|j| (a[j] - b[j]).abs()).sum::<f64>()
        })
        .sum()
}

/// Optional training constraints. A violation ends the episode and costs
/// `penalty_per_remaining_step` for every step the episode had left, so that
/// crashing early never beats flying badly. Off by default, in which case the
/// reward stays within `[-1, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    pub enabled: bool,
    pub max_pitch_deg: f64,
    pub max_sideslip_deg: f64,
    /// Bound on each body rate component.
    pub max_rate_rad_s: f64,
    pub penalty_per_remaining_step: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            max_pitch_deg: 85.0,
            max_sideslip_deg: 85.0,
            max_rate_rad_s: std::f64::consts::PI,
            penalty_per_remaining_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub initial_altitude_m: f64,
    /// Episodes end in failure once any body velocity component exceeds this.
    pub divergence_speed_mps: f64,
    /// Same for any body rate component.
    pub divergence_rate_rad_s: f64,
    pub initial: InitialRanges,
    pub targets: TargetRanges,
    pub reward: RewardConfig,
    pub severity: Severity,
    pub dryden: DrydenConfig,
    pub constraints: ConstraintConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            max_steps: 2000,
            initial_altitude_m: 1000.0,
            divergence_speed_mps: 120.0,
            divergence_rate_rad_s: 120.0,
            initial: InitialRanges::default(),
            targets: TargetRanges::default(),
            reward: RewardConfig::default(),
            severity: Severity::None,
            dryden: DrydenConfig::default(),
            constraints: ConstraintConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.max_steps == 0 {
            return Err(Error::InvalidConfig("dt and max_steps must be positive".into()));
        }
        if self.initial_altitude_m <= 0.0 {
            return Err(Error::InvalidConfig("initial altitude must be positive".into()));
        }
        let spans = [
            self.initial.roll_deg,
            self.initial.pitch_deg,
            self.initial.yaw_deg,
            self.initial.rate_deg_s,
            self.initial.alpha_deg,
            self.initial.beta_deg,
            self.initial.airspeed_mps,
            self.targets.roll_deg,
            self.targets.pitch_deg,
            self.targets.airspeed_mps,
        ];
        if spans.iter().any(|s| !(s.min <= s.max) || !s.min.is_finite() || !s.max.is_finite()) {
            return Err(Error::InvalidConfig("sampling range with min > max".into()));
        }
        if self.initial.airspeed_mps.min <= 0.0 || self.targets.airspeed_mps.min <= 0.0 {
            return Err(Error::InvalidConfig("airspeed ranges must be positive".into()));
        }
        let c = &self.constraints;
        if c.enabled && !(c.max_pitch_deg > 0.0 && c.max_sideslip_deg > 0.0 && c.max_rate_rad_s > 0.0 && c.penalty_per_remaining_step >= 0.0) {
            return Err(Error::InvalidConfig("constraint bounds must be positive".into()));
        }
        Ok(())
    }
}

/// Roll (rad), pitch (rad) and airspeed (m/s) setpoints.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Targets {
    pub roll: f64,
    pub pitch: f64,
    pub airspeed: f64,
}

/// Fully specified episode start.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub initial: FlightCondition,
    pub targets: Targets,
    pub wind: WindSetting,
}

/// Width multiplier of the sampling ranges at curriculum `difficulty`.
pub fn difficulty_scale(difficulty: f64) -> f64 {
    0.1 + 0.9 * difficulty.clamp(0.0, 1.0)
}

/// Draws an initial condition and targets from the ranges narrowed to
/// `difficulty` around their centers.
pub fn sample_scenario<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    difficulty: f64,
    wind: WindSetting,
    rng: &mut R,
) -> Scenario {
    let s = difficulty_scale(difficulty);
    let i = &cfg.initial;
    let deg = |span: &Span, rng: &mut R| span.scaled(s).sample(rng).to_radians();
    let roll = deg(&i.roll_deg, rng);
    let pitch = deg(&i.pitch_deg, rng);
    let yaw = deg(&i.yaw_deg, rng);
    let rates = Vector3::new(
        deg(&i.rate_deg_s, rng),
        deg(&i.rate_deg_s, rng),
        deg(&i.rate_deg_s, rng),
    );
    let alpha = deg(&i.alpha_deg, rng);
    let beta = deg(&i.beta_deg, rng);
    let airspeed = i.airspeed_mps.scaled(s).sample(rng);
    let t = &cfg.targets;
    let targets = Targets {
        roll: deg(&t.roll_deg, rng),
        pitch: deg(&t.pitch_deg, rng),
        airspeed: t.airspeed_mps.scaled(s).sample(rng),
    };
    Scenario {
        initial: FlightCondition {
            roll,
            pitch,
            yaw,
            airspeed,
            alpha,
            beta,
            rates,
            altitude: cfg.initial_altitude_m,
        },
        targets,
        wind,
    }
}

/// Maps a clipped action to physical commands.
pub fn action_to_command(action: &Action, deflection_limit: f64) -> ControlCommand {
    let a = clip_action(action);
    ControlCommand::new(
        a[0] * deflection_limit,
        a[1] * deflection_limit,
        0.5 * (a[2] + 1.0),
    )
}

/// Inverse of [`action_to_command`] for commands inside the actuator ranges.
pub fn command_to_action(cmd: &ControlCommand, deflection_limit: f64) -> Action {
    clip_action(&[
        cmd.aileron / deflection_limit,
        cmd.elevator / deflection_limit,
        2.0 * cmd.throttle - 1.0,
    ])
}

pub fn clip_action(action: &Action) -> Action {
    action.map(|a| a.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    /// Episode ended because the state diverged or the input was invalid.
    pub terminated: bool,
    /// Episode reached its step limit.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Everything a trace row or a state-feedback controller needs.
#[derive(Debug, Clone, Copy)]
pub struct FlightSnapshot {
    pub time: f64,
    pub state: SimState,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub air: AirData,
    pub targets: Targets,
    /// Most recent commanded action, clipped.
    pub action: Action,
    pub actuators: ActuatorState,
    pub wind: WindSample,
}

impl FlightSnapshot {
    /// Roll (wrapped), pitch and airspeed errors, measured minus desired.
    pub fn errors(&self) -> [f64; 3] {
        [
            wrap_angle(self.roll - self.targets.roll),
            self.pitch - self.targets.pitch,
            self.air.airspeed - self.targets.airspeed,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct UavEnv {
    airframe: Arc<Airframe>,
    cfg: EnvConfig,
    difficulty: f64,
    aircraft: Aircraft,
    wind: WindField,
    last_wind: WindSample,
    targets: Targets,
    frames: VecDeque<[f64; FRAME_LEN]>,
    /// Oldest first; the back is the command applied on the latest step.
    commands: VecDeque<Action>,
    steps: usize,
    done: bool,
}

impl UavEnv {
    pub fn new(airframe: Arc<Airframe>, cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let cond = FlightCondition {
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
            airspeed: cfg.initial.airspeed_mps.center(),
            alpha: 0.0,
            beta: 0.0,
            rates: Vector3::zeros(),
            altitude: cfg.initial_altitude_m,
        };
        let wingspan = airframe.wingspan();
        let mut env = Self {
            aircraft: Aircraft::new(airframe.clone(), cond.to_state(), ActuatorState::default()),
            airframe,
            difficulty: 0.0,
            wind: WindField::calm(wingspan),
            last_wind: WindSample::default(),
            targets: Targets {
                airspeed: cond.airspeed,
                ..Targets::default()
            },
            frames: VecDeque::with_capacity(HISTORY),
            commands: VecDeque::with_capacity(COMMAND_MEMORY),
            steps: 0,
            done: false,
            cfg,
        };
        env.reset_to(&Scenario {
            initial: cond,
            targets: env.targets,
            wind: WindSetting::calm(),
        });
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn airframe(&self) -> &Arc<Airframe> {
        &self.airframe
    }

    pub fn difficulty(&self) -> f64 {
        self.difficulty
    }

    pub fn set_difficulty(&mut self, difficulty: f64) {
        self.difficulty = difficulty.clamp(0.0, 1.0);
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn targets(&self) -> Targets {
        self.targets
    }

    /// Changes the setpoints mid-episode. The error entries of older frames
    /// keep the values they were recorded with.
    pub fn set_targets(&mut self, targets: Targets) {
        self.targets = targets;
    }

    pub fn aircraft(&self) -> &Aircraft {
        &self.aircraft
    }

    /// Random episode at the current difficulty. All randomness derives
    /// from `seed`.
    pub fn reset(&mut self, seed: u64) -> Observation {
        let mut rng: ChaCha8Rng = substream(seed, "init");
        let wind = WindSetting::new(self.cfg.severity, &self.cfg.dryden, child_seed(seed, "wind", 0));
        let scenario = sample_scenario(&self.cfg, self.difficulty, wind, &mut rng);
        self.reset_to(&scenario)
    }

    pub fn reset_to(&mut self, scenario: &Scenario) -> Observation {
        let mut state = scenario.initial.to_state();
        self.wind = WindField::new(scenario.wind.clone(), self.airframe.wingspan());
        self.last_wind = self.wind.sample(scenario.initial.airspeed, self.cfg.dt);
        // sampled airspeed, α and β are relative to the air mass
        let r = state.rotation();
        state.velocity += r.transpose() * self.last_wind.steady + self.last_wind.gust;
        let neutral = [0.0; ACTION_LEN];
        let cmd = action_to_command(&neutral, self.airframe.deflection_limit());
        let actuators = ActuatorState::at_rest(&cmd, &self.airframe.config.actuators);
        self.aircraft = Aircraft::new(self.airframe.clone(), state, actuators);
        self.targets = scenario.targets;
        self.steps = 0;
        self.done = false;
        self.commands.clear();
        self.commands.extend(std::iter::repeat_n(neutral, COMMAND_MEMORY));
        let frame = self.frame();
        self.frames.clear();
        self.frames.extend(std::iter::repeat_n(frame, HISTORY));
        self.observation()
    }

    pub fn observation(&self) -> Observation {
        let mut obs = [0.0; OBS_LEN];
        for (slot, frame) in self.frames.iter().enumerate() {
            obs[slot * FRAME_LEN..(slot + 1) * FRAME_LEN].copy_from_slice(frame);
        }
        obs
    }

    pub fn snapshot(&self) -> FlightSnapshot {
        let state = self.aircraft.state;
        let (roll, pitch, yaw) = state.euler();
        FlightSnapshot {
            time: self.steps as f64 * self.cfg.dt,
            state,
            roll,
            pitch,
            yaw,
            air: self.aircraft.airdata(&self.last_wind),
            targets: self.targets,
            action: *self.commands.back().expect("command history is never empty"),
            actuators: self.aircraft.actuators,
            wind: self.last_wind,
        }
    }

    fn frame(&self) -> [f64; FRAME_LEN] {
        let snap = self.snapshot();
        let [e_roll, e_pitch, e_va] = snap.errors();
        let mut avg = [0.0; ACTION_LEN];
        for c in self.commands.iter().rev().take(COMMAND_WINDOW) {
            for j in 0..ACTION_LEN {
                avg[j] += c[j] / COMMAND_WINDOW as f64;
            }
        }
        let w = snap.state.angular_velocity;
        [
            snap.air.airspeed,
            snap.roll,
            snap.pitch,
            w.x,
            w.y,
            w.z,
            e_roll,
            e_pitch,
            e_va,
            avg[0],
            avg[1],
            avg[2],
        ]
    }

    fn violates_constraints(&self, frame: &[f64; FRAME_LEN]) -> bool {
        let c = &self.cfg.constraints;
        if !c.enabled {
            return false;
        }
        let beta = self.aircraft.airdata(&self.last_wind).beta;
        frame[obs_index::PITCH].abs() > c.max_pitch_deg.to_radians()
            || beta.abs() > c.max_sideslip_deg.to_radians()
            || self.aircraft.state.angular_velocity.amax() > c.max_rate_rad_s
    }

    fn diverged(&self) -> bool {
        let s = &self.aircraft.state;
        !s.is_finite()
            || s.velocity.amax() > self.cfg.divergence_speed_mps
            || s.angular_velocity.amax() > self.cfg.divergence_rate_rad_s
            || s.altitude() < 0.0
    }

    /// Applies `action` for one time step. Stepping a finished episode is an
    /// error; a non-finite action ends the episode as a failure.
    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::InvalidConfig("step called on a finished episode".into()));
        }
        let fail = |env: &mut Self| {
            env.done = true;
            Ok(StepResult {
                reward: env.cfg.reward.min_reward(),
                terminated: true,
                truncated: false,
            })
        };
        if action.iter().any(|a| !a.is_finite()) {
            return fail(self);
        }
        let a = clip_action(action);
        self.commands.pop_front();
        self.commands.push_back(a);
        let cmd = action_to_command(&a, self.airframe.deflection_limit());
        if self.aircraft.step(&cmd, &self.last_wind, self.cfg.dt).is_err() {
            return fail(self);
        }
        self.steps += 1;
        if self.diverged() {
            return fail(self);
        }
        let airspeed = self.aircraft.airdata(&self.last_wind).airspeed;
        self.last_wind = self.wind.sample(airspeed, self.cfg.dt);
        let frame = self.frame();
        self.frames.pop_front();
        self.frames.push_back(frame);
        let history: Vec<Action> = self.commands.iter().copied().collect();
        let change = command_change(&history, COMMAND_WINDOW);
        let errors = [frame[obs_index::ROLL_ERROR], frame[obs_index::PITCH_ERROR], frame[obs_index::AIRSPEED_ERROR]];
        let reward = self.cfg.reward.reward(errors, change);
        if self.violates_constraints(&frame) {
            self.done = true;
            let left = self.cfg.max_steps.saturating_sub(self.steps) as f64;
            return Ok(StepResult {
                reward: reward - self.cfg.constraints.penalty_per_remaining_step * left,
                terminated: true,
                truncated: false,
            });
        }
        let truncated = self.steps >= self.cfg.max_steps;
        self.done = truncated;
        Ok(StepResult {
            reward,
            terminated: false,
            truncated,
        })
    }
}

/// Running per-component mean and population variance (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1.0;
        for ((m, m2), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.count;
            *m2 += d * (v - *m);
        }
    }

    /// Population variance; 1 before any sample.
    pub fn variance(&self, i: usize) -> f64 {
        if self.count > 0.0 {
            (self.m2[i] / self.count).max(0.0)
        } else {
            1.0
        }
    }
}

/// Observation normalizer with running statistics, frozen outside training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub stats: RunningStats,
    pub clip: f64,
    pub epsilon: f64,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            stats: RunningStats::new(dim),
            clip: 10.0,
            epsilon: 1e-8,
        }
    }

    /// In training mode the statistics absorb `raw` first.
    pub fn normalize(&mut self, raw: &[f64], training: bool, out: &mut [f64]) {
        if training {
            self.stats.update(raw);
        }
        self.apply(raw, out);
    }

    /// Normalizes with the current statistics, leaving them untouched.
    pub fn apply(&self, raw: &[f64], out: &mut [f64]) {
        for (i, (o, &x)) in out.iter_mut().zip(raw).enumerate() {
            let z = (x - self.stats.mean[i]) / (self.stats.variance(i) + self.epsilon).sqrt();
            *o = z.clamp(-self.clip, self.clip);
        }
    }
}
