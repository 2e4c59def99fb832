//! Scenario batteries, step-response metrics and comparison reports.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::airframe::Airframe;
use crate::atmosphere::{Severity, WindSetting};
use crate::environment::{
    clip_action, sample_scenario, Action, EnvConfig, FlightSnapshot, Scenario, Span, Targets, UavEnv,
    ACTION_LEN,
};
use crate::error::{Error, Result};
use crate::rng::{child_seed, substream};

/// Anything that maps the current flight state to an action in `[-1, 1]³`.
/// State-feedback controllers read the snapshot; learned policies read the
/// raw observation vector.
pub trait Controller {
    /// Clears per-episode memory.
    fn reset(&mut self);
    fn act(&mut self, snapshot: &FlightSnapshot, observation: &[f64], dt: f64) -> Action;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricBounds {
    pub angle_deg: f64,
    pub airspeed_mps: f64,
    /// Consecutive in-bound steps required at the end of an episode.
    pub dwell_steps: usize,
}

impl Default for MetricBounds {
    fn default() -> Self {
        Self {
            angle_deg: 5.0,
            airspeed_mps: 2.0,
            dwell_steps: 100,
        }
    }
}

impl MetricBounds {
    fn bound(&self, state: usize) -> f64 {
        if state < 2 {
            self.angle_deg.to_radians()
        } else {
            self.airspeed_mps
        }
    }
}

/// Errors (roll, pitch, airspeed; measured minus desired) at every step,
/// starting with the initial state, and the applied actions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeRecord {
    pub dt: f64,
    pub errors: Vec<[f64; 3]>,
    pub actions: Vec<Action>,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateMetrics {
    pub success: bool,
    /// s, from the 90 % to the 10 % initial-error crossing.
    pub rise_time: Option<f64>,
    /// Initial error was zero, so the rise time is reported as 0.
    pub rise_degenerate: bool,
    /// s, start of the final in-bound dwell.
    pub settling_time: Option<f64>,
    /// Peak excursion past the setpoint, % of the initial error.
    pub overshoot_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    /// Roll, pitch, airspeed.
    pub states: [StateMetrics; 3],
    pub success: bool,
    /// Mean absolute action change per second and per channel, action units.
    pub control_variation: f64,
}

fn first_index(errors: &[[f64; 3]], state: usize, threshold: f64) -> Option<usize> {
    errors.iter().position(|e| e[state].abs() <= threshold)
}

pub fn compute_metrics(record: &EpisodeRecord, bounds: &MetricBounds) -> MetricReport {
    let dt = record.dt;
    let n = record.errors.len();
    let mut states = [StateMetrics::default(); 3];
    for (s, m) in states.iter_mut().enumerate() {
        let bound = bounds.bound(s);
        let trailing = record
            .errors
            .iter()
            .rev()
            .take_while(|e| e[s].abs() <= bound)
            .count();
        m.success = !record.diverged && trailing >= bounds.dwell_steps;
        if !m.success {
            continue;
        }
        m.settling_time = Some((n - trailing) as f64 * dt);
        let e0 = record.errors[0][s];
        if e0 == 0.0 {
            m.rise_degenerate = true;
            m.rise_time = Some(0.0);
            m.overshoot_pct = Some(0.0);
            continue;
        }
        let t90 = first_index(&record.errors, s, 0.9 * e0.abs());
        let t10 = first_index(&record.errors, s, 0.1 * e0.abs());
        m.rise_time = match (t90, t10) {
            (Some(a), Some(b)) => Some((b - a) as f64 * dt),
            _ => None,
        };
        let peak = record
            .errors
            .iter()
            .map(|e| -e0.signum() * e[s])
            .fold(0.0, f64::max);
        m.overshoot_pct = Some(100.0 * peak / e0.abs());
    }
    MetricReport {
        success: states.iter().all(|m| m.success),
        states,
        control_variation: control_variation(&record.actions, dt),
    }
}

/// Mean absolute change of the actions per second, averaged over channels.
pub fn control_variation(actions: &[Action], dt: f64) -> f64 {
    if actions.len() < 2 {
        return 0.0;
    }
    let total: f64 = actions
        .windows(2)
        .map(|w| (0..ACTION_LEN).map(|j| (w[1][j] - w[0][j]).abs()).sum::<f64>())
        .sum();
    let seconds = actions.len() as f64 * dt;
    total / (ACTION_LEN as f64 * seconds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub horizon: usize,
    /// Setpoint offset from the initial roll and pitch, degrees.
    pub angle_offset_deg: Span,
    /// Setpoint offset from the initial airspeed, m/s.
    pub airspeed_offset_mps: Span,
    pub bounds: MetricBounds,
    pub env: EnvConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            horizon: 1500,
            angle_offset_deg: Span::new(20.0, 30.0),
            airspeed_offset_mps: Span::new(3.0, 4.0),
            bounds: MetricBounds::default(),
            env: EnvConfig {
                max_steps: 1500,
                ..EnvConfig::default()
            },
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.episodes == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig("episodes and horizon must be positive".into()));
        }
        if self.horizon <= self.bounds.dwell_steps {
            return Err(Error::InvalidConfig("horizon must exceed the dwell length".into()));
        }
        Ok(())
    }

    /// Environment configuration used during evaluation episodes.
    pub fn env_config(&self, severity: Severity) -> EnvConfig {
        EnvConfig {
            max_steps: self.horizon,
            severity,
            ..self.env.clone()
        }
    }
}

/// The seeded scenarios of one wind setting. Initial states span the full
/// sampling ranges; each setpoint sits a random offset away from the initial
/// value, clamped to the setpoint ranges.
pub fn generate_scenarios(cfg: &EvalConfig, severity: Severity, master_seed: u64) -> Vec<Scenario> {
    let env = cfg.env_config(severity);
    let stream = format!("battery/{}", severity.name());
    (0..cfg.episodes as u64)
        .map(|i| {
            let seed = child_seed(master_seed, &stream, i);
            let mut rng = substream(seed, "scenario");
            let wind = WindSetting::new(severity, &env.dryden, child_seed(seed, "wind", 0));
            let mut s = sample_scenario(&env, 1.0, wind, &mut rng);
            let mut offset = |span: &Span| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * span.sample(&mut rng)
            };
            let roll = s.initial.roll + offset(&cfg.angle_offset_deg).to_radians();
            let pitch = s.initial.pitch + offset(&cfg.angle_offset_deg).to_radians();
            let airspeed = s.initial.airspeed + offset(&cfg.airspeed_offset_mps);
            s.targets = env.targets.clamp(&Targets { roll, pitch, airspeed });
            s
        })
        .collect()
}

/// One row of a plot-ready trace. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub north: f64,
    pub east: f64,
    pub altitude: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p_deg_s: f64,
    pub q_deg_s: f64,
    pub r_deg_s: f64,
    pub airspeed: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub cmd_aileron: f64,
    pub cmd_elevator: f64,
    pub cmd_throttle: f64,
    pub aileron_deg: f64,
    pub elevator_deg: f64,
    pub throttle: f64,
    pub reward: f64,
    pub target_roll_deg: f64,
    pub target_pitch_deg: f64,
    pub target_airspeed: f64,
}

impl TraceRow {
    pub fn from_snapshot(s: &FlightSnapshot, reward: f64) -> Self {
        let (da, de) = s.actuators.virtual_deflections();
        let pos = s.state.position;
        let v = s.state.velocity;
        let w = s.state.angular_velocity.map(f64::to_degrees);
        Self {
            t: s.time,
            north: pos.x,
            east: pos.y,
            altitude: -pos.z,
            roll_deg: s.roll.to_degrees(),
            pitch_deg: s.pitch.to_degrees(),
            yaw_deg: s.yaw.to_degrees(),
            u: v.x,
            v: v.y,
            w: v.z,
            p_deg_s: w.x,
            q_deg_s: w.y,
            r_deg_s: w.z,
            airspeed: s.air.airspeed,
            alpha_deg: s.air.alpha.to_degrees(),
            beta_deg: s.air.beta.to_degrees(),
            cmd_aileron: s.action[0],
            cmd_elevator: s.action[1],
            cmd_throttle: s.action[2],
            aileron_deg: da.to_degrees(),
            elevator_deg: de.to_degrees(),
            throttle: s.actuators.throttle,
            reward,
            target_roll_deg: s.targets.roll.to_degrees(),
            target_pitch_deg: s.targets.pitch.to_degrees(),
            target_airspeed: s.targets.airspeed,
        }
    }
}

/// Runs `controller` from `scenario` until the environment ends the episode.
/// With `trace` set, every step (including the initial state) is recorded.
pub fn run_episode<C: Controller + ?Sized>(
    controller: &mut C,
    env: &mut UavEnv,
    scenario: &Scenario,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<EpisodeRecord> {
    controller.reset();
    let dt = env.config().dt;
    let mut obs = env.reset_to(scenario);
    let mut record = EpisodeRecord {
        dt,
        ..EpisodeRecord::default()
    };
    let mut snap = env.snapshot();
    record.errors.push(snap.errors());
    if let Some(t) = trace.as_deref_mut() {
        t.push(TraceRow::from_snapshot(&snap, 0.0));
    }
    loop {
        let action = controller.act(&snap, &obs, dt);
        let result = env.step(&action)?;
        record.actions.push(clip_action(&action));
        if result.terminated {
            record.diverged = true;
            break;
        }
        obs = env.observation();
        snap = env.snapshot();
        record.errors.push(snap.errors());
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRow::from_snapshot(&snap, result.reward));
        }
        if result.truncated {
            break;
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub index: usize,
    pub targets: Targets,
    pub report: MetricReport,
}

/// Aggregate of one battery. Time and overshoot means cover successful
/// episodes of the respective state only; `None` when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySummary {
    pub controller: String,
    pub severity: Severity,
    pub episodes: usize,
    /// Roll, pitch, airspeed.
    pub success_pct: [f64; 3],
    pub overall_success_pct: f64,
    pub rise_time_s: [Option<f64>; 3],
    pub settling_time_s: [Option<f64>; 3],
    pub overshoot_pct: [Option<f64>; 3],
    /// Mean over fully successful episodes.
    pub control_variation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryResult {
    pub summary: BatterySummary,
    pub episodes: Vec<EpisodeOutcome>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize(controller: &str, severity: Severity, episodes: &[EpisodeOutcome]) -> BatterySummary {
    let n = episodes.len().max(1) as f64;
    let pct = |f: &dyn Fn(&MetricReport) -> bool| {
        100.0 * episodes.iter().filter(|e| f(&e.report)).count() as f64 / n
    };
    let per_state = |s: usize, f: &dyn Fn(&StateMetrics) -> Option<f64>| {
        mean(episodes.iter().filter_map(|e| f(&e.report.states[s])))
    };
    BatterySummary {
        controller: controller.to_string(),
        severity,
        episodes: episodes.len(),
        success_pct: std::array::from_fn(|s| pct(&|r| r.states[s].success)),
        overall_success_pct: pct(&|r| r.success),
        rise_time_s: std::array::from_fn(|s| per_state(s, &|m| m.rise_time)),
        settling_time_s: std::array::from_fn(|s| per_state(s, &|m| m.settling_time)),
        overshoot_pct: std::array::from_fn(|s| per_state(s, &|m| m.overshoot_pct)),
        control_variation: mean(
            episodes
                .iter()
                .filter(|e| e.report.success)
                .map(|e| e.report.control_variation),
        ),
    }
}

/// Runs every scenario with a fresh controller from `make_controller`.
/// Scenarios run in parallel; results are ordered by scenario index.
pub fn run_battery<C, F>(
    name: &str,
    make_controller: F,
    airframe: &Arc<Airframe>,
    cfg: &EvalConfig,
    severity: Severity,
    scenarios: &[Scenario],
) -> Result<BatteryResult>
where
    C: Controller,
    F: Fn() -> C + Sync,
{
    let env_cfg = cfg.env_config(severity);
    let episodes = scenarios
        .par_iter()
        .enumerate()
        .map(|(index, scenario)| {
            let mut env = UavEnv::new(airframe.clone(), env_cfg.clone())?;
            let mut controller = make_controller();
            let record = run_episode(&mut controller, &mut env, scenario, None)?;
            Ok(EpisodeOutcome {
                index,
                targets: scenario.targets,
                report: compute_metrics(&record, &cfg.bounds),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatteryResult {
        summary: summarize(name, severity, &episodes),
        episodes,
    })
}

/// Hex SHA-256 of a configuration document.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct EpisodeCsvRow<'a> {
    seed: u64,
    config_hash: &'a str,
    controller: &'a str,
    severity: &'a str,
    index: usize,
    success: bool,
    roll_success: bool,
    pitch_success: bool,
    airspeed_success: bool,
    roll_rise_s: Option<f64>,
    pitch_rise_s: Option<f64>,
    airspeed_rise_s: Option<f64>,
    roll_settling_s: Option<f64>,
    pitch_settling_s: Option<f64>,
    airspeed_settling_s: Option<f64>,
    roll_overshoot_pct: Option<f64>,
    pitch_overshoot_pct: Option<f64>,
    airspeed_overshoot_pct: Option<f64>,
    control_variation: f64,
}

/// Writes per-episode metrics of one or more batteries as CSV.
pub fn write_episode_csv(path: &Path, results: &[BatteryResult], seed: u64, hash: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        for e in &r.episodes {
            let s = &e.report.states;
            w.serialize(EpisodeCsvRow {
                seed,
                config_hash: hash,
                controller: &r.summary.controller,
                severity: r.summary.severity.name(),
                index: e.index,
                success: e.report.success,
                roll_success: s[0].success,
                pitch_success: s[1].success,
                airspeed_success: s[2].success,
                roll_rise_s: s[0].rise_time,
                pitch_rise_s: s[1].rise_time,
                airspeed_rise_s: s[2].rise_time,
                roll_settling_s: s[0].settling_time,
                pitch_settling_s: s[1].settling_time,
                airspeed_settling_s: s[2].settling_time,
                roll_overshoot_pct: s[0].overshoot_pct,
                pitch_overshoot_pct: s[1].overshoot_pct,
                airspeed_overshoot_pct: s[2].overshoot_pct,
                control_variation: e.report.control_variation,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
struct SummaryCsvRow<'a> {
    seed: u64,
    config_hash: &'a str,
    controller: &'a str,
    severity: &'a str,
    episodes: usize,
    success_pct: f64,
    roll_success_pct: f64,
    pitch_success_pct: f64,
    airspeed_success_pct: f64,
    roll_rise_s: Option<f64>,
    pitch_rise_s: Option<f64>,
    airspeed_rise_s: Option<f64>,
    roll_settling_s: Option<f64>,
    pitch_settling_s: Option<f64>,
    airspeed_settling_s: Option<f64>,
    roll_overshoot_pct: Option<f64>,
    pitch_overshoot_pct: Option<f64>,
    airspeed_overshoot_pct: Option<f64>,
    control_variation: Option<f64>,
}

/// One row per battery, in the layout of a controller comparison table.
pub fn write_summary_csv(path: &Path, results: &[BatteryResult], seed: u64, hash: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        let s = &r.summary;
        w.serialize(SummaryCsvRow {
            seed,
            config_hash: hash,
            controller: &s.controller,
            severity: s.severity.name(),
            episodes: s.episodes,
            success_pct: s.overall_success_pct,
            roll_success_pct: s.success_pct[0],
            pitch_success_pct: s.success_pct[1],
            airspeed_success_pct: s.success_pct[2],
            roll_rise_s: s.rise_time_s[0],
            pitch_rise_s: s.rise_time_s[1],
            airspeed_rise_s: s.rise_time_s[2],
            roll_settling_s: s.settling_time_s[0],
            pitch_settling_s: s.settling_time_s[1],
            airspeed_settling_s: s.settling_time_s[2],
            roll_overshoot_pct: s.overshoot_pct[0],
            pitch_overshoot_pct: s.overshoot_pct[1],
            airspeed_overshoot_pct: s.overshoot_pct[2],
            control_variation: s.control_variation,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
struct PairedRow<'a> {
    seed: u64,
    config_hash: &'a str,
    a_controller: &'a str,
    b_controller: &'a str,
    severity: &'static str,
    index: usize,
    a_success: bool,
    b_success: bool,
    a_settling_roll_s: Option<f64>,
    b_settling_roll_s: Option<f64>,
    a_settling_pitch_s: Option<f64>,
    b_settling_pitch_s: Option<f64>,
    a_settling_airspeed_s: Option<f64>,
    b_settling_airspeed_s: Option<f64>,
    a_control_variation: f64,
    b_control_variation: f64,
}

/// Scenario-by-scenario comparison of two batteries run on the same seeds.
pub fn write_paired_csv(path: &Path, a: &BatteryResult, b: &BatteryResult, seed: u64, hash: &str) -> Result<()> {
    if a.episodes.len() != b.episodes.len() || a.summary.severity != b.summary.severity {
        return Err(Error::InvalidConfig("paired batteries must share their scenarios".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    for (ea, eb) in a.episodes.iter().zip(&b.episodes) {
        let (sa, sb) = (&ea.report.states, &eb.report.states);
        w.serialize(PairedRow {
            seed,
            config_hash: hash,
            a_controller: &a.summary.controller,
            b_controller: &b.summary.controller,
            severity: a.summary.severity.name(),
            index: ea.index,
            a_success: ea.report.success,
            b_success: eb.report.success,
            a_settling_roll_s: sa[0].settling_time,
            b_settling_roll_s: sb[0].settling_time,
            a_settling_pitch_s: sa[1].settling_time,
            b_settling_pitch_s: sb[1].settling_time,
            a_settling_airspeed_s: sa[2].settling_time,
            b_settling_airspeed_s: sb[2].settling_time,
            a_control_variation: ea.report.control_variation,
            b_control_variation: eb.report.control_variation,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes rows with `seed` and `config_hash` leading every record.
pub fn write_trace_csv(path: &Path, rows: &[TraceRow], seed: u64, hash: &str) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    let mut header = vec!["seed".to_string(), "config_hash".to_string()];
    header.extend(trace_columns());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![seed.to_string(), hash.to_string()];
        rec.extend(trace_values(r).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn trace_columns() -> Vec<String> {
    [
        "t", "north", "east", "altitude", "roll_deg", "pitch_deg", "yaw_deg", "u", "v", "w", "p_deg_s",
        "q_deg_s", "r_deg_s", "airspeed", "alpha_deg", "beta_deg", "cmd_aileron", "cmd_elevator",
        "cmd_throttle", "aileron_deg", "elevator_deg", "throttle", "reward", "target_roll_deg",
        "target_pitch_deg", "target_airspeed",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn trace_values(r: &TraceRow) -> [f64; 26] {
    [
        r.t,
        r.north,
        r.east,
        r.altitude,
        r.roll_deg,
        r.pitch_deg,
        r.yaw_deg,
        r.u,
        r.v,
        r.w,
        r.p_deg_s,
        r.q_deg_s,
        r.r_deg_s,
        r.airspeed,
        r.alpha_deg,
        r.beta_deg,
        r.cmd_aileron,
        r.cmd_elevator,
        r.cmd_throttle,
        r.aileron_deg,
        r.elevator_deg,
        r.throttle,
        r.reward,
        r.target_roll_deg,
        r.target_pitch_deg,
        r.target_airspeed,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_from(errors: Vec<[f64; 3]>, dt: f64) -> EpisodeRecord {
        let n = errors.len();
        EpisodeRecord {
            dt,
            errors,
            actions: vec![[0.1, -0.2, 0.3]; n],
            diverged: false,
        }
    }

    #[test]
    fn pinned_trace_is_trivial_success() {
        let r = compute_metrics(&record_from(vec![[0.0; 3]; 1500], 0.01), &MetricBounds::default());
        assert!(r.success);
        for s in r.states {
            assert_eq!(s.settling_time, Some(0.0));
            assert_eq!(s.overshoot_pct, Some(0.0));
            assert!(s.rise_degenerate);
        }
        assert_eq!(r.control_variation, 0.0);
    }

    #[test]
    fn exponential_decay_rise_time() {
        let dt = 1e-3;
        let errors: Vec<[f64; 3]> = (0..15_000)
            .map(|k| {
                let e = (-(k as f64) * dt).exp();
                [e, 0.5 * e, 3.0 * e]
            })
            .collect();
        let r = compute_metrics(&record_from(errors, dt), &MetricBounds::default());
        assert!(r.success);
        for s in r.states {
            assert!((s.rise_time.unwrap() - 9f64.ln()).abs() <= dt, "{:?}", s.rise_time);
            assert_eq!(s.overshoot_pct, Some(0.0));
        }
        // airspeed leaves the 2 m/s bound at e = 3 e^{-t} = 2
        let expected = (1.5f64).ln();
        assert!((r.states[2].settling_time.unwrap() - expected).abs() <= dt);
    }

    #[test]
    fn trailing_excursion_is_failure() {
        let mut errors = vec![[0.0; 3]; 1500];
        for e in errors.iter_mut().skip(1450) {
            e[1] = 0.2;
        }
        let r = compute_metrics(&record_from(errors, 0.01), &MetricBounds::default());
        assert!(!r.success && !r.states[1].success && r.states[0].success);
        assert_eq!(r.states[1].settling_time, None);
        assert_eq!(r.states[1].rise_time, None);
        assert_eq!(r.states[1].overshoot_pct, None);
    }

    #[test]
    fn short_final_dwell_is_failure() {
        let mut errors = vec![[0.0; 3]; 1000];
        errors[1000 - 100][2] = 5.0;
        let r = compute_metrics(&record_from(errors.clone(), 0.01), &MetricBounds::default());
        assert!(!r.states[2].success);
        errors[1000 - 101][2] = 5.0;
        errors[1000 - 100][2] = 0.0;
        let r = compute_metrics(&record_from(errors, 0.01), &MetricBounds::default());
        assert!(r.states[2].success);
        assert_eq!(r.states[2].settling_time, Some(9.0));
    }

    #[test]
    fn overshoot_measured_opposite_initial_error() {
        let mut errors = vec![[0.0; 3]; 500];
        errors[0][0] = 0.4;
        errors[1][0] = 0.2;
        errors[2][0] = -0.06;
        errors[3][0] = -0.02;
        let r = compute_metrics(&record_from(errors, 0.01), &MetricBounds::default());
        let o = r.states[0].overshoot_pct.unwrap();
        assert!((o - 15.0).abs() < 1e-9, "{o}");
        assert!((r.states[0].rise_time.unwrap() - 0.02).abs() < 1e-12);
    }

    #[test]
    fn control_variation_hand_case() {
        // one channel jumps by 2 once over one second
        let mut actions = vec![[0.0; 3]; 100];
        for a in actions.iter_mut().skip(50) {
            a[0] = 2.0;
        }
        assert!((control_variation(&actions, 0.01) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn diverged_episode_fails_every_state() {
        let mut rec = record_from(vec![[0.0; 3]; 300], 0.01);
        rec.diverged = true;
        let r = compute_metrics(&rec, &MetricBounds::default());
        assert!(!r.success && r.states.iter().all(|s| !s.success));
    }

    #[test]
    fn scenarios_are_reproducible_and_offset() {
        let cfg = EvalConfig::default();
        let a = generate_scenarios(&cfg, Severity::Moderate, 7);
        let b = generate_scenarios(&cfg, Severity::Moderate, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        let t = &cfg.env.targets;
        for s in &a {
            assert!(t.roll_deg.contains(s.targets.roll.to_degrees()));
            assert!(t.pitch_deg.contains(s.targets.pitch.to_degrees()));
            assert!(t.airspeed_mps.contains(s.targets.airspeed));
            let dv = (s.targets.airspeed - s.initial.airspeed).abs();
            let clamped = s.targets.airspeed == t.airspeed_mps.min || s.targets.airspeed == t.airspeed_mps.max;
            assert!(clamped || (3.0..=4.0).contains(&dv), "{dv}");
            assert_eq!(s.wind.severity, Severity::Moderate);
        }
        assert_ne!(a[0].wind.steady_wind, a[1].wind.steady_wind);
    }
}
