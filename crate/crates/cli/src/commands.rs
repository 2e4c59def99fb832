use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use wingctl_core::evaluation::{
    generate_scenarios, run_battery, write_episode_csv, write_paired_csv, write_summary_csv, write_trace_csv,
    BatteryResult, BatterySummary, Controller, TraceRow,
};
use wingctl_core::ppo::{train as run_training, write_training_log};
use wingctl_core::{
    trim_level_flight, Checkpoint, Error, FlightCondition, PidController, PidGains, RlController, Scenario,
    Targets, Trainer, UavEnv, WindSetting,
};

use crate::config::Loaded;
use crate::{CliError, ControllerKind, Settings};

pub struct Context {
    pub loaded: Loaded,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn pid_gains(&self, file: Option<&Path>) -> Result<PidGains, CliError> {
        match file {
            None => Ok(self.loaded.run.pid.clone()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::input(format!("cannot read PID gains {}: {e}", path.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::input(format!("cannot parse PID gains {}: {e}", path.display())))
            }
        }
    }

    fn pid(&self, file: Option<&Path>) -> Result<PidController, CliError> {
        Ok(PidController::new(self.pid_gains(file)?, self.loaded.airframe.deflection_limit()))
    }
}

fn load_policy(path: &Path) -> Result<RlController, CliError> {
    if !path.exists() {
        return Err(CliError::input(format!("checkpoint not found: {}", path.display())));
    }
    let ck = Checkpoint::load(path).map_err(|e| CliError::input(e.to_string()))?;
    RlController::new(ck).map_err(|e| CliError::input(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::from(Error::from(e)))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e).into())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    seed: u64,
    config_hash: &'a str,
    steps: u64,
    updates: usize,
    final_difficulty: f64,
    final_mean_episode_reward: Option<f64>,
    wall_time_s: f64,
    aborted: Option<String>,
}

pub fn train(ctx: &Context, budget: Option<u64>) -> Result<(), CliError> {
    let run = &ctx.loaded.run;
    let mut cfg = run.ppo.clone();
    if let Some(b) = budget {
        cfg.total_steps = b;
    }
    let airframe = ctx.loaded.airframe.clone();
    let env_cfg = run.env.clone();
    let mut trainer = Trainer::new(cfg, ctx.seed, ctx.loaded.hash.clone(), |_| {
        UavEnv::new(airframe.clone(), env_cfg.clone())
    })?;
    let ck_dir = ctx.path("checkpoints");
    std::fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;
    let every = run.train.checkpoint_every;
    let total = trainer.config().num_updates();
    let start = Instant::now();
    log::info!(
        "training {} updates of {} steps, seed {}, config {}",
        total,
        trainer.config().batch_size(),
        ctx.seed,
        &ctx.loaded.hash[..12]
    );
    let outcome = run_training(&mut trainer, |t, s| {
        if s.update % 10 == 0 || s.update == total {
            log::info!(
                "update {}/{} steps {} difficulty {:.2} mean reward {:.1} entropy {:.3}",
                s.update,
                total,
                s.steps,
                s.difficulty,
                s.mean_episode_reward,
                s.entropy
            );
        }
        if every > 0 && s.update % every == 0 {
            t.checkpoint().save(ck_dir.join(format!("update_{}.json", s.update)))?;
        }
        Ok(())
    })?;
    let ck = &outcome.checkpoint;
    ck.save(ctx.path("policy.json"))?;
    write_training_log(ctx.path("training_log.csv"), &outcome.log, ctx.seed, &ctx.loaded.hash)?;
    write_json(
        &ctx.path("summary.json"),
        &TrainSummary {
            seed: ctx.seed,
            config_hash: &ctx.loaded.hash,
            steps: ck.steps,
            updates: ck.updates,
            final_difficulty: ck.difficulty,
            final_mean_episode_reward: outcome.log.last().map(|s| s.mean_episode_reward),
            wall_time_s: start.elapsed().as_secs_f64(),
            aborted: outcome.aborted.clone(),
        },
    )?;
    match outcome.aborted {
        Some(reason) => Err(CliError::diverged(format!(
            "training stopped after {} updates: {reason}; last good policy written to {}",
            ck.updates,
            ctx.path("policy.json").display()
        ))),
        None => {
            log::info!("wrote {}", ctx.path("policy.json").display());
            Ok(())
        }
    }
}

fn battery(ctx: &Context, kind: ControllerKind, rl: Option<&RlController>, pid: &PidController, settings: Settings) -> Result<Vec<BatteryResult>, CliError> {
    let cfg = &ctx.loaded.run.evaluation;
    let mut results = Vec::new();
    for severity in settings.severities() {
        let scenarios = generate_scenarios(cfg, severity, ctx.seed);
        let start = Instant::now();
        let r = match kind {
            ControllerKind::Rl => {
                let rl = rl.expect("RL battery needs a policy");
                run_battery("rl", || rl.clone(), &ctx.loaded.airframe, cfg, severity, &scenarios)?
            }
            ControllerKind::Pid => {
                run_battery("pid", || pid.clone(), &ctx.loaded.airframe, cfg, severity, &scenarios)?
            }
        };
        log::info!(
            "{} / {}: {:.0}% success in {:.1}s",
            r.summary.controller,
            severity.name(),
            r.summary.overall_success_pct,
            start.elapsed().as_secs_f64()
        );
        results.push(r);
    }
    Ok(results)
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.digits$}"))
}

fn print_table(results: &[BatteryResult]) {
    println!(
        "{:<6} {:<9} {:>8} {:>17} {:>17} {:>17} {:>17} {:>10}",
        "ctrl", "setting", "success", "success r/p/v %", "rise r/p/v s", "settle r/p/v s", "overshoot r/p/v %", "ctrl var"
    );
    for r in results {
        let s: &BatterySummary = &r.summary;
        let triple = |x: [Option<f64>; 3], d: usize| {
            format!("{}/{}/{}", fmt_opt(x[0], d), fmt_opt(x[1], d), fmt_opt(x[2], d))
        };
        println!(
            "{:<6} {:<9} {:>7.0}% {:>17} {:>17} {:>17} {:>17} {:>10}",
            s.controller,
            s.severity.name(),
            s.overall_success_pct,
            triple(s.success_pct.map(Some), 0),
            triple(s.rise_time_s, 2),
            triple(s.settling_time_s, 2),
            triple(s.overshoot_pct, 0),
            fmt_opt(s.control_variation, 3),
        );
    }
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    seed: u64,
    config_hash: &'a str,
    checkpoint: Option<String>,
    checkpoint_config_hash: Option<&'a str>,
    batteries: Vec<&'a BatterySummary>,
}

fn write_eval_outputs(ctx: &Context, results: &[BatteryResult], rl: Option<(&Path, &RlController)>) -> Result<(), CliError> {
    let hash = &ctx.loaded.hash;
    write_summary_csv(&ctx.path("summary.csv"), results, ctx.seed, hash)?;
    write_episode_csv(&ctx.path("episodes.csv"), results, ctx.seed, hash)?;
    write_json(
        &ctx.path("summary.json"),
        &EvalSummary {
            seed: ctx.seed,
            config_hash: hash,
            checkpoint: rl.map(|(p, _)| p.display().to_string()),
            checkpoint_config_hash: rl.map(|(_, c)| c.checkpoint().config_hash.as_str()),
            batteries: results.iter().map(|r| &r.summary).collect(),
        },
    )?;
    print_table(results);
    Ok(())
}

pub fn evaluate(
    ctx: &Context,
    kind: ControllerKind,
    checkpoint: Option<&Path>,
    pid_file: Option<&Path>,
    settings: Settings,
) -> Result<(), CliError> {
    let pid = ctx.pid(pid_file)?;
    let rl = match (kind, checkpoint) {
        (ControllerKind::Rl, None) => return Err(CliError::input("the RL controller needs --checkpoint")),
        (ControllerKind::Rl, Some(p)) => Some((p, load_policy(p)?)),
        (ControllerKind::Pid, _) => None,
    };
    let results = battery(ctx, kind, rl.as_ref().map(|(_, c)| c), &pid, settings)?;
    write_eval_outputs(ctx, &results, rl.as_ref().map(|(p, c)| (*p, c)))
}

pub fn compare(ctx: &Context, checkpoint: &Path, pid_file: Option<&Path>, settings: Settings) -> Result<(), CliError> {
    let pid = ctx.pid(pid_file)?;
    let rl = load_policy(checkpoint)?;
    let rl_results = battery(ctx, ControllerKind::Rl, Some(&rl), &pid, settings)?;
    let pid_results = battery(ctx, ControllerKind::Pid, None, &pid, settings)?;
    for (a, b) in rl_results.iter().zip(&pid_results) {
        let name = format!("paired_{}.csv", a.summary.severity.name());
        write_paired_csv(&ctx.path(&name), a, b, ctx.seed, &ctx.loaded.hash)?;
    }
    let all: Vec<BatteryResult> = rl_results.into_iter().chain(pid_results).collect();
    write_eval_outputs(ctx, &all, Some((checkpoint, &rl)))
}

/// One setpoint change of a simulation schedule.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct ScheduleRow {
    pub time_s: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub airspeed_mps: f64,
}

pub fn read_schedule(path: &Path) -> Result<Vec<ScheduleRow>, CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::input(format!("cannot read schedule {}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(&e))?;
    let mut rows: Vec<ScheduleRow> = reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| bad(&e))?;
    if rows
        .iter()
        .any(|r| ![r.time_s, r.roll_deg, r.pitch_deg, r.airspeed_mps].iter().all(|v| v.is_finite()))
    {
        return Err(bad(&"non-finite value"));
    }
    rows.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    Ok(rows)
}

pub fn simulate(
    ctx: &Context,
    kind: ControllerKind,
    checkpoint: Option<&Path>,
    pid_file: Option<&Path>,
    schedule: Option<&Path>,
) -> Result<(), CliError> {
    let run = &ctx.loaded.run;
    let sim = &run.simulate;
    let mut controller: Box<dyn Controller> = match (kind, checkpoint) {
        (ControllerKind::Rl, None) => return Err(CliError::input("the RL controller needs --checkpoint")),
        (ControllerKind::Rl, Some(p)) => Box::new(load_policy(p)?),
        (ControllerKind::Pid, _) => Box::new(ctx.pid(pid_file)?),
    };
    let schedule = match schedule {
        Some(p) => read_schedule(p)?,
        None => Vec::new(),
    };
    let ranges = &run.env.targets;
    for row in &schedule {
        if !(ranges.roll_deg.contains(row.roll_deg)
            && ranges.pitch_deg.contains(row.pitch_deg)
            && ranges.airspeed_mps.contains(row.airspeed_mps))
        {
            log::warn!(
                "setpoint at t = {} s ({}°, {}°, {} m/s) lies outside the trained target ranges",
                row.time_s,
                row.roll_deg,
                row.pitch_deg,
                row.airspeed_mps
            );
        }
    }

    let trim = trim_level_flight(&ctx.loaded.airframe, sim.airspeed_mps)?;
    let dt = run.env.dt;
    let steps = (sim.duration_s / dt).round() as usize;
    if steps == 0 {
        return Err(CliError::input("simulate.duration_s must cover at least one step"));
    }
    let mut env_cfg = run.env.clone();
    env_cfg.max_steps = steps;
    env_cfg.severity = sim.severity;
    // envelope constraints shape training only
    env_cfg.constraints.enabled = false;
    let mut env = UavEnv::new(ctx.loaded.airframe.clone(), env_cfg.clone())?;
    let to_targets = |r: &ScheduleRow| Targets {
        roll: r.roll_deg.to_radians(),
        pitch: r.pitch_deg.to_radians(),
        airspeed: r.airspeed_mps,
    };
    // rows due at the first step set the initial targets; later ones switch in flight
    let mut next = 0;
    let mut targets = Targets {
        roll: 0.0,
        pitch: trim.alpha,
        airspeed: sim.airspeed_mps,
    };
    while next < schedule.len() && schedule[next].time_s <= 0.5 * dt {
        targets = to_targets(&schedule[next]);
        next += 1;
    }
    let scenario = Scenario {
        initial: FlightCondition {
            roll: 0.0,
            pitch: trim.alpha,
            yaw: 0.0,
            airspeed: sim.airspeed_mps,
            alpha: trim.alpha,
            beta: 0.0,
            rates: Default::default(),
            altitude: env_cfg.initial_altitude_m,
        },
        targets,
        wind: WindSetting::new(sim.severity, &env_cfg.dryden, ctx.seed),
    };

    controller.reset();
    let mut obs = env.reset_to(&scenario);
    let mut rows = vec![TraceRow::from_snapshot(&env.snapshot(), 0.0)];
    let mut failed = false;
    loop {
        let snap = env.snapshot();
        let action = controller.act(&snap, &obs, dt);
        let result = env.step(&action)?;
        if result.terminated {
            failed = true;
            break;
        }
        let t = env.steps() as f64 * dt;
        while next < schedule.len() && schedule[next].time_s <= t + 0.5 * dt {
            env.set_targets(to_targets(&schedule[next]));
            next += 1;
        }
        obs = env.observation();
        rows.push(TraceRow::from_snapshot(&env.snapshot(), result.reward));
        if result.truncated {
            break;
        }
    }
    let path = ctx.path("trace.csv");
    write_trace_csv(&path, &rows, ctx.seed, &ctx.loaded.hash)?;
    if failed {
        log::warn!("flight diverged after {} steps", rows.len() - 1);
    }
    log::info!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}
