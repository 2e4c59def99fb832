//! Acceptance suite: one PASS/FAIL line per criterion. Runs to completion and
//! exits 0 whatever the verdicts, so a red criterion is reported rather than
//! hidden behind an aborted run.
//!
//! The RL criteria train three policies for the full budget, which takes
//! several minutes per seed. Setting `WINGCTL_SKIP_TRAINING` skips the
//! training and reports criteria 2 and 3 as failed; latency is then timed on
//! an untrained network of the same shape.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use wingctl_core::atmosphere::{DrydenGusts, DrydenConfig};
use wingctl_core::environment::OBS_LEN;
use wingctl_core::evaluation::{generate_scenarios, run_battery, write_episode_csv, write_summary_csv, BatteryResult};
use wingctl_core::neuralnet::{gaussian_log_prob, ForwardCache, OutputGrad};
use wingctl_core::ppo::{
    clipped_objective, compute_gae, surrogate_loss, train, write_training_log, CurriculumConfig, Sample,
};
use wingctl_core::rigid_body::integrate_step;
use wingctl_core::rng::substream;
use wingctl_core::{
    ActuatorState, Aircraft, Airframe, Checkpoint, EnvConfig, EvalConfig,
    FlightCondition, Network, NetworkSpec, PidController, PidGains, PpoConfig, RlController, Severity, SimState,
    Trainer, UavEnv, WindSample, WindSetting,
};

const SEED: u64 = 1;
const TRAIN_SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn report(id: usize, name: &str, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {id:>2}. {name}: {}", v.detail);
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Training setup shipped in `configs/train.toml`.
fn training_config() -> (EnvConfig, PpoConfig) {
    let path = repo_root().join("configs/train.toml");
    let text = std::fs::read_to_string(&path).expect("configs/train.toml is readable");
    let mut doc: toml::Table = toml::from_str(&text).expect("train.toml parses");
    let env: EnvConfig = doc
        .remove("env")
        .map(|v| v.try_into().expect("[env] is valid"))
        .unwrap_or_default();
    let ppo: PpoConfig = doc
        .remove("ppo")
        .map(|v| v.try_into().expect("[ppo] is valid"))
        .unwrap_or_default();
    (env, ppo)
}

fn pid_battery(airframe: &std::sync::Arc<Airframe>, cfg: &EvalConfig, severity: Severity, seed: u64) -> BatteryResult {
    let pid = PidController::new(PidGains::default(), airframe.deflection_limit());
    let scenarios = generate_scenarios(cfg, severity, seed);
    run_battery("pid", || pid.clone(), airframe, cfg, severity, &scenarios).unwrap()
}

fn rl_battery(ck: &Checkpoint, airframe: &std::sync::Arc<Airframe>, cfg: &EvalConfig, severity: Severity) -> BatteryResult {
    let rl = RlController::new(ck.clone()).unwrap();
    let scenarios = generate_scenarios(cfg, severity, SEED);
    run_battery("rl", || rl.clone(), airframe, cfg, severity, &scenarios).unwrap()
}

fn criterion_pid() -> Verdict {
    let airframe = Airframe::x8();
    let cfg = EvalConfig::default();
    let start = Instant::now();
    let r = pid_battery(&airframe, &cfg, Severity::None, SEED);
    let secs = start.elapsed().as_secs_f64();
    let s = &r.summary;
    let cv = s.control_variation;
    let pass = s.overall_success_pct >= 90.0 && cv.is_some_and(|c| c <= 0.5) && secs <= 300.0;
    verdict(
        pass,
        format!(
            "overall success {:.0}% (need >= 90), roll/pitch/airspeed {:.0}/{:.0}/{:.0}%, control variation {} (need <= 0.5), {} episodes in {secs:.1}s (need <= 300)",
            s.overall_success_pct,
            s.success_pct[0],
            s.success_pct[1],
            s.success_pct[2],
            cv.map_or("n/a".into(), |c| format!("{c:.3}")),
            s.episodes
        ),
    )
}

struct TrainedSeed {
    seed: u64,
    checkpoint: Checkpoint,
    calm_success: f64,
    secs: f64,
}

fn train_seeds() -> Vec<TrainedSeed> {
    let (env_cfg, ppo) = training_config();
    let airframe = Airframe::x8();
    let eval = EvalConfig::default();
    let out_dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&out_dir).unwrap();
    TRAIN_SEEDS
        .iter()
        .map(|&seed| {
            let start = Instant::now();
            let mut trainer =
                Trainer::new(ppo.clone(), seed, String::new(), |_| UavEnv::new(airframe.clone(), env_cfg.clone()))
                    .unwrap();
            let outcome = train(&mut trainer, |_, _| Ok(())).unwrap();
            let secs = start.elapsed().as_secs_f64();
            let path = out_dir.join(format!("policy_seed{seed}.json"));
            outcome.checkpoint.save(&path).unwrap();
            let r = rl_battery(&outcome.checkpoint, &airframe, &eval, Severity::None);
            println!(
                "       seed {seed}: {} steps in {secs:.0}s, final difficulty {:.1}, calm success {:.0}%, policy at {}",
                outcome.checkpoint.steps,
                outcome.checkpoint.difficulty,
                r.summary.overall_success_pct,
                path.display()
            );
            TrainedSeed {
                seed,
                checkpoint: outcome.checkpoint,
                calm_success: r.summary.overall_success_pct,
                secs,
            }
        })
        .collect()
}

fn criterion_training(runs: &[TrainedSeed]) -> Verdict {
    let best = runs.iter().map(|r| r.calm_success).fold(f64::NEG_INFINITY, f64::max);
    let mean = runs.iter().map(|r| r.calm_success).sum::<f64>() / runs.len() as f64;
    let slowest = runs.iter().map(|r| r.secs).fold(0.0, f64::max);
    let steps_ok = runs.iter().all(|r| r.checkpoint.steps >= 2_000_000);
    verdict(
        best >= 90.0 && slowest <= 3.0 * 3600.0 && steps_ok,
        format!(
            "best seed {best:.0}% (need >= 90), seed mean {mean:.0}%, slowest seed {slowest:.0}s (need <= 10800)"
        ),
    )
}

fn best_run(runs: &[TrainedSeed]) -> &TrainedSeed {
    runs.iter()
        .max_by(|a, b| a.calm_success.total_cmp(&b.calm_success).then(b.seed.cmp(&a.seed)))
        .unwrap()
}

fn criterion_generalization(runs: &[TrainedSeed]) -> Verdict {
    let best = best_run(runs);
    let r = rl_battery(&best.checkpoint, &Airframe::x8(), &EvalConfig::default(), Severity::Moderate);
    verdict(
        r.summary.overall_success_pct >= 70.0,
        format!(
            "seed {} policy under moderate turbulence: {:.0}% (need >= 70)",
            best.seed, r.summary.overall_success_pct
        ),
    )
}

fn criterion_latency(ck: &Checkpoint) -> Verdict {
    let rl = RlController::new(ck.clone()).unwrap();
    let mut rng = substream(SEED, "latency");
    let inputs: Vec<Vec<f64>> = (0..1000).map(|_| (0..OBS_LEN).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    for x in &inputs {
        std::hint::black_box(rl.action(x).unwrap());
    }
    let mut times: Vec<f64> = Vec::with_capacity(10_000);
    for i in 0..10_000 {
        let x = &inputs[i % inputs.len()];
        let t = Instant::now();
        std::hint::black_box(rl.action(std::hint::black_box(x)).unwrap());
        times.push(t.elapsed().as_secs_f64() * 1e6);
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    let p99 = times[times.len() * 99 / 100];
    verdict(
        median <= 1000.0,
        format!("median {median:.1} µs, p99 {p99:.1} µs per action (need <= 1000 µs)"),
    )
}

/// Five-point central difference of `f` in parameter `i`. Its truncation
/// error is O(h⁴), so a step of 1e-3 keeps both truncation and roundoff far
/// below the tolerance even for gradients near 1e-6.
fn central_difference(net: &mut Network, i: usize, h: f64, f: impl Fn(&Network) -> f64) -> f64 {
    let orig = net.params[i];
    let mut at = |x: f64| {
        net.params[i] = orig + x;
        f(net)
    };
    let d = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
    net.params[i] = orig;
    d
}

/// Analytic gradients against central differences. Each draw is a fresh
/// network, input, action and loss weighting; the loss is the full PPO
/// objective on a single sample so every path (mean, log-std, value) counts.
fn criterion_gradients() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let eps = 1e-3;
    for draw in 0..100u64 {
        let mut rng = substream(draw, "gradient-draw");
        let spec = NetworkSpec {
            history: 5,
            components: 12,
            filters: 3,
            hidden: vec![16, 16],
            action_dim: 3,
            initial_log_std: 0.0,
        };
        let mut net = Network::new(spec, &mut substream(draw, "gradient-net")).unwrap();
        // larger head weights so the mean path carries non-trivial gradient
        for p in net.params.iter_mut() {
            *p *= 1.0 + rng.random_range(0.0..2.0);
        }
        let range = net.layout().log_std();
        for i in range {
            net.params[i] = rng.random_range(-1.0..0.5);
        }
        let obs: Vec<f64> = (0..net.spec().input_len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let out = net.forward(&obs).unwrap();
        let action: Vec<f64> = out.mean.iter().map(|m| m + rng.random_range(-0.5..0.5)).collect();
        let old = gaussian_log_prob(&out.mean, &out.log_std, &action) + rng.random_range(-0.05..0.05);
        let sample = [Sample {
            obs: &obs,
            action: &action,
            old_log_prob: old,
            advantage: rng.random_range(-2.0..2.0),
            ret: rng.random_range(-2.0..2.0),
        }];
        // a wide clip keeps the ratio away from the kinks of the surrogate
        let (clip, vc, ec) = (0.5, 0.5, 0.01);
        let (_, grad) = surrogate_loss(&net, &sample, clip, vc, ec);
        let loss = |n: &Network| surrogate_loss(n, &sample, clip, vc, ec).0.total(vc, ec);
        let picks: Vec<usize> = (0..20).map(|_| rng.random_range(0..net.parameter_count())).collect();
        for i in picks {
            let fd = central_difference(&mut net, i, eps, loss);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(err);
            checked += 1;
        }
        // and the raw output-weighted network gradient over every parameter
        let w = OutputGrad {
            mean: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            log_std: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            value: rng.random_range(-1.0..1.0),
        };
        let scalar = |n: &Network| {
            let o = n.forward(&obs).unwrap();
            o.mean.iter().zip(&w.mean).map(|(a, b)| a * b).sum::<f64>()
                + o.log_std.iter().zip(&w.log_std).map(|(a, b)| a * b).sum::<f64>()
                + w.value * o.value
        };
        let mut cache = ForwardCache::default();
        net.forward_cached(&obs, &mut cache).unwrap();
        let mut g = vec![0.0; net.parameter_count()];
        net.backward(&cache, &w, &mut g);
        for i in (draw as usize % 13..net.parameter_count()).step_by(13) {
            let fd = central_difference(&mut net, i, eps, scalar);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(err);
            checked += 1;
        }
    }
    verdict(
        worst < 1e-4,
        format!("100 draws, {checked} parameter checks, worst relative error {worst:.2e} (need < 1e-4)"),
    )
}

/// Advantage by explicit sums of discounted TD residuals up to the episode end.
fn brute_force_gae(r: &[f64], v: &[f64], dones: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in t..n {
                let next = if dones[k] {
                    0.0
                } else if k + 1 < n {
                    v[k + 1]
                } else {
                    last
                };
                let delta = r[k] + gamma * next - v[k];
                total += (gamma * lambda).powi((k - t) as i32) * delta;
                if dones[k] {
                    break;
                }
            }
            total
        })
        .collect()
}

fn criterion_gae() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut worst_mc: f64 = 0.0;
    let mut rng = substream(SEED, "gae");
    for case in 0..2000 {
        let r: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let last = rng.random_range(-1.0..1.0);
        let dones: Vec<bool> = (0..10).map(|_| rng.random_bool(0.15)).collect();
        let (gamma, lambda) = if case % 2 == 0 {
            (1.0, 1.0)
        } else {
            (rng.random_range(0.5..1.0), rng.random_range(0.0..1.0))
        };
        let (adv, ret) = compute_gae(&r, &v, &dones, last, gamma, lambda);
        let expect = brute_force_gae(&r, &v, &dones, last, gamma, lambda);
        for t in 0..10 {
            worst = worst.max((adv[t] - expect[t]).abs());
            worst = worst.max((ret[t] - (expect[t] + v[t])).abs());
        }
        if gamma == 1.0 {
            // plain reward-to-go minus baseline
            for t in 0..10 {
                let mut to_go = 0.0;
                let mut k = t;
                loop {
                    to_go += r[k];
                    if dones[k] {
                        break;
                    }
                    k += 1;
                    if k == 10 {
                        to_go += last;
                        break;
                    }
                }
                worst_mc = worst_mc.max((adv[t] - (to_go - v[t])).abs());
            }
        }
    }
    let w = worst.max(worst_mc);
    verdict(
        w <= 1e-10,
        format!("2000 random 10-step rollouts (half with γ = λ = 1), worst deviation {w:.1e} (need <= 1e-10)"),
    )
}

fn rk4_order() -> f64 {
    let airframe = Airframe::x8();
    let start = FlightCondition {
        roll: 0.4,
        pitch: 0.1,
        yaw: 0.2,
        airspeed: 20.0,
        alpha: 0.08,
        beta: 0.05,
        rates: nalgebra::Vector3::new(0.6, -0.3, 0.2),
        altitude: 1000.0,
    }
    .to_state();
    let ac = Aircraft::new(airframe.clone(), start, ActuatorState::default());
    let wind = WindSample::default();
    let run = |dt: f64| -> SimState {
        let mut s = start;
        let n = (1.0 / dt).round() as usize;
        for _ in 0..n {
            s = integrate_step(&s, |x| ac.wrench_at(x, &wind, 0.05, -0.1, 0.6), &airframe.inertial, dt).unwrap();
        }
        s
    };
    let reference = run(1.0 / 1280.0);
    let err = |s: &SimState| {
        let dq = (s.attitude.coords - reference.attitude.coords).amax();
        (s.position - reference.position)
            .amax()
            .max((s.velocity - reference.velocity).amax())
            .max((s.angular_velocity - reference.angular_velocity).amax())
            .max(dq)
    };
    let errors: Vec<f64> = [1.0 / 20.0, 1.0 / 40.0, 1.0 / 80.0].iter().map(|&dt| err(&run(dt))).collect();
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min)
}

fn criterion_physics() -> Verdict {
    let airframe = Airframe::x8();
    let act = airframe.config.actuators.clone();
    let lim = act.deflection_limit_rad;
    let rate_lim = act.rate_limit_rad_s;
    let mut worst_norm: f64 = 0.0;
    let (mut actuator_violations, mut reward_violations) = (0usize, 0usize);
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut rng = substream(SEED, "physics");
    let mut steps = 0usize;
    let per_setting = 250_000;
    for severity in Severity::ALL {
        let cfg = EnvConfig {
            severity,
            ..EnvConfig::default()
        };
        let mut env = UavEnv::new(airframe.clone(), cfg).unwrap();
        let mut episode = 0u64;
        env.reset(episode);
        for _ in 0..per_setting {
            // commands beyond the action range exercise the clip as well
            let a = [
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            ];
            let r = env.step(&a).unwrap();
            steps += 1;
            let snap = env.snapshot();
            worst_norm = worst_norm.max((snap.state.attitude.norm() - 1.0).abs());
            for servo in [snap.actuators.right, snap.actuators.left] {
                if servo.deflection.abs() > lim + 1e-12 || servo.rate.abs() > rate_lim + 1e-9 {
                    actuator_violations += 1;
                }
            }
            if !(0.0..=1.0).contains(&snap.actuators.throttle) {
                actuator_violations += 1;
            }
            rmin = rmin.min(r.reward);
            rmax = rmax.max(r.reward);
            if !(-1.0..=0.0).contains(&r.reward) {
                reward_violations += 1;
            }
            if r.done() {
                episode += 1;
                env.reset(episode);
            }
        }
    }
    let order = rk4_order();
    let pass = worst_norm <= 1e-9 && actuator_violations == 0 && reward_violations == 0 && order >= 3.5;
    verdict(
        pass,
        format!(
            "{steps} random-command steps: max |‖q‖ − 1| {worst_norm:.1e} (need <= 1e-9), {actuator_violations} actuator limit violations, reward in [{rmin:.4}, {rmax:.4}] with {reward_violations} outside [−1, 0]; RK4 observed order {order:.2} (need >= 3.5)"
        ),
    )
}

fn criterion_dryden() -> Verdict {
    let dryden = DrydenConfig::default();
    let (airspeed, dt, n) = (18.0, 0.05, 1_000_000);
    let mut worst: f64 = 0.0;
    for severity in [Severity::Light, Severity::Moderate, Severity::Severe] {
        let setting = WindSetting::new(severity, &dryden, SEED);
        let sigma = setting.intensities;
        let mut g = DrydenGusts::new(setting, 2.1);
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let (lin, _) = g.sample(airspeed, dt);
            for i in 0..3 {
                sum[i] += lin[i];
                sq[i] += lin[i] * lin[i];
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            worst = worst.max((var / (sigma[i] * sigma[i]) - 1.0).abs());
        }
    }
    let mut calm = DrydenGusts::new(WindSetting::new(Severity::None, &dryden, SEED), 2.1);
    let calm_zero = (0..100_000).all(|_| {
        let (lin, rot) = calm.sample(airspeed, 0.01);
        lin.iter().chain(rot.iter()).all(|&x| x == 0.0)
    });
    verdict(
        worst <= 0.10 && calm_zero,
        format!(
            "10^6 samples per severity at {airspeed} m/s: worst relative variance error {:.1}% (need <= 10%); zero severity identically zero: {calm_zero}",
            100.0 * worst
        ),
    )
}

fn criterion_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let airframe = Airframe::x8();
    let cfg = EvalConfig {
        episodes: 20,
        ..EvalConfig::default()
    };
    let tables: Vec<(String, String)> = (0..2)
        .map(|k| {
            let r = pid_battery(&airframe, &cfg, Severity::Moderate, 11);
            let (a, b) = (dir.path().join(format!("s{k}.csv")), dir.path().join(format!("e{k}.csv")));
            write_summary_csv(&a, std::slice::from_ref(&r), 11, "h").unwrap();
            write_episode_csv(&b, std::slice::from_ref(&r), 11, "h").unwrap();
            (std::fs::read_to_string(a).unwrap(), std::fs::read_to_string(b).unwrap())
        })
        .collect();
    let tables_equal = tables[0] == tables[1];

    let ppo = PpoConfig {
        actors: 1,
        steps_per_actor: 256,
        total_steps: 20_480,
        curriculum: CurriculumConfig {
            window: 5,
            ..CurriculumConfig::default()
        },
        ..PpoConfig::default()
    };
    let logs: Vec<String> = (0..2)
        .map(|k| {
            let mut trainer = Trainer::new(ppo.clone(), 5, "h".into(), |_| {
                UavEnv::new(airframe.clone(), EnvConfig::default())
            })
            .unwrap();
            let outcome = train(&mut trainer, |_, _| Ok(())).unwrap();
            let path = dir.path().join(format!("log{k}.csv"));
            write_training_log(&path, &outcome.log, 5, "h").unwrap();
            std::fs::read_to_string(path).unwrap()
        })
        .collect();
    let logs_equal = logs[0] == logs[1];
    verdict(
        tables_equal && logs_equal,
        format!(
            "evaluation tables identical: {tables_equal}; single-actor training logs identical: {logs_equal} ({} rows)",
            logs[0].lines().count() - 1
        ),
    )
}

fn criterion_surrogate() -> Verdict {
    let cases = [
        (1.3, 1.0, 1.2),
        (0.5, -1.0, -0.8),
        (1.0, -2.0, -2.0),
        (1.0, 0.3, 0.3),
        (1.0, 5.0, 5.0),
    ];
    let exact = cases.iter().all(|&(r, a, want)| clipped_objective(r, a, 0.2).0 == want);
    verdict(
        exact,
        "r = 1.3, Â = 1 → 1.2; r = 0.5, Â = −1 → −0.8; r = 1 → Â for Â ∈ {−2, 0.3, 5}",
    )
}

fn main() {
    let t0 = Instant::now();
    let mut rows: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut run = |id, name, f: &dyn Fn() -> Verdict| {
        let v = f();
        report(id, name, &v);
        rows.push((id, name, v));
    };
    run(1, "PID baseline, calm battery", &criterion_pid);
    run(5, "gradient oracle", &criterion_gradients);
    run(6, "GAE oracle", &criterion_gae);
    run(7, "physics invariants", &criterion_physics);
    run(8, "Dryden variance", &criterion_dryden);
    run(9, "determinism", &criterion_determinism);
    run(10, "clipped-surrogate hand cases", &criterion_surrogate);

    if std::env::var_os("WINGCTL_SKIP_TRAINING").is_some() {
        let skipped = || verdict(false, "not run (WINGCTL_SKIP_TRAINING is set)");
        run(2, "RL training, 3 seeds at 2e6 steps", &skipped);
        run(3, "generalization to moderate turbulence", &skipped);
        let (env_cfg, ppo) = training_config();
        let trainer = Trainer::new(ppo, 0, String::new(), |_| UavEnv::new(Airframe::x8(), env_cfg.clone())).unwrap();
        let ck = trainer.checkpoint();
        run(4, "inference latency (untrained network)", &|| criterion_latency(&ck));
    } else {
        let trained = train_seeds();
        let best = best_run(&trained);
        run(2, "RL training, 3 seeds at 2e6 steps", &|| criterion_training(&trained));
        run(3, "generalization to moderate turbulence", &|| criterion_generalization(&trained));
        run(4, "inference latency", &|| criterion_latency(&best.checkpoint));
    }

    rows.sort_by_key(|r| r.0);
    println!("\nsummary ({:.0}s):", t0.elapsed().as_secs_f64());
    for (id, name, v) in &rows {
        report(*id, name, v);
    }
    let passed = rows.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} criteria pass", rows.len());
}
