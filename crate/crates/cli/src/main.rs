//! `wingctl`: train, evaluate and fly attitude controllers for a simulated
//! flying wing.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    /// Bad or missing input file: exit code 2.
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    /// Training stopped on a non-finite value: exit code 3.
    pub fn diverged(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<wingctl_core::Error> for CliError {
    fn from(e: wingctl_core::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "wingctl", version, about = "Attitude control for a simulated flying-wing UAV")]
struct Cli {
    /// Run configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Airframe file, overriding the one named in the configuration.
    #[arg(long, global = true)]
    airframe: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy with PPO.
    Train {
        /// Environment steps, overriding the configured budget.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Run the evaluation battery for one controller.
    Evaluate {
        #[arg(long, value_enum, default_value_t = ControllerKind::Rl)]
        controller: ControllerKind,
        /// Policy file written by `train` (required for the RL controller).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// PID gains file (TOML), overriding the configured gains.
        #[arg(long)]
        pid: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Settings::None)]
        settings: Settings,
    },
    /// Evaluate the RL and PID controllers on identical scenarios.
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pid: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Settings::None)]
        settings: Settings,
    },
    /// Fly a setpoint schedule from trimmed level flight and write a trace.
    Simulate {
        #[arg(long, value_enum, default_value_t = ControllerKind::Pid)]
        controller: ControllerKind,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        pid: Option<PathBuf>,
        /// CSV with columns time_s, roll_deg, pitch_deg, airspeed_mps.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    Rl,
    Pid,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Settings {
    None,
    Light,
    Moderate,
    Severe,
    All,
}

impl Settings {
    pub fn severities(self) -> Vec<wingctl_core::Severity> {
        use wingctl_core::Severity;
        match self {
            Settings::None => vec![Severity::None],
            Settings::Light => vec![Severity::Light],
            Settings::Moderate => vec![Severity::Moderate],
            Settings::Severe => vec![Severity::Severe],
            Settings::All => Severity::ALL.to_vec(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let loaded = config::load(cli.config.as_deref(), cli.airframe.as_deref())?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::input(format!("cannot create output directory {}: {e}", cli.out.display())))?;
    let ctx = commands::Context {
        loaded,
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Train { budget } => commands::train(&ctx, budget),
        Command::Evaluate {
            controller,
            checkpoint,
            pid,
            settings,
        } => commands::evaluate(&ctx, controller, checkpoint.as_deref(), pid.as_deref(), settings),
        Command::Compare {
            checkpoint,
            pid,
            settings,
        } => commands::compare(&ctx, &checkpoint, pid.as_deref(), settings),
        Command::Simulate {
            controller,
            checkpoint,
            pid,
            schedule,
        } => commands::simulate(&ctx, controller, checkpoint.as_deref(), pid.as_deref(), schedule.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
