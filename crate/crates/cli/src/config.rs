use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wingctl_core::evaluation::config_hash;
use wingctl_core::{Airframe, AirframeConfig, EnvConfig, EvalConfig, PidGains, PpoConfig, Severity};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    /// Write a numbered checkpoint every this many updates (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { checkpoint_every: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub duration_s: f64,
    /// Trimmed level-flight airspeed the run starts from.
    pub airspeed_mps: f64,
    pub severity: Severity,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            duration_s: 20.0,
            airspeed_mps: 18.0,
            severity: Severity::None,
        }
    }
}

/// Everything a subcommand may need, read from one TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Airframe TOML, relative to the config file. Built-in X8 when absent.
    pub airframe: Option<PathBuf>,
    /// Training environment.
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub train: TrainSettings,
    pub evaluation: EvalConfig,
    pub pid: PidGains,
    pub simulate: SimulateSettings,
}

/// Resolved configuration with its airframe and a hash over both.
pub struct Loaded {
    pub run: RunConfig,
    pub airframe: std::sync::Arc<Airframe>,
    pub hash: String,
}

pub fn load(config: Option<&Path>, airframe_override: Option<&Path>) -> Result<Loaded, CliError> {
    let (mut run, base) = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
            let run: RunConfig = toml::from_str(&text)
                .map_err(|e| CliError::input(format!("cannot parse config {}: {e}", path.display())))?;
            (run, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (RunConfig::default(), PathBuf::new()),
    };
    if let Some(p) = airframe_override {
        run.airframe = Some(p.to_path_buf());
    } else if let Some(p) = &run.airframe {
        run.airframe = Some(base.join(p));
    }
    let airframe_cfg = match &run.airframe {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::input(format!("airframe config not found: {}", path.display())));
            }
            AirframeConfig::load(path).map_err(|e| CliError::input(e.to_string()))?
        }
        None => AirframeConfig::default(),
    };
    run.env.validate().map_err(|e| CliError::input(format!("[env] {e}")))?;
    run.ppo.validate().map_err(|e| CliError::input(format!("[ppo] {e}")))?;
    run.evaluation
        .validate()
        .map_err(|e| CliError::input(format!("[evaluation] {e}")))?;
    let airframe = Airframe::new(airframe_cfg.clone()).map_err(|e| CliError::input(e.to_string()))?;
    let hash = hash_of(&run, &airframe_cfg);
    Ok(Loaded { run, airframe, hash })
}

/// Hash of the resolved settings, so defaults filled in by the loader count.
pub fn hash_of(run: &RunConfig, airframe: &AirframeConfig) -> String {
    let mut resolved = run.clone();
    resolved.airframe = None;
    let text = toml::to_string(&resolved).expect("run config serializes") + &airframe.to_toml_string();
    config_hash(&text)
}
