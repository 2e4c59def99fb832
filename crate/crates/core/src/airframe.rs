//! Airframe configuration: mass properties, aerodynamics, propulsion and
//! actuator limits, loaded from a versioned TOML document.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::actuators::ActuatorConfig;
use crate::aerodynamics::AeroCoefficientSet;
use crate::error::{Error, Result};
use crate::propulsion::PropulsionConfig;
use crate::rigid_body::InertialProperties;

pub const AIRFRAME_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InertiaConfig {
    pub jx_kg_m2: f64,
    pub jy_kg_m2: f64,
    pub jz_kg_m2: f64,
    pub jxz_kg_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirframeConfig {
    pub schema_version: u32,
    pub name: String,
    pub mass_kg: f64,
    pub gravity_mps2: f64,
    pub inertia: InertiaConfig,
    pub aero: AeroCoefficientSet,
    pub propulsion: PropulsionConfig,
    pub actuators: ActuatorConfig,
}

impl AirframeConfig {
    /// Skywalker X8-class flying wing. Representative values only.
    pub fn skywalker_x8() -> Self {
        Self {
            schema_version: AIRFRAME_SCHEMA_VERSION,
            name: "skywalker-x8".into(),
            mass_kg: 3.364,
            gravity_mps2: 9.81,
            inertia: InertiaConfig {
                jx_kg_m2: 1.229,
                jy_kg_m2: 0.1702,
                jz_kg_m2: 0.8808,
                jxz_kg_m2: 0.9343,
            },
            aero: AeroCoefficientSet::skywalker_x8(),
            propulsion: PropulsionConfig::skywalker_x8(),
            actuators: ActuatorConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: AirframeConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: AirframeConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("airframe config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != AIRFRAME_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "airframe schema_version {} is not supported (expected {})",
                self.schema_version, AIRFRAME_SCHEMA_VERSION
            )));
        }
        self.inertial()?;
        self.aero.validate()?;
        self.propulsion.validate()?;
        self.actuators.validate()
    }

    pub fn inertial(&self) -> Result<InertialProperties> {
        let i = &self.inertia;
        InertialProperties::from_moments(
            self.mass_kg,
            i.jx_kg_m2,
            i.jy_kg_m2,
            i.jz_kg_m2,
            i.jxz_kg_m2,
            self.gravity_mps2,
        )
    }
}

impl Default for AirframeConfig {
    fn default() -> Self {
        Self::skywalker_x8()
    }
}

/// Validated airframe with precomputed mass properties, cheap to share.
#[derive(Debug, Clone)]
pub struct Airframe {
    pub config: AirframeConfig,
    pub inertial: InertialProperties,
}

impl Airframe {
    pub fn new(config: AirframeConfig) -> Result<Arc<Self>> {
        config.validate()?;
        let inertial = config.inertial()?;
        Ok(Arc::new(Self { config, inertial }))
    }

    pub fn x8() -> Arc<Self> {
        Self::new(AirframeConfig::skywalker_x8()).expect("built-in airframe is valid")
    }

    pub fn wingspan(&self) -> f64 {
        self.config.aero.span_m
    }

    pub fn deflection_limit(&self) -> f64 {
        self.config.actuators.deflection_limit_rad
    }
}
