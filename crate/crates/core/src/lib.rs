//! Fixed-wing UAV attitude control: a six-degree-of-freedom flying-wing
//! simulator, a reinforcement-learning environment on top of it, a PPO
//! trainer, a PID baseline and an evaluation harness.

pub mod actuators;
pub mod aerodynamics;
pub mod aircraft;
pub mod airframe;
pub mod atmosphere;
pub mod environment;
pub mod error;
pub mod evaluation;
pub mod neuralnet;
pub mod pid;
pub mod policy;
pub mod ppo;
pub mod propulsion;
pub mod rigid_body;
pub mod rng;

pub use actuators::{ActuatorConfig, ActuatorState, ControlCommand};
pub use aircraft::{steady_flight, trim_level_flight, Aircraft, FlightCondition, SteadyFlight, Trim};
pub use airframe::{Airframe, AirframeConfig};
pub use atmosphere::{Severity, WindField, WindSample, WindSetting};
pub use environment::{Action, ConstraintConfig, EnvConfig, Observation, Scenario, Targets, UavEnv};
pub use error::{Error, Result};
pub use evaluation::{Controller, EvalConfig};
pub use neuralnet::{Network, NetworkSpec};
pub use pid::{PidController, PidGains};
pub use policy::RlController;
pub use ppo::{Checkpoint, PpoConfig, Trainer};
pub use rigid_body::{BodyWrench, InertialProperties, SimState};
