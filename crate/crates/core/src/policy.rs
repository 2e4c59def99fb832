//! Trained policy as a deterministic controller.

use crate::environment::{clip_action, Action, FlightSnapshot, ACTION_LEN};
use crate::error::{Error, Result};
use crate::evaluation::Controller;
use crate::ppo::Checkpoint;

/// Acts with the policy mean on observations normalized by the frozen
/// training statistics.
#[derive(Debug, Clone)]
pub struct RlController {
    checkpoint: Checkpoint,
}

impl RlController {
    pub fn new(checkpoint: Checkpoint) -> Result<Self> {
        let spec = checkpoint.network.spec();
        if spec.action_dim != ACTION_LEN {
            return Err(Error::Checkpoint(format!(
                "policy has {} outputs, the aircraft takes {ACTION_LEN}",
                spec.action_dim
            )));
        }
        Ok(Self { checkpoint })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn action(&self, observation: &[f64]) -> Result<Action> {
        let input = self.checkpoint.normalize(observation);
        let mean = self.checkpoint.network.mean_action(&input)?;
        let mut a = [0.0; ACTION_LEN];
        a.copy_from_slice(&mean);
        Ok(clip_action(&a))
    }
}

impl Controller for RlController {
    fn reset(&mut self) {}

    fn act(&mut self, _snapshot: &FlightSnapshot, observation: &[f64], _dt: f64) -> Action {
        // a malformed observation yields NaN, which the environment treats as a failure
        self.action(observation).unwrap_or([f64::NAN; ACTION_LEN])
    }
}
