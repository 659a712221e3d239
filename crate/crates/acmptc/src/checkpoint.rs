//! Model checkpoint persistence.
//!
//! JSON dump of every agent's actor and critic parameters plus the learning
//! configuration. Serialization is deterministic (fixed field order,
//! shortest round-trip float encoding), so save -> load -> save is
//! byte-identical and loads are bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drl::{Agent, AgentConfig};
use crate::VERSION;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("checkpoint encode/decode error: {0}")]
    Codec(#[from] serde_json::Error),
    #[error("checkpoint is inconsistent: {0}")]
    Inconsistent(String),
}

/// Everything needed to reload a set of trained agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub agent_config: AgentConfig,
    pub observation_dim: usize,
    pub action_count: usize,
    pub agents: Vec<Agent>,
}

impl Checkpoint {
    pub fn new(agent_config: AgentConfig, observation_dim: usize, action_count: usize, agents: Vec<Agent>) -> Self {
        Self { version: VERSION.to_string(), agent_config, observation_dim, action_count, agents }
    }

    fn validate(&self) -> Result<(), CheckpointError> {
        for (i, agent) in self.agents.iter().enumerate() {
            agent
                .actor
                .validate()
                .and_then(|_| agent.critic.validate())
                .map_err(|e| CheckpointError::Inconsistent(format!("agent {i}: {e}")))?;
            if agent.actor.input_dim() != self.observation_dim
                || agent.actor.output_dim() != self.action_count
                || agent.critic.input_dim() != self.observation_dim
                || agent.critic.output_dim() != 1
            {
                return Err(CheckpointError::Inconsistent(format!(
                    "agent {i} shapes do not match observation_dim={} action_count={}",
                    self.observation_dim, self.action_count
                )));
            }
            if !agent.actor.params_finite() || !agent.critic.params_finite() {
                return Err(CheckpointError::Inconsistent(format!("agent {i} holds non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let checkpoint: Checkpoint = serde_json::from_slice(bytes)?;
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()?)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}
