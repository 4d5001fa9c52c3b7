//! `gridrl-agent-v1` checkpoint files.
//!
//! A checkpoint is one JSON document:
//!
//! ```json
//! {
//!   "version": "gridrl-agent-v1",
//!   "config": { "gamma": 0.99, "alpha": 0.2, ... },
//!   "policy": { "sizes": [s, h, 2a], "activations": [...], "params": [...] },
//!   "q1": { ... }, "q2": { ... }, "value": { ... }, "value_target": { ... },
//!   "binding": ...
//! }
//! ```
//!
//! Every network stores its layer widths next to its flat parameter vector
//! (see [`FeedForwardNet`](super::net::FeedForwardNet) for the layout).
//! `binding` carries whatever the caller needs to reuse the policy, such as
//! observation layout and normalization statistics. Floats are written with
//! shortest round-trip formatting, so a reload is bit-exact.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::agent::{SacAgent, SacConfig};
use super::net::FeedForwardNet;
use super::policy::GaussianPolicy;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "gridrl-agent-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentCheckpoint<B> {
    pub version: String,
    pub config: SacConfig,
    pub policy: FeedForwardNet,
    pub q1: FeedForwardNet,
    pub q2: FeedForwardNet,
    pub value: FeedForwardNet,
    pub value_target: FeedForwardNet,
    pub binding: B,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<String>,
}

impl<B> AgentCheckpoint<B> {
    pub fn from_agent(agent: &SacAgent, binding: B) -> Self {
        Self {
            version: CHECKPOINT_VERSION.to_string(),
            config: agent.config.clone(),
            policy: agent.policy.net().clone(),
            q1: agent.q1.clone(),
            q2: agent.q2.clone(),
            value: agent.value.clone(),
            value_target: agent.value_target.clone(),
            binding,
        }
    }

    /// Rebuilds an agent with fresh optimizer state.
    pub fn to_agent(&self) -> Result<SacAgent> {
        SacAgent::from_parts(
            self.config.clone(),
            GaussianPolicy::from_net(self.policy.clone())?,
            self.q1.clone(),
            self.q2.clone(),
            self.value.clone(),
            self.value_target.clone(),
        )
    }
}

impl<B: Serialize> AgentCheckpoint<B> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl<B: DeserializeOwned> AgentCheckpoint<B> {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text).map_err(|e| Error::json(origin, &e))?;
        match probe.version.as_deref() {
            Some(CHECKPOINT_VERSION) => {}
            other => {
                return Err(Error::Checkpoint(format!(
                    "{} has version {:?}, this build reads {CHECKPOINT_VERSION:?}",
                    origin.display(),
                    other.unwrap_or("<missing>")
                )))
            }
        }
        let ckpt: Self = serde_json::from_str(text).map_err(|e| Error::json(origin, &e))?;
        ckpt.config.validate()?;
        ckpt.to_agent()?;
        Ok(ckpt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}
