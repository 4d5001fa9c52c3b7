//! Soft actor-critic with a state-value network, twin critics and a fixed
//! entropy temperature.
//!
//! Networks are plain multilayer perceptrons with analytic gradients in
//! `f64`; no autodiff is involved.

pub mod agent;
pub mod buffer;
pub mod checkpoint;
pub mod losses;
pub mod net;
pub mod policy;

pub use agent::{Losses, SacAgent, SacConfig, UpdateOutcome};
pub use buffer::{ReplayBuffer, Transition};
pub use checkpoint::{AgentCheckpoint, CHECKPOINT_VERSION};
pub use losses::{policy_loss, q_loss, q_targets, value_loss, Batch, LossGrad};
pub use net::{Activation, Adam, FeedForwardNet};
pub use policy::GaussianPolicy;
