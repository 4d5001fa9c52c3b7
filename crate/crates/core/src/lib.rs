//! Transmission line-flow control with soft actor-critic agents.
//!
//! The crate is layered bottom-up:
//!
//! - [`grid`]: bus-branch case model and the `gridcase-v1` file format.
//! - [`power_flow`]: Newton-Raphson AC power flow and limit checks.
//! - [`security`]: N-1 contingency sweep and the overload reward.
//! - [`sac`]: soft actor-critic with hand-written backpropagation.
//! - [`env`]: the generator-control and load-control MDPs.
//! - [`pipeline`]: two-stage training, evaluation and policy application.

pub mod env;
pub mod error;
pub mod grid;
pub mod pipeline;
pub mod power_flow;
pub mod sac;
pub mod security;

pub use error::{Error, Result};
