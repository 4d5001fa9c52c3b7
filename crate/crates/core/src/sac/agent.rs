use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::losses::{policy_loss, q_loss, q_targets, value_loss, Batch};
use super::net::{Activation, Adam, FeedForwardNet};
use super::policy::GaussianPolicy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    /// Fixed entropy temperature.
    pub alpha: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub lr_policy: f64,
    pub lr_q: f64,
    pub lr_value: f64,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.2,
            tau: 0.005,
            batch_size: 64,
            lr_policy: 3e-4,
            lr_q: 3e-4,
            lr_value: 3e-4,
            hidden: vec![256, 256],
            buffer_capacity: 100_000,
            seed: 0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must lie in (0, 1]");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be non-negative");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.buffer_capacity <= self.batch_size {
            return fail("buffer_capacity must exceed batch_size");
        }
        for lr in [self.lr_policy, self.lr_q, self.lr_value] {
            if !(lr > 0.0 && lr.is_finite()) {
                return fail("learning rates must be positive");
            }
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer widths must be positive");
        }
        Ok(())
    }
}

/// Losses of one gradient step, before the parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub q1: f64,
    pub q2: f64,
    pub value: f64,
    pub policy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    /// The buffer did not yet hold more than `batch_size` transitions.
    Skipped,
    Updated(Losses),
}

/// Policy, twin critics, value network and its target, plus optimizer
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub(crate) config: SacConfig,
    pub(crate) policy: GaussianPolicy,
    pub(crate) q1: FeedForwardNet,
    pub(crate) q2: FeedForwardNet,
    pub(crate) value: FeedForwardNet,
    pub(crate) value_target: FeedForwardNet,
    opt_policy: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_value: Adam,
}

fn critic<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], rng: &mut R) -> FeedForwardNet {
    let mut sizes = vec![inputs];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    FeedForwardNet::new(&sizes, Activation::Relu, Activation::Identity, 3e-3, rng)
}

impl SacAgent {
    /// Fresh networks; the target value network starts as a copy.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        config: SacConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::Config("agent needs non-empty state and action spaces".into()));
        }
        let policy = GaussianPolicy::new(state_dim, action_dim, &config.hidden, rng);
        let q1 = critic(state_dim + action_dim, &config.hidden, rng);
        let q2 = critic(state_dim + action_dim, &config.hidden, rng);
        let value = critic(state_dim, &config.hidden, rng);
        Self::from_parts(config, policy, q1, q2, value.clone(), value)
    }

    pub(crate) fn from_parts(
        config: SacConfig,
        policy: GaussianPolicy,
        q1: FeedForwardNet,
        q2: FeedForwardNet,
        value: FeedForwardNet,
        value_target: FeedForwardNet,
    ) -> Result<Self> {
        let (s, a) = (policy.state_dim(), policy.action_dim());
        let expect = |net: &FeedForwardNet, what: &str, inputs: usize| -> Result<()> {
            net.validate()?;
            if net.input_dim() != inputs || net.output_dim() != 1 {
                return Err(Error::Checkpoint(format!(
                    "{what} network maps {} -> {}, expected {inputs} -> 1",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
            Ok(())
        };
        expect(&q1, "q1", s + a)?;
        expect(&q2, "q2", s + a)?;
        expect(&value, "value", s)?;
        expect(&value_target, "target value", s)?;
        if value.sizes() != value_target.sizes() {
            return Err(Error::Checkpoint("value and target value shapes differ".into()));
        }
        Ok(Self {
            opt_policy: Adam::new(config.lr_policy, policy.net().num_params()),
            opt_q1: Adam::new(config.lr_q, q1.num_params()),
            opt_q2: Adam::new(config.lr_q, q2.num_params()),
            opt_value: Adam::new(config.lr_value, value.num_params()),
            config,
            policy,
            q1,
            q2,
            value,
            value_target,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn state_dim(&self) -> usize {
        self.policy.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.action_dim()
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.policy.sample_action(state, deterministic, rng)?.0)
    }

    /// Twin critic values `(Q₁, Q₂)` at one state-action pair.
    pub fn q_values(&self, state: &[f64], action: &[f64]) -> Result<(f64, f64)> {
        if state.len() != self.state_dim() || action.len() != self.action_dim() {
            return Err(Error::Dimension {
                what: "critic input",
                expected: self.state_dim() + self.action_dim(),
                got: state.len() + action.len(),
            });
        }
        let x: Vec<f64> = state.iter().chain(action).copied().collect();
        Ok((self.q1.forward(&x)[0], self.q2.forward(&x)[0]))
    }

    pub fn state_value(&self, state: &[f64]) -> Result<f64> {
        if state.len() != self.state_dim() {
            return Err(Error::Dimension {
                what: "value input",
                expected: self.state_dim(),
                got: state.len(),
            });
        }
        Ok(self.value.forward(state)[0])
    }

    /// One gradient step on Q₁, Q₂, V and π in that order, then the target
    /// value update. Skipped while the buffer holds `batch_size` or fewer
    /// transitions.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<UpdateOutcome> {
        let cfg = &self.config;
        if buffer.len() <= cfg.batch_size {
            return Ok(UpdateOutcome::Skipped);
        }
        let batch = Batch::from_transitions(&buffer.sample(cfg.batch_size, rng))?;
        if batch.state_dim != self.state_dim() || batch.action_dim != self.action_dim() {
            return Err(Error::Dimension {
                what: "replay transition",
                expected: self.state_dim() + self.action_dim(),
                got: batch.state_dim + batch.action_dim,
            });
        }
        let noise: Vec<f64> = (0..batch.rows * batch.action_dim).map(|_| rng.sample(StandardNormal)).collect();
        let (gamma, alpha, tau) = (cfg.gamma, cfg.alpha, cfg.tau);

        let targets = q_targets(&self.value_target, &batch, gamma);
        let l1 = q_loss(&self.q1, &batch, &targets)?;
        self.opt_q1.step(self.q1.params_mut(), &l1.grad);
        let l2 = q_loss(&self.q2, &batch, &targets)?;
        self.opt_q2.step(self.q2.params_mut(), &l2.grad);

        let lv = value_loss(&self.value, &batch.states, batch.rows, &self.policy, &self.q1, &self.q2, alpha, &noise)?;
        self.opt_value.step(self.value.params_mut(), &lv.grad);

        let lp = policy_loss(&self.policy, &batch.states, batch.rows, &self.q1, &self.q2, alpha, &noise)?;
        self.opt_policy.step(self.policy.net_mut().params_mut(), &lp.grad);

        self.value_target.soft_update_from(&self.value, tau)?;
        Ok(UpdateOutcome::Updated(Losses {
            q1: l1.loss,
            q2: l2.loss,
            value: lv.loss,
            policy: lp.loss,
        }))
    }

    #[cfg(test)]
    pub(crate) fn all_params_finite(&self) -> bool {
        [self.policy.net(), &self.q1, &self.q2, &self.value, &self.value_target]
            .iter()
            .all(|n| n.params().iter().all(|p| p.is_finite()))
    }
}
