//! Tanh-squashed diagonal Gaussian policy.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::net::{Activation, FeedForwardNet, Trace};
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Squashed actions are kept strictly inside (−1, 1).
pub const ACTION_BOUND: f64 = 1.0 - 1e-12;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 − tanh²u)`, exact for any finite `u`.
#[inline]
pub(crate) fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    /// Outputs `[mean; raw log-std]`, `2 · action_dim` values.
    net: FeedForwardNet,
    action_dim: usize,
}

/// Per-row quantities of a reparameterized sample, kept for the backward
/// pass.
#[derive(Debug, Clone)]
pub(crate) struct PolicySample {
    pub trace: Trace,
    pub noise: Vec<f64>,
    /// Pre-squash value `μ + σ·ε`.
    pub pre: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_std: Vec<f64>,
    /// Whether the raw log-std fell inside the clamp (gradient passes).
    pub log_std_free: Vec<bool>,
    pub log_prob: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Self {
            net: FeedForwardNet::new(&sizes, Activation::Relu, Activation::Identity, 3e-3, rng),
            action_dim,
        }
    }

    pub fn from_net(net: FeedForwardNet) -> Result<Self> {
        net.validate()?;
        if !net.output_dim().is_multiple_of(2) {
            return Err(Error::Checkpoint("policy output width must be even".into()));
        }
        let action_dim = net.output_dim() / 2;
        Ok(Self { net, action_dim })
    }

    pub fn net(&self) -> &FeedForwardNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut FeedForwardNet {
        &mut self.net
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Mean and clamped log-std for one state.
    pub fn distribution(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(state, 1)?;
        let out = self.net.forward(state);
        let (mean, raw) = out.split_at(self.action_dim);
        Ok((
            mean.to_vec(),
            raw.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
        ))
    }

    fn check_state(&self, states: &[f64], rows: usize) -> Result<()> {
        if states.len() != rows * self.state_dim() {
            return Err(Error::Dimension {
                what: "policy state",
                expected: rows * self.state_dim(),
                got: states.len(),
            });
        }
        Ok(())
    }

    /// Draws an action in (−1, 1)^dim and its log-probability.
    ///
    /// Deterministic mode returns `tanh(μ)` and the density at that point.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        deterministic: bool,
        rng: &mut R,
    ) -> Result<(Vec<f64>, f64)> {
        let noise: Vec<f64> = if deterministic {
            vec![0.0; self.action_dim]
        } else {
            (0..self.action_dim).map(|_| rng.sample(StandardNormal)).collect()
        };
        let sample = self.sample_with_noise(state, 1, &noise)?;
        Ok((sample.actions, sample.log_prob[0]))
    }

    /// Reparameterized batch sample `a = tanh(μ(s) + σ(s)·ε)` for given noise.
    pub(crate) fn sample_with_noise(
        &self,
        states: &[f64],
        rows: usize,
        noise: &[f64],
    ) -> Result<PolicySample> {
        self.check_state(states, rows)?;
        let dim = self.action_dim;
        if noise.len() != rows * dim {
            return Err(Error::Dimension {
                what: "policy noise",
                expected: rows * dim,
                got: noise.len(),
            });
        }
        let trace = self.net.forward_batch(states, rows);
        let out = trace.output();
        let n = rows * dim;
        let mut pre = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut log_std = Vec::with_capacity(n);
        let mut log_std_free = Vec::with_capacity(n);
        let mut log_prob = vec![0.0; rows];
        for r in 0..rows {
            let row = &out[r * 2 * dim..(r + 1) * 2 * dim];
            for j in 0..dim {
                let raw = row[dim + j];
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let eps = noise[r * dim + j];
                let u = row[j] + ls.exp() * eps;
                log_prob[r] += -0.5 * eps * eps - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
                pre.push(u);
                actions.push(u.tanh().clamp(-ACTION_BOUND, ACTION_BOUND));
                log_std.push(ls);
                log_std_free.push((LOG_STD_MIN..=LOG_STD_MAX).contains(&raw));
            }
        }
        Ok(PolicySample {
            trace,
            noise: noise.to_vec(),
            pre,
            actions,
            log_std,
            log_std_free,
            log_prob,
        })
    }

    /// Parameter gradient given `dL/dlogπ` per row and `dL/da` per action
    /// entry, propagating through the reparameterization.
    pub(crate) fn backward(&self, sample: &PolicySample, d_log_prob: &[f64], d_action: &[f64]) -> Vec<f64> {
        let dim = self.action_dim;
        let rows = sample.trace.rows();
        let mut d_out = vec![0.0; rows * 2 * dim];
        for r in 0..rows {
            for j in 0..dim {
                let k = r * dim + j;
                let t = sample.pre[k].tanh();
                // logπ depends on u through −ln(1 − tanh²u), whose slope is 2·tanh(u).
                let d_pre = d_log_prob[r] * 2.0 * t + d_action[k] * (1.0 - t * t);
                d_out[r * 2 * dim + j] = d_pre;
                if sample.log_std_free[k] {
                    let sigma = sample.log_std[k].exp();
                    d_out[r * 2 * dim + dim + j] = -d_log_prob[r] + d_pre * sigma * sample.noise[k];
                }
            }
        }
        self.net.backward(&sample.trace, &d_out).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy() -> GaussianPolicy {
        GaussianPolicy::new(3, 2, &[8, 8], &mut ChaCha8Rng::seed_from_u64(9))
    }

    fn set_output_bias(p: &mut GaussianPolicy, mean: f64, log_std: f64) {
        // zero the last weight layer so the head equals its bias
        let n = p.net.num_params();
        let params = p.net.params_mut();
        let head = 8 * 4;
        for w in &mut params[n - 4 - head..n - 4] {
            *w = 0.0;
        }
        params[n - 4] = mean;
        params[n - 3] = mean;
        params[n - 2] = log_std;
        params[n - 1] = log_std;
    }

    #[test]
    fn zero_mean_deterministic_is_midpoint() {
        let mut p = policy();
        set_output_bias(&mut p, 0.0, 0.0);
        let (a, lp) = p.sample_action(&[0.2, 0.1, -0.3], true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
        assert!((lp - 2.0 * (-HALF_LN_2PI)).abs() < 1e-12);
    }

    #[test]
    fn saturated_mean_stays_below_one() {
        let mut p = policy();
        set_output_bias(&mut p, 1e6, 0.0);
        let (a, lp) = p.sample_action(&[0.2, 0.1, -0.3], true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(a.iter().all(|&x| x < 1.0 && x > 0.999));
        assert!(lp.is_finite());
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let p = policy();
        let s = [0.5, -0.5, 1.0];
        let a = p.sample_action(&s, false, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = p.sample_action(&s, false, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn state_dimension_checked() {
        let p = policy();
        let err = p.sample_action(&[0.0; 2], true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 3, got: 2, .. }));
    }

    #[test]
    fn log_std_is_clamped() {
        let mut p = policy();
        set_output_bias(&mut p, 0.0, 50.0);
        let (_, ls) = p.distribution(&[0.0; 3]).unwrap();
        assert!(ls.iter().all(|&l| l == LOG_STD_MAX));
        set_output_bias(&mut p, 0.0, -50.0);
        let (_, ls) = p.distribution(&[0.0; 3]).unwrap();
        assert!(ls.iter().all(|&l| l == LOG_STD_MIN));
    }

    #[test]
    fn stable_log_jacobian() {
        for u in [-800.0, -30.0, -1.0, 0.0, 0.5, 30.0, 800.0] {
            let v = log_one_minus_tanh_sq(u);
            assert!(v.is_finite());
            if u.abs() < 5.0 {
                let t: f64 = u.tanh();
                assert!((v - (1.0 - t * t).ln()).abs() < 1e-12);
            }
        }
    }
}
