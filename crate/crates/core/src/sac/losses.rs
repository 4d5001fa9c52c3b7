//! Soft actor-critic objectives with analytic gradients.
//!
//! Every loss is a batch mean and returns the gradient with respect to the
//! parameters of the network being trained; the other networks are held
//! fixed. Policy noise is passed in explicitly so the losses are plain
//! deterministic functions of their parameters.

use super::buffer::Transition;
use super::net::FeedForwardNet;
use super::policy::GaussianPolicy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Row-major batch of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rows: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let first = items.first().ok_or_else(empty)?;
        let (state_dim, action_dim) = (first.state.len(), first.action.len());
        let mut b = Batch {
            rows: items.len(),
            state_dim,
            action_dim,
            states: Vec::with_capacity(items.len() * state_dim),
            actions: Vec::with_capacity(items.len() * action_dim),
            rewards: Vec::with_capacity(items.len()),
            next_states: Vec::with_capacity(items.len() * state_dim),
            dones: Vec::with_capacity(items.len()),
        };
        for t in items {
            if t.state.len() != state_dim || t.next_state.len() != state_dim {
                return Err(Error::Dimension {
                    what: "transition state",
                    expected: state_dim,
                    got: t.state.len().max(t.next_state.len()),
                });
            }
            if t.action.len() != action_dim {
                return Err(Error::Dimension {
                    what: "transition action",
                    expected: action_dim,
                    got: t.action.len(),
                });
            }
            b.states.extend_from_slice(&t.state);
            b.actions.extend_from_slice(&t.action);
            b.rewards.push(t.reward);
            b.next_states.extend_from_slice(&t.next_state);
            b.dones.push(t.done);
        }
        Ok(b)
    }
}

fn empty() -> Error {
    Error::Validation("loss evaluated on an empty batch".into())
}

fn check_rows(rows: usize) -> Result<()> {
    if rows == 0 {
        Err(empty())
    } else {
        Ok(())
    }
}

/// Concatenates state and action rows into critic inputs.
pub(crate) fn critic_input(states: &[f64], actions: &[f64], rows: usize) -> Vec<f64> {
    let s_dim = states.len() / rows;
    let a_dim = actions.len() / rows;
    let mut x = Vec::with_capacity(rows * (s_dim + a_dim));
    for r in 0..rows {
        x.extend_from_slice(&states[r * s_dim..(r + 1) * s_dim]);
        x.extend_from_slice(&actions[r * a_dim..(r + 1) * a_dim]);
    }
    x
}

/// Bellman targets `y = r + γ·(1 − done)·V̄(s')`.
pub fn q_targets(value_target: &FeedForwardNet, batch: &Batch, gamma: f64) -> Vec<f64> {
    let next_v = value_target.forward_batch(&batch.next_states, batch.rows);
    batch
        .rewards
        .iter()
        .zip(&batch.dones)
        .zip(next_v.output())
        .map(|((r, &d), v)| if d { *r } else { r + gamma * v })
        .collect()
}

/// `mean ½(Q(s, a) − y)²`.
pub fn q_loss(q: &FeedForwardNet, batch: &Batch, targets: &[f64]) -> Result<LossGrad> {
    check_rows(batch.rows)?;
    if targets.len() != batch.rows {
        return Err(Error::Dimension {
            what: "q targets",
            expected: batch.rows,
            got: targets.len(),
        });
    }
    let x = critic_input(&batch.states, &batch.actions, batch.rows);
    let trace = q.forward_batch(&x, batch.rows);
    let n = batch.rows as f64;
    let residual: Vec<f64> = trace.output().iter().zip(targets).map(|(q, y)| q - y).collect();
    let loss = residual.iter().map(|e| 0.5 * e * e).sum::<f64>() / n;
    let d_out: Vec<f64> = residual.iter().map(|e| e / n).collect();
    Ok(LossGrad {
        loss,
        grad: q.backward(&trace, &d_out).0,
    })
}

/// Smaller of the two critics for each row, and which one it was.
fn twin_min(q1: &FeedForwardNet, q2: &FeedForwardNet, x: &[f64], rows: usize) -> (Vec<f64>, Vec<bool>, [super::net::Trace; 2]) {
    let t1 = q1.forward_batch(x, rows);
    let t2 = q2.forward_batch(x, rows);
    let mut min = Vec::with_capacity(rows);
    let mut first = Vec::with_capacity(rows);
    for (a, b) in t1.output().iter().zip(t2.output()) {
        first.push(a <= b);
        min.push(a.min(*b));
    }
    (min, first, [t1, t2])
}

/// `mean ½(V(s) − [min Q(s, ã) − α·log π(ã|s)])²` with `ã` drawn from the
/// policy using `noise`; gradient with respect to the value network.
#[allow(clippy::too_many_arguments)]
pub fn value_loss(
    value: &FeedForwardNet,
    states: &[f64],
    rows: usize,
    policy: &GaussianPolicy,
    q1: &FeedForwardNet,
    q2: &FeedForwardNet,
    alpha: f64,
    noise: &[f64],
) -> Result<LossGrad> {
    check_rows(rows)?;
    let sample = policy.sample_with_noise(states, rows, noise)?;
    let x = critic_input(states, &sample.actions, rows);
    let (q_min, _, _) = twin_min(q1, q2, &x, rows);
    let trace = value.forward_batch(states, rows);
    let n = rows as f64;
    let residual: Vec<f64> = trace
        .output()
        .iter()
        .zip(&q_min)
        .zip(&sample.log_prob)
        .map(|((v, q), lp)| v - (q - alpha * lp))
        .collect();
    let loss = residual.iter().map(|e| 0.5 * e * e).sum::<f64>() / n;
    let d_out: Vec<f64> = residual.iter().map(|e| e / n).collect();
    Ok(LossGrad {
        loss,
        grad: value.backward(&trace, &d_out).0,
    })
}

/// `mean [α·log π(ã|s) − min Q(s, ã)]` through the reparameterized sample;
/// gradient with respect to the policy network.
pub fn policy_loss(
    policy: &GaussianPolicy,
    states: &[f64],
    rows: usize,
    q1: &FeedForwardNet,
    q2: &FeedForwardNet,
    alpha: f64,
    noise: &[f64],
) -> Result<LossGrad> {
    check_rows(rows)?;
    let sample = policy.sample_with_noise(states, rows, noise)?;
    let x = critic_input(states, &sample.actions, rows);
    let (q_min, use_first, [t1, t2]) = twin_min(q1, q2, &x, rows);
    let n = rows as f64;
    let loss = sample
        .log_prob
        .iter()
        .zip(&q_min)
        .map(|(lp, q)| alpha * lp - q)
        .sum::<f64>()
        / n;

    // dL/dQ_min = −1/n on whichever critic was smaller.
    let d1: Vec<f64> = use_first.iter().map(|&f| if f { -1.0 / n } else { 0.0 }).collect();
    let d2: Vec<f64> = use_first.iter().map(|&f| if f { 0.0 } else { -1.0 / n }).collect();
    let (_, dx1) = q1.backward(&t1, &d1);
    let (_, dx2) = q2.backward(&t2, &d2);
    let (s_dim, a_dim) = (policy.state_dim(), policy.action_dim());
    let width = s_dim + a_dim;
    let mut d_action = Vec::with_capacity(rows * a_dim);
    for r in 0..rows {
        for j in 0..a_dim {
            let k = r * width + s_dim + j;
            d_action.push(dx1[k] + dx2[k]);
        }
    }
    let d_log_prob = vec![alpha / n; rows];
    Ok(LossGrad {
        loss,
        grad: policy.backward(&sample, &d_log_prob, &d_action),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sac::net::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_net(inputs: usize, c: f64) -> FeedForwardNet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = FeedForwardNet::new(&[inputs, 1], Activation::Relu, Activation::Identity, 1.0, &mut rng);
        let p = net.params_mut();
        let n = p.len();
        p[..n - 1].iter_mut().for_each(|w| *w = 0.0);
        p[n - 1] = c;
        net
    }

    fn batch(q_in: usize) -> Batch {
        Batch {
            rows: 1,
            state_dim: q_in - 1,
            action_dim: 1,
            states: vec![0.5; q_in - 1],
            actions: vec![0.1],
            rewards: vec![0.0],
            next_states: vec![0.5; q_in - 1],
            dones: vec![true],
        }
    }

    #[test]
    fn zero_residual_means_zero_loss() {
        let q = constant_net(3, 0.7);
        let b = batch(3);
        let lg = q_loss(&q, &b, &[0.7]).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_residual_loss_is_half() {
        let q = constant_net(3, 1.0);
        let lg = q_loss(&q, &batch(3), &[0.0]).unwrap();
        assert_eq!(lg.loss, 0.5);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let q = constant_net(3, 1.0);
        let mut b = batch(3);
        b.rows = 0;
        b.states.clear();
        b.actions.clear();
        assert!(q_loss(&q, &b, &[]).is_err());
        assert!(Batch::from_transitions(&[]).is_err());
    }

    #[test]
    fn terminal_targets_do_not_bootstrap() {
        let v = constant_net(2, 5.0);
        let mut b = batch(3);
        b.rewards = vec![1.0];
        assert_eq!(q_targets(&v, &b, 0.9), vec![1.0]);
        b.dones = vec![false];
        assert!((q_targets(&v, &b, 0.9)[0] - 5.5).abs() < 1e-12);
    }

    #[test]
    fn value_loss_with_constant_critics_and_no_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = GaussianPolicy::new(2, 1, &[4], &mut rng);
        let q = constant_net(3, 2.0);
        let v = constant_net(2, 3.0);
        let states = [0.1, 0.2, 0.3, 0.4];
        let lg = value_loss(&v, &states, 2, &policy, &q, &q, 0.0, &[0.3, -0.2]).unwrap();
        assert!((lg.loss - 0.5).abs() < 1e-12);
        let lg = value_loss(&constant_net(2, 2.0), &states, 2, &policy, &q, &q, 0.0, &[0.3, -0.2]).unwrap();
        assert_eq!(lg.loss, 0.0);
    }

    #[test]
    fn policy_loss_without_entropy_is_negative_mean_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = GaussianPolicy::new(2, 1, &[4], &mut rng);
        let q1 = constant_net(3, 2.0);
        let q2 = constant_net(3, 1.5);
        let lg = policy_loss(&policy, &[0.1, 0.2], 1, &q1, &q2, 0.0, &[0.4]).unwrap();
        assert_eq!(lg.loss, -1.5);
        // constant critics and no entropy: nothing to descend
        assert!(lg.grad.iter().all(|&g| g == 0.0));
    }

    fn tanh_net(sizes: &[usize], seed: u64) -> FeedForwardNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeedForwardNet::new(sizes, Activation::Tanh, Activation::Identity, 0.5, &mut rng)
    }

    /// Largest relative deviation between `grad` and central differences of
    /// `loss` over the parameters of `net`.
    fn fd_error(net: &FeedForwardNet, grad: &[f64], loss: impl Fn(&FeedForwardNet) -> f64) -> f64 {
        let h = 1e-5;
        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for k in 0..net.num_params() {
            let orig = net.params()[k];
            probe.params_mut()[k] = orig + h;
            let up = loss(&probe);
            probe.params_mut()[k] = orig - h;
            let down = loss(&probe);
            probe.params_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6));
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (s, a, rows) = (3, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let states: Vec<f64> = (0..rows * s).map(|_| rng.random_range(-1.0..1.0)).collect();
        let actions: Vec<f64> = (0..rows * a).map(|_| rng.random_range(-0.9..0.9)).collect();
        let noise: Vec<f64> = (0..rows * a).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = Batch {
            rows,
            state_dim: s,
            action_dim: a,
            states: states.clone(),
            actions,
            rewards: vec![0.3, -1.0, 0.0, 2.0],
            next_states: states.clone(),
            dones: vec![false, true, false, false],
        };
        let q1 = tanh_net(&[s + a, 8, 1], 1);
        let q2 = tanh_net(&[s + a, 8, 1], 2);
        let v = tanh_net(&[s, 8, 1], 3);
        let policy = GaussianPolicy::from_net(tanh_net(&[s, 8, 2 * a], 4)).unwrap();
        let y = q_targets(&v, &b, 0.9);

        let g = q_loss(&q1, &b, &y).unwrap().grad;
        assert!(fd_error(&q1, &g, |n| q_loss(n, &b, &y).unwrap().loss) < 1e-6);

        let g = value_loss(&v, &states, rows, &policy, &q1, &q2, 0.2, &noise).unwrap().grad;
        let err = fd_error(&v, &g, |n| value_loss(n, &states, rows, &policy, &q1, &q2, 0.2, &noise).unwrap().loss);
        assert!(err < 1e-6);

        let g = policy_loss(&policy, &states, rows, &q1, &q2, 0.2, &noise).unwrap().grad;
        let err = fd_error(policy.net(), &g, |n| {
            let p = GaussianPolicy::from_net(n.clone()).unwrap();
            policy_loss(&p, &states, rows, &q1, &q2, 0.2, &noise).unwrap().loss
        });
        assert!(err < 1e-6, "{err}");
    }
}
