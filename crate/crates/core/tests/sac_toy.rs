mod common;

use common::bandit;
use gridrl::sac::{q_loss, q_targets, Activation, Adam, Batch, FeedForwardNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn bandit_with_shifted_optimum_is_learned() {
    for seed in [100, 101, 102] {
        let (_, a) = bandit(seed, 0.5, 0.0, 2000);
        assert!((a - 0.5).abs() < 0.05, "seed {seed}: {a}");
    }
}

#[test]
fn zero_temperature_critic_fits_bellman_targets() {
    // s0 -> s1 with r = 1, then s1 -> terminal with r = 2; V̄ ≡ 3
    let gamma = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut v_bar = FeedForwardNet::new(&[2, 1], Activation::Relu, Activation::Identity, 1.0, &mut rng);
    v_bar.params_mut().copy_from_slice(&[0.0, 0.0, 3.0]);
    let batch = Batch {
        rows: 2,
        state_dim: 2,
        action_dim: 1,
        states: vec![1.0, 0.0, 0.0, 1.0],
        actions: vec![0.2, -0.4],
        rewards: vec![1.0, 2.0],
        next_states: vec![0.0, 1.0, 0.0, 0.0],
        dones: vec![false, true],
    };
    let y = q_targets(&v_bar, &batch, gamma);
    assert_eq!(y, vec![1.0 + gamma * 3.0, 2.0]);

    let mut q = FeedForwardNet::new(&[3, 16, 1], Activation::Tanh, Activation::Identity, 0.1, &mut rng);
    let mut opt = Adam::new(1e-2, q.num_params());
    for _ in 0..3000 {
        let lg = q_loss(&q, &batch, &y).unwrap();
        opt.step(q.params_mut(), &lg.grad);
    }
    assert!((q.forward(&[1.0, 0.0, 0.2])[0] - 3.7).abs() < 1e-3);
    assert!((q.forward(&[0.0, 1.0, -0.4])[0] - 2.0).abs() < 1e-3);
}
