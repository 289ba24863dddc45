//! Two-armed bandit used as a learner sanity check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::{sample_action, PolicyParams};
use super::ppo::{ppo_update, PpoConfig, RolloutBuffer, Transition};
use crate::error::Result;

/// Arm 1 pays 1, arm 0 pays 0. Observation is a constant.
pub fn bandit_reward(arm: usize) -> f64 {
    if arm == 1 {
        1.0
    } else {
        0.0
    }
}

/// Trains on the bandit and returns the better arm's probability after each update.
pub fn train_bandit(cfg: &PpoConfig, updates: usize, seed: u64) -> Result<Vec<f64>> {
    let obs = vec![1.0];
    let mut params = PolicyParams::new(1, &cfg.hidden, &[2], seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB4D1_7000);
    let mut curve = Vec::with_capacity(updates);
    let mut buffer = RolloutBuffer::default();
    for _ in 0..updates {
        buffer.clear();
        let (dists, value) = params.forward(&obs)?;
        for _ in 0..cfg.rollout {
            let (a, lp) = sample_action(&dists, &mut rng);
            buffer.push(Transition {
                obs: obs.clone(),
                actions: a.clone(),
                log_prob: lp,
                reward: bandit_reward(a[0]),
                value,
                done: true,
            });
        }
        buffer.finish(cfg.gamma, cfg.gae_lambda)?;
        ppo_update(&mut params, &buffer, cfg, &mut rng)?;
        curve.push(params.forward(&obs)?.0[0][1]);
    }
    Ok(curve)
}
