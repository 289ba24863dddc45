//! Advantage estimation and the clipped-surrogate update.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::policy::{log_softmax, PolicyParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Transitions gathered per update.
    pub rollout: usize,
    /// Global gradient-norm cap; zero disables it.
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 10,
            minibatch: 64,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            rollout: 2048,
            max_grad_norm: 0.5,
            hidden: vec![256, 256],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{name}: {m}")));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout == 0 {
            return bad("epochs, minibatch and rollout must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.value_coef <= 0.0 || self.entropy_coef < 0.0 || self.max_grad_norm < 0.0 {
            return bad("value_coef must be positive, entropy_coef and max_grad_norm non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// Value of the state after the last transition when it is not terminal.
    pub bootstrap_value: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.advantages.clear();
        self.returns.clear();
        self.bootstrap_value = 0.0;
    }

    /// Fills `advantages` (normalized) and `returns`.
    pub fn finish(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let rewards: Vec<f64> = self.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        let (adv, ret) = compute_advantages(&rewards, &values, &dones, self.bootstrap_value, gamma, lambda)?;
        self.advantages = normalize_advantages(&adv);
        self.returns = ret;
        Ok(())
    }
}

/// GAE(λ). `bootstrap` is V of the state following the final transition,
/// used only if that transition is not terminal. Returns raw advantages and
/// the value targets `A + V`.
pub fn compute_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::Contract("advantage estimation on an empty buffer".into()));
    }
    if values.len() != n || dones.len() != n {
        return Err(Error::Contract("rewards, values and flags differ in length".into()));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        adv[t] = delta + gamma * lambda * live * next_adv;
        next_adv = adv[t];
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Zero mean, unit variance. A single entry, or a batch with no spread, is
/// only centered.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if adv.len() < 2 || std < 1e-12 {
        return adv.iter().map(|a| a - mean).collect();
    }
    adv.iter().map(|a| (a - mean) / std).collect()
}

/// PPO clipped surrogate for one sample.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Minibatch in array form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Vec<Vec<usize>>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn from_buffer(buffer: &RolloutBuffer, idx: &[usize]) -> Self {
        let dim = buffer.transitions[idx[0]].obs.len();
        let mut obs = Array2::zeros((idx.len(), dim));
        for (r, &i) in idx.iter().enumerate() {
            obs.row_mut(r)
                .assign(&ndarray::ArrayView1::from(&buffer.transitions[i].obs[..]));
        }
        Self {
            obs,
            actions: idx.iter().map(|&i| buffer.transitions[i].actions.clone()).collect(),
            old_log_prob: idx.iter().map(|&i| buffer.transitions[i].log_prob).collect(),
            advantages: idx.iter().map(|&i| buffer.advantages[i]).collect(),
            returns: idx.iter().map(|&i| buffer.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    /// Negated mean clipped surrogate.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// `policy_loss + c_v·value_loss − c_e·entropy`, the quantity minimized.
    pub total: f64,
}

/// Loss on a minibatch together with its gradients for both networks.
pub fn loss_and_grad(params: &PolicyParams, batch: &Batch, cfg: &PpoConfig) -> (LossParts, Mlp, Mlp) {
    let n = batch.obs.nrows();
    let nf = n as f64;
    let (logits, tape_p) = params.policy.forward(batch.obs.view());
    let (values, tape_v) = params.value.forward(batch.obs.view());
    let mut d_logits = Array2::zeros(logits.dim());
    let mut d_values = Array2::zeros(values.dim());
    let mut parts = LossParts::default();
    let mut clipped = 0usize;
    for i in 0..n {
        let row = logits.row(i);
        let mut start = 0;
        let mut head_lp = Vec::with_capacity(params.heads.len());
        let mut log_prob = 0.0;
        for (&h, &a) in params.heads.iter().zip(&batch.actions[i]) {
            let lp = log_softmax(row.slice(ndarray::s![start..start + h]));
            log_prob += lp[a];
            head_lp.push((start, lp));
            start += h;
        }
        let ratio = (log_prob - batch.old_log_prob[i]).exp();
        let adv = batch.advantages[i];
        let eps = cfg.clip_eps;
        parts.policy_loss -= clipped_objective(ratio, adv, eps) / nf;
        // gradient of the surrogate w.r.t. log π flows only through the unclipped branch
        let active = if adv >= 0.0 { ratio <= 1.0 + eps } else { ratio >= 1.0 - eps };
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        let d_logp = if active { -ratio * adv / nf } else { 0.0 };
        for ((start, lp), &a) in head_lp.iter().zip(&batch.actions[i]) {
            let ent: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
            parts.entropy += ent / nf;
            for (j, l) in lp.iter().enumerate() {
                let p = l.exp();
                let onehot = if j == a { 1.0 } else { 0.0 };
                // dH/dz_j = -p_j (log p_j + H)
                let d_ent = -p * (l + ent);
                d_logits[[i, start + j]] = d_logp * (onehot - p) - cfg.entropy_coef * d_ent / nf;
            }
        }
        let err = values[[i, 0]] - batch.returns[i];
        parts.value_loss += err * err / nf;
        d_values[[i, 0]] = cfg.value_coef * 2.0 * err / nf;
    }
    parts.clip_fraction = clipped as f64 / nf;
    parts.total = parts.policy_loss + cfg.value_coef * parts.value_loss - cfg.entropy_coef * parts.entropy;
    let mut g_policy = params.policy.zeros_like();
    let mut g_value = params.value.zeros_like();
    params.policy.backward(&tape_p, d_logits, &mut g_policy);
    params.value.backward(&tape_v, d_values, &mut g_value);
    (parts, g_policy, g_value)
}

/// Total loss only, for finite-difference checks.
pub fn loss_only(params: &PolicyParams, batch: &Batch, cfg: &PpoConfig) -> f64 {
    loss_and_grad(params, batch, cfg).0.total
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

fn global_norm(nets: [&Mlp; 2]) -> f64 {
    nets.iter()
        .flat_map(|n| n.params())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// `epochs` shuffled passes of minibatch Adam steps over a finished buffer.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if buffer.is_empty() {
        return Err(Error::Contract("update on an empty buffer".into()));
    }
    if buffer.advantages.len() != buffer.len() || buffer.returns.len() != buffer.len() {
        return Err(Error::Contract("advantages not computed before the update".into()));
    }
    let mut idx: Vec<usize> = (0..buffer.len()).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(cfg.minibatch) {
            let batch = Batch::from_buffer(buffer, chunk);
            let (parts, mut g_pol, mut g_val) = loss_and_grad(params, &batch, cfg);
            if !parts.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss became {} (policy {}, value {}, entropy {})",
                    parts.total, parts.policy_loss, parts.value_loss, parts.entropy
                )));
            }
            if cfg.max_grad_norm > 0.0 {
                let norm = global_norm([&g_pol, &g_val]);
                if norm > cfg.max_grad_norm {
                    let s = cfg.max_grad_norm / norm;
                    g_pol.params_mut().for_each(|g| *g *= s);
                    g_val.params_mut().for_each(|g| *g *= s);
                }
            }
            params.adam_policy.step(&mut params.policy, &g_pol, cfg.learning_rate);
            params.adam_value.step(&mut params.value, &g_val, cfg.learning_rate);
            stats.policy_loss += parts.policy_loss;
            stats.value_loss += parts.value_loss;
            stats.entropy += parts.entropy;
            stats.clip_fraction += parts.clip_fraction;
            stats.minibatches += 1;
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters left the finite range".into()));
    }
    let m = stats.minibatches as f64;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.clip_fraction /= m;
    params.updates += 1;
    Ok(stats)
}

/// Values for a stack of observations (used when finishing rollouts).
pub fn values_of(params: &PolicyParams, obs: &[Vec<f64>]) -> Result<Array1<f64>> {
    let dim = params.obs_dim();
    let mut x = Array2::zeros((obs.len(), dim));
    for (r, o) in obs.iter().enumerate() {
        x.row_mut(r).assign(&ndarray::ArrayView1::from(&o[..]));
    }
    Ok(params.forward_batch(x.view())?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_arithmetic() {
        assert!((clipped_objective(1.5, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((clipped_objective(0.5, -1.0, 0.2) + 0.8).abs() < 1e-12);
        assert!(((-0.7f64 - -1.0).exp() - 1.34986).abs() < 1e-5);
    }

    #[test]
    fn gae_small_cases() {
        let (a, _) = compute_advantages(&[1.0], &[0.5], &[true], 0.0, 0.99, 0.95).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-15);
        let (_, r) = compute_advantages(&[1.0, 1.0], &[0.0, 0.0], &[false, true], 0.0, 0.9, 1.0).unwrap();
        assert!((r[0] - 1.9).abs() < 1e-15 && (r[1] - 1.0).abs() < 1e-15);
        assert!(compute_advantages(&[], &[], &[], 0.0, 0.9, 0.9).is_err());
    }

    #[test]
    fn normalization_moments() {
        let n = normalize_advantages(&[1.0, 2.0, 4.0, -3.0]);
        let mean = n.iter().sum::<f64>() / 4.0;
        let std = (n.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(mean.abs() < 1e-12 && (std - 1.0).abs() < 1e-12);
        assert_eq!(normalize_advantages(&[3.0]), vec![0.0]);
    }

    #[test]
    fn config_defaults_are_valid() {
        assert!(PpoConfig::default().validate("ppo").is_ok());
        let bad = PpoConfig {
            clip_eps: 1.0,
            ..PpoConfig::default()
        };
        assert!(bad.validate("ppo").is_err());
    }
}
