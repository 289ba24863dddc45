//! Factored categorical policy with a separate value network.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{Adam, Linear, Mlp};
use crate::error::{Error, Result};
use crate::harness::checkpoint::{find_block, Block};

pub const POLICY_OUTPUT_GAIN: f64 = 0.01;
pub const VALUE_OUTPUT_GAIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub heads: Vec<usize>,
    pub policy: Mlp,
    pub value: Mlp,
    pub adam_policy: Adam,
    pub adam_value: Adam,
    pub updates: u64,
}

impl PolicyParams {
    pub fn new(obs_dim: usize, hidden: &[usize], heads: &[usize], seed: u64) -> Self {
        assert!(!heads.is_empty() && heads.iter().all(|&h| h > 0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(heads.iter().sum());
        let policy = Mlp::new(&sizes, POLICY_OUTPUT_GAIN, &mut rng);
        *sizes.last_mut().expect("sizes") = 1;
        let value = Mlp::new(&sizes, VALUE_OUTPUT_GAIN, &mut rng);
        Self {
            heads: heads.to_vec(),
            adam_policy: Adam::new(&policy),
            adam_value: Adam::new(&value),
            policy,
            value,
            updates: 0,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.value.is_finite()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.obs_dim() {
            return Err(Error::Contract(format!(
                "observation has {dim} values, network expects {}",
                self.obs_dim()
            )));
        }
        Ok(())
    }

    /// Per-head probabilities and the value estimate for one observation.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<Vec<f64>>, f64)> {
        self.check_dim(obs.len())?;
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let logits = self.policy.predict(x);
        let value = self.value.predict(x)[[0, 0]];
        Ok((head_probs(&self.heads, logits.row(0)), value))
    }

    /// Logits (`n × Σheads`) and values for a batch.
    pub fn forward_batch(&self, obs: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_dim(obs.ncols())?;
        let logits = self.policy.predict(obs);
        let values = self.value.predict(obs).index_axis_move(Axis(1), 0);
        Ok((logits, values))
    }

    pub fn to_blocks(&self, prefix: &str) -> Vec<Block> {
        let mut blocks = vec![
            Block::from_f64(
                format!("{prefix}.heads"),
                vec![self.heads.len() as u32],
                &self.heads.iter().map(|&h| h as f64).collect::<Vec<_>>(),
            ),
            Block::from_u64(format!("{prefix}.updates"), self.updates),
            Block::from_u64(format!("{prefix}.adam_t"), self.adam_policy.t),
        ];
        let nets = [
            ("policy", &self.policy),
            ("value", &self.value),
            ("adam_m_policy", &self.adam_policy.m),
            ("adam_v_policy", &self.adam_policy.v),
            ("adam_m_value", &self.adam_value.m),
            ("adam_v_value", &self.adam_value.v),
        ];
        for (name, net) in nets {
            for (i, l) in net.layers.iter().enumerate() {
                blocks.push(Block::from_f64(
                    format!("{prefix}.{name}.{i}.w"),
                    vec![l.w.nrows() as u32, l.w.ncols() as u32],
                    l.w.as_slice().expect("standard layout"),
                ));
                blocks.push(Block::from_f64(
                    format!("{prefix}.{name}.{i}.b"),
                    vec![l.b.len() as u32],
                    l.b.as_slice().expect("contiguous"),
                ));
            }
        }
        blocks
    }

    pub fn from_blocks(blocks: &[Block], prefix: &str) -> Result<Self> {
        let heads: Vec<usize> = find_block(blocks, &format!("{prefix}.heads"))?
            .to_f64()
            .iter()
            .map(|&h| h as usize)
            .collect();
        if heads.is_empty() || heads.contains(&0) {
            return Err(Error::Corrupt(format!("{prefix}: bad head sizes {heads:?}")));
        }
        let updates = find_block(blocks, &format!("{prefix}.updates"))?.to_u64()?;
        let t = find_block(blocks, &format!("{prefix}.adam_t"))?.to_u64()?;
        let load = |name: &str| -> Result<Mlp> {
            let mut layers = Vec::new();
            loop {
                let i = layers.len();
                let Ok(w) = find_block(blocks, &format!("{prefix}.{name}.{i}.w")) else {
                    break;
                };
                let b = find_block(blocks, &format!("{prefix}.{name}.{i}.b"))?;
                let [rows, cols] = w.dims[..] else {
                    return Err(Error::Corrupt(format!("{}: expected rank 2", w.name)));
                };
                if b.dims != [cols] {
                    return Err(Error::Corrupt(format!("{}: bias shape mismatch", b.name)));
                }
                layers.push(Linear {
                    w: Array2::from_shape_vec((rows as usize, cols as usize), w.to_f64())
                        .map_err(|e| Error::Corrupt(format!("{}: {e}", w.name)))?,
                    b: Array1::from(b.to_f64()),
                });
            }
            if layers.is_empty() {
                return Err(Error::MissingBlock(format!("{prefix}.{name}.0.w")));
            }
            for pair in layers.windows(2) {
                if pair[0].w.ncols() != pair[1].w.nrows() {
                    return Err(Error::Corrupt(format!("{prefix}.{name}: layer widths disagree")));
                }
            }
            Ok(Mlp { layers })
        };
        let policy = load("policy")?;
        let value = load("value")?;
        if policy.output_dim() != heads.iter().sum::<usize>() || value.output_dim() != 1 {
            return Err(Error::Contract(format!("{prefix}: output widths do not match heads")));
        }
        let shaped = |net: Mlp, like: &Mlp, name: &str| -> Result<Mlp> {
            let same = net.layers.len() == like.layers.len()
                && net.layers.iter().zip(&like.layers).all(|(a, b)| a.w.dim() == b.w.dim());
            if same {
                Ok(net)
            } else {
                Err(Error::Corrupt(format!("{prefix}.{name}: optimizer state shape mismatch")))
            }
        };
        let adam_policy = Adam {
            m: shaped(load("adam_m_policy")?, &policy, "adam_m_policy")?,
            v: shaped(load("adam_v_policy")?, &policy, "adam_v_policy")?,
            t,
        };
        let adam_value = Adam {
            m: shaped(load("adam_m_value")?, &value, "adam_m_value")?,
            v: shaped(load("adam_v_value")?, &value, "adam_v_value")?,
            t,
        };
        Ok(Self {
            heads,
            policy,
            value,
            adam_policy,
            adam_value,
            updates,
        })
    }

    /// Copy with every real rounded to `f32`, as a checkpoint stores it.
    pub fn rounded_to_f32(&self) -> Self {
        let mut out = self.clone();
        for net in [
            &mut out.policy,
            &mut out.value,
            &mut out.adam_policy.m,
            &mut out.adam_policy.v,
            &mut out.adam_value.m,
            &mut out.adam_value.v,
        ] {
            net.params_mut().for_each(|p| *p = *p as f32 as f64);
        }
        out
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: ArrayView1<f64>) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn head_probs(heads: &[usize], logits: ArrayView1<f64>) -> Vec<Vec<f64>> {
    let mut start = 0;
    heads
        .iter()
        .map(|&h| {
            let lp = log_softmax(logits.slice(ndarray::s![start..start + h]));
            start += h;
            lp.into_iter().map(f64::exp).collect()
        })
        .collect()
}

/// Draws one index per head; returns the indices and the joint log-probability.
pub fn sample_action<R: Rng + ?Sized>(dists: &[Vec<f64>], rng: &mut R) -> (Vec<usize>, f64) {
    let mut actions = Vec::with_capacity(dists.len());
    let mut log_prob = 0.0;
    for p in dists {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = p.len() - 1;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                pick = i;
                break;
            }
        }
        // never return a zero-probability tail entry because of rounding
        while p[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        actions.push(pick);
        log_prob += p[pick].ln();
    }
    (actions, log_prob)
}

/// Most probable index per head; ties go to the lowest index.
pub fn greedy_action(dists: &[Vec<f64>]) -> Vec<usize> {
    dists
        .iter()
        .map(|p| {
            let mut best = 0;
            for (i, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_and_zero_value() {
        let mut p = PolicyParams::new(10, &[8, 8], &[146], 0);
        p.policy.fill(0.0);
        p.value.fill(0.0);
        let (d, v) = p.forward(&[0.3; 10]).unwrap();
        assert_eq!(v, 0.0);
        assert!(d[0].iter().all(|&q| (q - 1.0 / 146.0).abs() < 1e-15));
    }

    #[test]
    fn probabilities_normalized_and_dims_checked() {
        let p = PolicyParams::new(6, &[8, 8], &[24, 21], 3);
        let (d, v) = p.forward(&[0.1, -0.4, 2.0, 0.0, 1.0, 5.0]).unwrap();
        assert!(v.is_finite());
        assert_eq!(d.len(), 2);
        for h in &d {
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(h.iter().all(|&q| q > 0.0));
        }
        assert!(matches!(p.forward(&[0.0; 5]), Err(Error::Contract(_))));
    }

    #[test]
    fn sampling_degenerate_and_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut one_hot = vec![0.0; 6];
        one_hot[3] = 1.0;
        assert_eq!(sample_action(&[one_hot], &mut rng), (vec![3], 0.0));
        let d = vec![vec![1.0 / 24.0; 24], vec![1.0 / 21.0; 21]];
        let (_, lp) = sample_action(&d, &mut rng);
        assert!((lp + (24f64.ln() + 21f64.ln())).abs() < 1e-12);
        assert!((lp + 6.2226).abs() < 1e-4);
    }

    #[test]
    fn checkpoint_blocks_round_trip() {
        let p = PolicyParams::new(7, &[5, 4], &[3, 2], 9).rounded_to_f32();
        let back = PolicyParams::from_blocks(&p.to_blocks("low"), "low").unwrap();
        assert_eq!(back, p);
        assert!(PolicyParams::from_blocks(&p.to_blocks("low"), "high").is_err());
    }
}
