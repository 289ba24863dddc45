//! Fixed random convolutional encoder producing the 2048-d observation vector.
//!
//! Three stages of 5×5 stride-2 convolution (8, 16, 32 filters) with
//! rectification and 2×2 max pooling, global average and max pooling, then a
//! fixed projection with unit-norm rows. No biases anywhere, so the encoding
//! is positively homogeneous in image brightness until the sensor clips.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::harness::checkpoint::Block;
use crate::image::SensorImage;

pub const FEATURE_DIM: usize = 2048;
pub const MIN_INPUT_SIDE: usize = 64;
const KERNEL: usize = 5;
const BANKS: [usize; 3] = [8, 16, 32];
const POOLED_DIM: usize = 2 * 32;

/// Anything that maps a frame to a fixed-length feature vector.
pub trait FeatureEncoder: Send + Sync {
    fn encode(&self, image: &SensorImage) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
struct ConvBank {
    out_ch: usize,
    in_ch: usize,
    /// `[out][in][ky][kx]`
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    seed: u64,
    banks: Vec<ConvBank>,
    /// `FEATURE_DIM × POOLED_DIM`, row-major.
    projection: Vec<f64>,
}

/// Gram–Schmidt on the rows of a random Gaussian matrix.
fn orthonormal_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(rows <= cols);
    let mut m: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    for i in 0..rows {
        for j in 0..i {
            let dot: f64 = (0..cols).map(|k| m[i * cols + k] * m[j * cols + k]).sum();
            for k in 0..cols {
                m[i * cols + k] -= dot * m[j * cols + k];
            }
        }
        let norm: f64 = (0..cols).map(|k| m[i * cols + k].powi(2)).sum::<f64>().sqrt();
        for k in 0..cols {
            m[i * cols + k] /= norm;
        }
    }
    m
}

pub fn init_encoder(seed: u64) -> EncoderParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut banks = Vec::with_capacity(BANKS.len());
    let mut in_ch = 1;
    for &out_ch in &BANKS {
        let weights = orthonormal_rows(out_ch, in_ch * KERNEL * KERNEL, &mut rng);
        banks.push(ConvBank {
            out_ch,
            in_ch,
            weights,
        });
        in_ch = out_ch;
    }
    let mut projection: Vec<f64> = (0..FEATURE_DIM * POOLED_DIM)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    for row in projection.chunks_mut(POOLED_DIM) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    EncoderParams {
        seed,
        banks,
        projection,
    }
}

struct FeatureMap {
    ch: usize,
    w: usize,
    h: usize,
    data: Vec<f64>,
}

/// 5×5 stride-2 convolution with replicated borders, followed by ReLU.
fn conv_relu(input: &FeatureMap, bank: &ConvBank) -> FeatureMap {
    let (ow, oh) = (input.w.div_ceil(2), input.h.div_ceil(2));
    let half = KERNEL / 2;
    let (pw, ph) = (input.w + 2 * half, input.h + 2 * half);
    let mut padded = vec![0.0; input.ch * pw * ph];
    for c in 0..input.ch {
        for py in 0..ph {
            let y = py.saturating_sub(half).min(input.h - 1);
            for px in 0..pw {
                let x = px.saturating_sub(half).min(input.w - 1);
                padded[(c * ph + py) * pw + px] = input.data[(c * input.h + y) * input.w + x];
            }
        }
    }
    let mut patch = vec![0.0; input.ch * KERNEL * KERNEL];
    let mut data = vec![0.0; bank.out_ch * ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut k = 0;
            for c in 0..input.ch {
                for ky in 0..KERNEL {
                    let start = (c * ph + 2 * oy + ky) * pw + 2 * ox;
                    patch[k..k + KERNEL].copy_from_slice(&padded[start..start + KERNEL]);
                    k += KERNEL;
                }
            }
            for (o, filt) in bank.weights.chunks(patch.len()).enumerate() {
                let v: f64 = filt.iter().zip(&patch).map(|(w, p)| w * p).sum();
                data[(o * oh + oy) * ow + ox] = v.max(0.0);
            }
        }
    }
    FeatureMap {
        ch: bank.out_ch,
        w: ow,
        h: oh,
        data,
    }
}

fn max_pool2(input: &FeatureMap) -> FeatureMap {
    let (ow, oh) = ((input.w / 2).max(1), (input.h / 2).max(1));
    let mut data = vec![0.0; input.ch * ow * oh];
    for c in 0..input.ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (x, y) = ((2 * ox + dx).min(input.w - 1), (2 * oy + dy).min(input.h - 1));
                        m = m.max(input.data[(c * input.h + y) * input.w + x]);
                    }
                }
                data[(c * oh + oy) * ow + ox] = m;
            }
        }
    }
    FeatureMap {
        ch: input.ch,
        w: ow,
        h: oh,
        data,
    }
}

impl EncoderParams {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projection_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.projection.chunks(POOLED_DIM)
    }

    /// Global average and max pooled descriptor (64 values) before projection.
    pub fn pooled(&self, image: &SensorImage) -> Vec<f64> {
        let img = image.replicate_pad_to(MIN_INPUT_SIDE, MIN_INPUT_SIDE);
        let mut map = FeatureMap {
            ch: 1,
            w: img.width(),
            h: img.height(),
            data: img.pixels().iter().map(|&p| p as f64 / 255.0).collect(),
        };
        for bank in &self.banks {
            map = max_pool2(&conv_relu(&map, bank));
        }
        let n = (map.w * map.h) as f64;
        let mut pooled = Vec::with_capacity(POOLED_DIM);
        for c in map.data.chunks(map.w * map.h) {
            pooled.push(c.iter().sum::<f64>() / n);
        }
        for c in map.data.chunks(map.w * map.h) {
            pooled.push(c.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        pooled
    }

    /// Weights as named blocks, for use as an external encoder weight file.
    pub fn to_blocks(&self) -> Vec<Block> {
        let mut blocks: Vec<Block> = self
            .banks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                Block::from_f64(
                    format!("encoder.conv{i}"),
                    vec![b.out_ch as u32, b.in_ch as u32, KERNEL as u32, KERNEL as u32],
                    &b.weights,
                )
            })
            .collect();
        blocks.push(Block::from_f64(
            "encoder.projection",
            vec![FEATURE_DIM as u32, POOLED_DIM as u32],
            &self.projection,
        ));
        blocks
    }

    /// Rebuilds an encoder from weight blocks written by [`to_blocks`](Self::to_blocks).
    pub fn from_blocks(blocks: &[Block]) -> Result<Self> {
        let find = |name: &str| {
            blocks
                .iter()
                .find(|b| b.name == name)
                .ok_or_else(|| Error::MissingBlock(name.to_owned()))
        };
        let mut banks = Vec::new();
        let mut in_ch = 1;
        for (i, &out_ch) in BANKS.iter().enumerate() {
            let b = find(&format!("encoder.conv{i}"))?;
            let want = [out_ch as u32, in_ch as u32, KERNEL as u32, KERNEL as u32];
            if b.dims != want {
                return Err(Error::Contract(format!(
                    "block {} has dims {:?}, expected {want:?}",
                    b.name, b.dims
                )));
            }
            banks.push(ConvBank {
                out_ch,
                in_ch,
                weights: b.to_f64(),
            });
            in_ch = out_ch;
        }
        let p = find("encoder.projection")?;
        if p.dims != [FEATURE_DIM as u32, POOLED_DIM as u32] {
            return Err(Error::Contract(format!(
                "projection block has dims {:?}",
                p.dims
            )));
        }
        Ok(Self {
            seed: 0,
            banks,
            projection: p.to_f64(),
        })
    }
}

impl FeatureEncoder for EncoderParams {
    fn encode(&self, image: &SensorImage) -> Vec<f64> {
        let pooled = self.pooled(image);
        self.projection
            .chunks(POOLED_DIM)
            .map(|row| row.iter().zip(&pooled).map(|(w, p)| w * p).sum())
            .collect()
    }
}

pub fn encode(params: &EncoderParams, image: &SensorImage) -> Vec<f64> {
    params.encode(image)
}
