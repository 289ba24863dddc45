//! What a training run persists: both agents, the encoder seed and the
//! calibrated quality model and detector thresholds.

use std::path::Path;

use super::calibrate::Calibration;
use super::checkpoint::{find_block, load_checkpoint, save_checkpoint, Block};
use crate::detect::DetectorThresholds;
use crate::error::{Error, Result};
use crate::iqa::{QualityModel, BRISQUE_DIM};
use crate::rl::policy::PolicyParams;

const HIGH: &str = "high";
const LOW: &str = "low";

pub fn calibration_blocks(cal: &Calibration) -> Vec<Block> {
    let d = BRISQUE_DIM as u32;
    vec![
        Block::from_f64("quality.mu", vec![d], cal.quality.mu()),
        Block::from_f64("quality.sigma", vec![d, d], cal.quality.sigma()),
        Block::from_f64("quality.tau", vec![], &[cal.quality.tau()]),
        Block::from_f64("detector.thresholds", vec![4], &cal.thresholds.to_vec()),
    ]
}

pub fn calibration_from_blocks(blocks: &[Block]) -> Result<Calibration> {
    let tau = find_block(blocks, "quality.tau")?.to_f64();
    let [tau] = tau[..] else {
        return Err(Error::Corrupt("quality.tau is not a scalar".into()));
    };
    let quality = QualityModel::new(
        find_block(blocks, "quality.mu")?.to_f64(),
        find_block(blocks, "quality.sigma")?.to_f64(),
        tau,
    )?;
    let thresholds = DetectorThresholds::from_slice(&find_block(blocks, "detector.thresholds")?.to_f64())?;
    Ok(Calibration {
        quality,
        thresholds,
    })
}

/// Reals are stored in single precision, so a bundle rebuilt from disk
/// holds the rounded values of the one that was saved.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub high: PolicyParams,
    pub low: PolicyParams,
    pub encoder_seed: u64,
    pub calibration: Calibration,
}

impl Bundle {
    pub fn to_blocks(&self) -> Vec<Block> {
        let mut blocks = self.high.to_blocks(HIGH);
        blocks.extend(self.low.to_blocks(LOW));
        blocks.push(Block::from_u64("encoder.seed", self.encoder_seed));
        blocks.extend(calibration_blocks(&self.calibration));
        blocks
    }

    pub fn from_blocks(blocks: &[Block]) -> Result<Self> {
        Ok(Self {
            high: PolicyParams::from_blocks(blocks, HIGH)?,
            low: PolicyParams::from_blocks(blocks, LOW)?,
            encoder_seed: find_block(blocks, "encoder.seed")?.to_u64()?,
            calibration: calibration_from_blocks(blocks)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.to_blocks())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_blocks(&load_checkpoint(path)?)
    }
}
