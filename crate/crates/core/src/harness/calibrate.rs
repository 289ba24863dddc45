//! Fits the quality model and detector thresholds from generated frames.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{
    calibrate_detector, well_exposed_index, DetectorThresholds, OracleDetector,
    CALIBRATION_PEAK_TARGET, MIN_CALIBRATION_SCENES,
};
use crate::encoder::init_encoder;
use crate::env::{EnvModels, CROP_SCORE_SIDE};
use crate::error::{Error, Result};
use crate::image::SensorImage;
use crate::iqa::{fit_pristine, QualityModel, MIN_PRISTINE_IMAGES};
use crate::optics::{exposure_value, render_with_sigma, ILLUMINANCE_MAX_LX, ILLUMINANCE_MIN_LX};
use crate::scenes::{procedural_scene, BUNDLED_SCENE_SEEDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Scenes in the pristine corpus; each contributes a frame and a crop.
    pub pristine_scenes: usize,
    /// First procedural seed of the pristine corpus.
    pub pristine_seed_base: u64,
    /// Scenes the detector thresholds are taken from.
    pub detector_scene_seeds: Vec<u64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            pristine_scenes: 100,
            pristine_seed_base: 1000,
            detector_scene_seeds: BUNDLED_SCENE_SEEDS.to_vec(),
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if 2 * self.pristine_scenes < MIN_PRISTINE_IMAGES {
            return Err(Error::Config(format!(
                "calibration.pristine_scenes must be at least {}",
                MIN_PRISTINE_IMAGES.div_ceil(2)
            )));
        }
        if self.detector_scene_seeds.len() < MIN_CALIBRATION_SCENES {
            return Err(Error::Config(format!(
                "calibration.detector_scene_seeds needs at least {MIN_CALIBRATION_SCENES} seeds"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub quality: QualityModel,
    pub thresholds: DetectorThresholds,
}

/// In-focus, well-exposed, noisy frames of procedural scenes under random
/// light, each followed by its object crop padded the way the focus reward
/// pads it. Deterministic in `seed`.
pub fn pristine_corpus(scenes: usize, seed_base: u64, seed: u64) -> Result<Vec<SensorImage>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::with_capacity(2 * scenes);
    for k in 0..scenes as u64 {
        let lux = rng.random_range(ILLUMINANCE_MIN_LX..=ILLUMINANCE_MAX_LX);
        let scene = procedural_scene(seed_base + k, 170.0, lux)?;
        let idx = well_exposed_index(&scene, CALIBRATION_PEAK_TARGET);
        let frame = render_with_sigma(&scene, 0.0, exposure_value(idx)?, true, rng.random());
        let crop = frame
            .crop(scene.object_box())?
            .zero_pad_to(CROP_SCORE_SIDE, CROP_SCORE_SIDE);
        corpus.push(frame);
        corpus.push(crop);
    }
    Ok(corpus)
}

pub fn calibrate(config: &CalibrationConfig, seed: u64) -> Result<Calibration> {
    config.validate()?;
    let corpus = pristine_corpus(config.pristine_scenes, config.pristine_seed_base, seed)?;
    let quality = fit_pristine(&corpus)?;
    let scenes = config
        .detector_scene_seeds
        .iter()
        .map(|&s| procedural_scene(s, 170.0, 100.0))
        .collect::<Result<Vec<_>>>()?;
    let thresholds = calibrate_detector(&scenes)?;
    Ok(Calibration {
        quality,
        thresholds,
    })
}

impl Calibration {
    /// Environment models built from this calibration and a fresh encoder.
    pub fn env_models(&self, encoder_seed: u64) -> EnvModels {
        EnvModels {
            encoder: Arc::new(init_encoder(encoder_seed)),
            quality: Arc::new(self.quality.clone()),
            detector: Arc::new(OracleDetector(self.thresholds)),
        }
    }
}
