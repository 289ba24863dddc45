//! Run configuration file.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! anywhere are rejected.
//!
//! ```toml
//! seed = 0
//! encoder_seed = 7
//! out_dir = "out"
//! # checkpoint written by `calibrate`; omit to calibrate in-process
//! # quality_model = "out/calibration.dash"
//!
//! [env]          # horizon_low, noise_enabled, factory_exposure_index, ...
//! [calibration]  # pristine_scenes, pristine_seed_base, detector_scene_seeds
//! [detector]     # program = "...", args = [...] for an external detector
//! [train]        # stage, exposure_episodes, af_steps, hierarchical_steps
//! [train.curriculum]
//! [train.high]   # clip_eps, gamma, gae_lambda, epochs, minibatch, ...
//! [train.low]
//! [eval]         # episodes, seed
//! [analyze]      # illuminance_lx, exposure_offsets, lens_offsets, ...
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::calibrate::CalibrationConfig;
use crate::bench::AnalyzeConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::rl::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// External detector executable; the calibrated oracle is used when absent.
    pub program: Option<PathBuf>,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            seed: 1_000_003,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub encoder_seed: u64,
    pub out_dir: PathBuf,
    pub quality_model: Option<PathBuf>,
    pub env: EnvConfig,
    pub calibration: CalibrationConfig,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub analyze: AnalyzeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            encoder_seed: 7,
            out_dir: PathBuf::from("out"),
            quality_model: None,
            env: EnvConfig::default(),
            calibration: CalibrationConfig::default(),
            detector: DetectorConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            analyze: AnalyzeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.calibration.validate()?;
        self.train.validate()?;
        self.analyze.validate()?;
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be positive".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("out_dir is empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(RunConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(matches!(RunConfig::parse("sed = 1"), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::parse("[train.low]\nclip = 0.1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("[env]\nhorizon_low = 0"),
            Err(Error::Config(_))
        ));
        let cfg = RunConfig::parse("[train]\nstage = \"single-agent-AF\"").unwrap();
        assert_eq!(cfg.train.stage, crate::rl::train::Stage::SingleAgentAf);
    }
}
