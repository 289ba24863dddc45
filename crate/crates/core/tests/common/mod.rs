#![allow(dead_code)]

use std::sync::OnceLock;

use autofocus_core::env::{Env, EnvConfig};
use autofocus_core::harness::calibrate::{calibrate, Calibration, CalibrationConfig};

pub fn calibration() -> &'static Calibration {
    static CAL: OnceLock<Calibration> = OnceLock::new();
    CAL.get_or_init(|| calibrate(&CalibrationConfig::default(), 1).unwrap())
}

pub fn env_with(config: EnvConfig) -> Env {
    Env::new(config, calibration().env_models(7)).unwrap()
}

pub fn env() -> Env {
    env_with(EnvConfig::default())
}
