//! Deterministic training schedule over object distance and illuminance.
//!
//! Illuminance walks a triangle wave 13 → 300 → 13 lx in 10 lx steps; each
//! full wave the object moves to the next position on the distance grid. The
//! schedule advances once every `period` episodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{DISTANCE_MAX_CM, DISTANCE_MIN_CM, ILLUMINANCE_MAX_LX, ILLUMINANCE_MIN_LX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    /// Episodes spent at each schedule position.
    pub period: usize,
    pub distance_step_cm: f64,
    pub illuminance_step_lx: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            period: 1,
            distance_step_cm: 5.0,
            illuminance_step_lx: 10.0,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::Config("curriculum.period must be positive".into()));
        }
        let span_d = DISTANCE_MAX_CM - DISTANCE_MIN_CM;
        if !(self.distance_step_cm > 0.0 && self.distance_step_cm <= span_d) {
            return Err(Error::Config("curriculum.distance_step_cm out of range".into()));
        }
        let span_e = ILLUMINANCE_MAX_LX - ILLUMINANCE_MIN_LX;
        if !(self.illuminance_step_lx > 0.0 && self.illuminance_step_lx <= span_e) {
            return Err(Error::Config("curriculum.illuminance_step_lx out of range".into()));
        }
        Ok(())
    }

    /// Distance grid from the near to the far limit, far limit included.
    pub fn distances(&self) -> Vec<f64> {
        grid(DISTANCE_MIN_CM, DISTANCE_MAX_CM, self.distance_step_cm)
    }

    /// One full illuminance triangle wave (ascending then descending,
    /// endpoints not repeated).
    pub fn illuminance_wave(&self) -> Vec<f64> {
        let up = grid(ILLUMINANCE_MIN_LX, ILLUMINANCE_MAX_LX, self.illuminance_step_lx);
        let mut wave = up.clone();
        if up.len() > 2 {
            wave.extend(up[1..up.len() - 1].iter().rev());
        }
        wave
    }

    /// Number of episodes after which the schedule repeats.
    pub fn period_episodes(&self) -> usize {
        self.period * self.illuminance_wave().len() * self.distances().len()
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut k = 0;
    loop {
        let x = lo + step * k as f64;
        if x >= hi - 1e-9 {
            v.push(hi);
            break;
        }
        v.push(x);
        k += 1;
    }
    v
}

/// `(distance_cm, illuminance_lx)` for episode `step_index`.
pub fn curriculum(config: &CurriculumConfig, step_index: usize) -> (f64, f64) {
    let wave = config.illuminance_wave();
    let distances = config.distances();
    let s = step_index / config.period;
    let lux = wave[s % wave.len()];
    let dist = distances[(s / wave.len()) % distances.len()];
    (dist, lux)
}
