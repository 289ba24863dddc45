//! Two-level episode: one exposure decision, then up to `horizon_low` lens
//! moves until the detector fires.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::Detector;
use crate::encoder::FeatureEncoder;
use crate::error::{Error, Result};
use crate::image::SensorImage;
use crate::iqa::{histogram256, obs_histogram, QualityModel, OBS_BINS};
use crate::optics::{
    blur_sigma, render, CameraState, LensState, Scene, DISTANCE_MAX_CM, DISTANCE_MIN_CM,
    EXPOSURE_STEPS, ILLUMINANCE_MAX_LX, ILLUMINANCE_MIN_LX, LENS_MAX, LENS_MIN,
};
use crate::scenes::{procedural_scene, BUNDLED_SCENE_SEEDS};

pub const HIGH_OBS_DIM: usize = crate::encoder::FEATURE_DIM + OBS_BINS + OBS_BINS + 1;
pub const LOW_OBS_DIM: usize = crate::encoder::FEATURE_DIM;
pub const COARSE_ACTIONS: usize = 24;
pub const FINE_ACTIONS: usize = 21;
/// Frame readout at 50 fps plus lens settling.
pub const AF_STEP_LATENCY_S: f64 = 0.020 + 0.080;
/// Crops are padded to this side before scoring so two scales exist.
pub const CROP_SCORE_SIDE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub horizon_low: usize,
    pub gamma: f64,
    pub noise_enabled: bool,
    pub seed: u64,
    pub distance_range: [f64; 2],
    pub illuminance_range: [f64; 2],
    /// Exposure index of the frame the exposure agent first sees.
    pub factory_exposure_index: usize,
    pub factory_lens: f64,
    /// Procedural scene seeds an episode draws from.
    pub scene_seeds: Vec<u64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon_low: 10,
            gamma: 0.99,
            noise_enabled: true,
            seed: 0,
            distance_range: [DISTANCE_MIN_CM, DISTANCE_MAX_CM],
            illuminance_range: [ILLUMINANCE_MIN_LX, ILLUMINANCE_MAX_LX],
            factory_exposure_index: 89,
            factory_lens: LENS_MIN,
            scene_seeds: BUNDLED_SCENE_SEEDS.to_vec(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon_low < 1 {
            return bad("env.horizon_low must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("env.gamma {} outside [0, 1]", self.gamma));
        }
        let [d0, d1] = self.distance_range;
        if !(DISTANCE_MIN_CM <= d0 && d0 <= d1 && d1 <= DISTANCE_MAX_CM) {
            return bad(format!("env.distance_range {:?} invalid", self.distance_range));
        }
        let [e0, e1] = self.illuminance_range;
        if !(ILLUMINANCE_MIN_LX <= e0 && e0 <= e1 && e1 <= ILLUMINANCE_MAX_LX) {
            return bad(format!("env.illuminance_range {:?} invalid", self.illuminance_range));
        }
        if self.factory_exposure_index >= EXPOSURE_STEPS {
            return bad(format!(
                "env.factory_exposure_index {} outside table",
                self.factory_exposure_index
            ));
        }
        if !(LENS_MIN..=LENS_MAX).contains(&self.factory_lens) {
            return bad(format!("env.factory_lens {} outside lens range", self.factory_lens));
        }
        if self.scene_seeds.is_empty() {
            return bad("env.scene_seeds is empty".into());
        }
        Ok(())
    }
}

/// Shared read-only models an environment consults.
#[derive(Clone)]
pub struct EnvModels {
    pub encoder: Arc<dyn FeatureEncoder>,
    pub quality: Arc<QualityModel>,
    pub detector: Arc<dyn Detector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighObs {
    pub features: Vec<f64>,
    pub val: [f64; OBS_BINS],
    /// Bin edges divided by 255.
    pub bin: [f64; OBS_BINS + 1],
}

impl HighObs {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(HIGH_OBS_DIM);
        v.extend_from_slice(&self.features);
        v.extend_from_slice(&self.val);
        v.extend_from_slice(&self.bin);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowObs {
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    AwaitHigh,
    AwaitLow,
    Done,
}

/// Latent conditions of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSpec {
    pub scene_seed: u64,
    pub distance_cm: f64,
    pub illuminance_lx: f64,
    pub noise_seed: u64,
}

impl EpisodeSpec {
    pub fn sample<R: Rng + ?Sized>(config: &EnvConfig, rng: &mut R) -> Self {
        let scene_seed = config.scene_seeds[rng.random_range(0..config.scene_seeds.len())];
        let [d0, d1] = config.distance_range;
        let [e0, e1] = config.illuminance_range;
        Self {
            scene_seed,
            distance_cm: if d1 > d0 { rng.random_range(d0..=d1) } else { d0 },
            illuminance_lx: if e1 > e0 { rng.random_range(e0..=e1) } else { e0 },
            noise_seed: rng.random(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub scene: Scene,
    pub lens: LensState,
    pub camera: CameraState,
    pub phase: Phase,
    pub low_steps_used: usize,
    pub last_frame: SensorImage,
    pub detected: bool,
    noise_rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighStep {
    pub obs: HighObs,
    pub reward: f64,
    pub handoff: bool,
    pub done: bool,
    pub peak: u8,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowStep {
    pub obs: LowObs,
    pub reward: f64,
    pub done: bool,
    pub detected: bool,
    pub lens: f64,
    pub sigma: f64,
    /// Crop score, present when detected.
    pub quality: Option<f64>,
}

/// One CSV row of an episode trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: u64,
    pub phase: &'static str,
    pub action: String,
    pub reward: f64,
    pub peak: Option<u8>,
    pub quality: Option<f64>,
    pub sigma: f64,
    pub detected: bool,
}

pub const TRACE_HEADER: &str = "episode,phase,action,reward,P,B,sigma,detected";

impl TraceRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode,
            self.phase,
            self.action,
            self.reward,
            opt(self.peak.map(|p| p.to_string())),
            opt(self.quality.map(|b| format!("{b:.6}"))),
            format_args!("{:.6}", self.sigma),
            self.detected as u8
        )
    }
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn reward_high(peak: u8, quality: f64) -> f64 {
    match peak {
        50..=150 => 1.0,
        25..=49 | 151..=175 => -0.01 * quality,
        _ => -1.0,
    }
}

pub fn reward_low(detected: bool, crop_quality: f64) -> f64 {
    if detected {
        -0.01 * crop_quality
    } else {
        -1.0
    }
}

pub fn handoff_allowed(peak: u8) -> bool {
    (25..=175).contains(&peak)
}

pub fn lens_from_action(coarse: usize, fine: usize) -> Result<f64> {
    if coarse >= COARSE_ACTIONS || fine >= FINE_ACTIONS {
        return Err(Error::Range(format!("lens action ({coarse}, {fine}) out of range")));
    }
    Ok((LENS_MIN + 2.0 * coarse as f64 + 0.1 * (fine as f64 - 10.0)).clamp(LENS_MIN, LENS_MAX))
}

/// Lens action closest to `control`.
pub fn action_for_lens(control: f64) -> (usize, usize) {
    let mut best = ((0, 0), f64::INFINITY);
    for c in 0..COARSE_ACTIONS {
        for f in 0..FINE_ACTIONS {
            let d = (lens_from_action(c, f).expect("in range") - control).abs();
            if d < best.1 {
                best = ((c, f), d);
            }
        }
    }
    best.0
}

pub struct Env {
    config: EnvConfig,
    models: EnvModels,
    base_scenes: Vec<(u64, Scene)>,
    state: Option<EpisodeState>,
}

impl Env {
    pub fn new(config: EnvConfig, models: EnvModels) -> Result<Self> {
        config.validate()?;
        let base_scenes = config
            .scene_seeds
            .iter()
            .map(|&s| Ok((s, procedural_scene(s, 170.0, 100.0)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            models,
            base_scenes,
            state: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn models(&self) -> &EnvModels {
        &self.models
    }

    pub fn state(&self) -> Option<&EpisodeState> {
        self.state.as_ref()
    }

    pub fn scene_for(&self, spec: &EpisodeSpec) -> Result<Scene> {
        let base = match self.base_scenes.iter().find(|(s, _)| *s == spec.scene_seed) {
            Some((_, scene)) => scene.clone(),
            None => procedural_scene(spec.scene_seed, 170.0, 100.0)?,
        };
        base.with_conditions(spec.distance_cm, spec.illuminance_lx)
    }

    fn start(&mut self, spec: &EpisodeSpec, exposure_index: usize, phase: Phase) -> Result<()> {
        let scene = self.scene_for(spec)?;
        let lens = LensState::new(self.config.factory_lens);
        let camera = CameraState::from_index(exposure_index)?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
        let frame = render(&scene, lens, camera, self.config.noise_enabled, noise_rng.random());
        self.state = Some(EpisodeState {
            scene,
            lens,
            camera,
            phase,
            low_steps_used: 0,
            last_frame: frame,
            detected: false,
            noise_rng,
        });
        Ok(())
    }

    /// Starts an episode at the factory state.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<HighObs> {
        let spec = EpisodeSpec::sample(&self.config, rng);
        self.reset_with(&spec)
    }

    pub fn reset_with(&mut self, spec: &EpisodeSpec) -> Result<HighObs> {
        self.start(spec, self.config.factory_exposure_index, Phase::AwaitHigh)?;
        Ok(self.high_obs())
    }

    /// Starts an episode with the exposure already fixed, skipping the
    /// exposure agent. Used when training the focus agent alone.
    pub fn reset_for_low(&mut self, spec: &EpisodeSpec, exposure_index: usize) -> Result<LowObs> {
        self.start(spec, exposure_index, Phase::AwaitLow)?;
        Ok(self.low_obs())
    }

    fn state_mut(&mut self, expected: Phase) -> Result<&mut EpisodeState> {
        let st = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Protocol("no episode in progress".into()))?;
        if st.phase != expected {
            return Err(Error::Protocol(format!(
                "expected phase {expected:?}, episode is in {:?}",
                st.phase
            )));
        }
        Ok(st)
    }

    fn render_current(&mut self) {
        let noise = self.config.noise_enabled;
        let st = self.state.as_mut().expect("episode in progress");
        let seed = st.noise_rng.random();
        st.last_frame = render(&st.scene, st.lens, st.camera, noise, seed);
    }

    pub fn high_obs(&self) -> HighObs {
        let st = self.state.as_ref().expect("episode in progress");
        let h = obs_histogram(&st.last_frame);
        let mut bin = h.bin;
        bin.iter_mut().for_each(|b| *b /= 255.0);
        HighObs {
            features: self.models.encoder.encode(&st.last_frame),
            val: h.val,
            bin,
        }
    }

    pub fn low_obs(&self) -> LowObs {
        let st = self.state.as_ref().expect("episode in progress");
        LowObs {
            features: self.models.encoder.encode(&st.last_frame),
        }
    }

    pub fn step_high(&mut self, action: usize) -> Result<HighStep> {
        let st = self.state_mut(Phase::AwaitHigh)?;
        st.camera = CameraState::from_index(action)?;
        self.render_current();
        let frame = &self.state.as_ref().expect("episode").last_frame;
        let peak = histogram256(frame).peak;
        let quality = self.models.quality.quality_score_or_worst(frame);
        let reward = reward_high(peak, quality);
        let handoff = handoff_allowed(peak);
        let st = self.state.as_mut().expect("episode");
        st.phase = if handoff { Phase::AwaitLow } else { Phase::Done };
        Ok(HighStep {
            obs: self.high_obs(),
            reward,
            handoff,
            done: !handoff,
            peak,
            quality,
        })
    }

    pub fn step_low(&mut self, coarse: usize, fine: usize) -> Result<LowStep> {
        let lens = lens_from_action(coarse, fine)?;
        let horizon = self.config.horizon_low;
        let st = self.state_mut(Phase::AwaitLow)?;
        st.lens.set(lens);
        st.low_steps_used += 1;
        self.render_current();
        let st = self.state.as_ref().expect("episode");
        let box_ = st.scene.object_box();
        let found = self.models.detector.detect(&st.last_frame, box_)?;
        let sigma = blur_sigma(st.lens, st.scene.f_star());
        let (detected, quality) = match found {
            Some(r) => {
                let crop = st.last_frame.crop(r)?.zero_pad_to(CROP_SCORE_SIDE, CROP_SCORE_SIDE);
                (true, Some(self.models.quality.quality_score_or_worst(&crop)))
            }
            None => (false, None),
        };
        let reward = reward_low(detected, quality.unwrap_or(100.0));
        let st = self.state.as_mut().expect("episode");
        let done = detected || st.low_steps_used >= horizon;
        st.detected = detected;
        if done {
            st.phase = Phase::Done;
        }
        Ok(LowStep {
            obs: self.low_obs(),
            reward,
            done,
            detected,
            lens,
            sigma,
            quality,
        })
    }

    /// Moves the lens and renders without consuming a focus-agent step or
    /// running the detector. Baselines drive the lens through this.
    pub fn probe_lens(&mut self, control: f64) -> Result<&SensorImage> {
        let st = self.state_mut(Phase::AwaitLow)?;
        st.lens.set(control);
        self.render_current();
        Ok(&self.state.as_ref().expect("episode").last_frame)
    }

    /// Runs the detector on the current frame.
    pub fn detect_current(&self) -> Result<bool> {
        let st = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Protocol("no episode in progress".into()))?;
        Ok(self
            .models
            .detector
            .detect(&st.last_frame, st.scene.object_box())?
            .is_some())
    }

    /// Whether some exposure that hands off, combined with the lens action
    /// nearest focus, is detected with noise off. Detection is monotone in
    /// blur, so the nearest action is the only one worth checking.
    pub fn is_solvable(&self, spec: &EpisodeSpec) -> Result<bool> {
        let scene = self.scene_for(spec)?;
        let (c, f) = action_for_lens(scene.f_star());
        let lens = LensState::new(lens_from_action(c, f)?);
        for idx in 0..EXPOSURE_STEPS {
            let camera = CameraState::from_index(idx)?;
            let peak_frame = render(&scene, LensState::new(self.config.factory_lens), camera, false, 0);
            if !handoff_allowed(histogram256(&peak_frame).peak) {
                continue;
            }
            let frame = render(&scene, lens, camera, false, 0);
            if self.models.detector.detect(&frame, scene.object_box())?.is_some() {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_tables() {
        assert_eq!(reward_high(100, 80.0), 1.0);
        assert!((reward_high(30, 40.0) + 0.4).abs() < 1e-12);
        assert_eq!(reward_high(10, 0.0), -1.0);
        assert_eq!(reward_high(50, 100.0), 1.0);
        assert_eq!(reward_high(150, 100.0), 1.0);
        assert_eq!(reward_high(151, 40.0), -0.4);
        assert_eq!(reward_high(176, 0.0), -1.0);
        assert_eq!(reward_low(false, 0.0), -1.0);
        assert_eq!(reward_low(true, 25.0), -0.25);
        assert_eq!(reward_low(true, 0.0), 0.0);
    }

    #[test]
    fn lens_actions() {
        assert_eq!(lens_from_action(0, 10).unwrap(), 24.0);
        assert_eq!(lens_from_action(23, 10).unwrap(), 70.0);
        assert_eq!(lens_from_action(12, 0).unwrap(), 47.0);
        assert_eq!(lens_from_action(0, 0).unwrap(), 24.0);
        assert_eq!(lens_from_action(23, 20).unwrap(), 70.0);
        assert!(lens_from_action(24, 0).is_err());
        assert!(lens_from_action(0, 21).is_err());
        let (c, f) = action_for_lens(47.3);
        assert!((lens_from_action(c, f).unwrap() - 47.3).abs() < 0.051);
    }

    #[test]
    fn config_validation() {
        assert!(EnvConfig::default().validate().is_ok());
        let bad = EnvConfig {
            horizon_low: 0,
            ..EnvConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = EnvConfig {
            illuminance_range: [10.0, 300.0],
            ..EnvConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_row_format() {
        let row = TraceRow {
            episode: 3,
            phase: "low",
            action: "12:10".into(),
            reward: -1.0,
            peak: None,
            quality: None,
            sigma: 0.5,
            detected: false,
        };
        assert_eq!(row.to_csv(), "3,low,12:10,-1,,,0.500000,0");
    }
}
