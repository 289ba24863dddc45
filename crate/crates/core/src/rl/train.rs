//! Rollout collection and the staged / joint training loops.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{sample_action, PolicyParams};
use super::ppo::{ppo_update, PpoConfig, RolloutBuffer, Transition, UpdateStats};
use crate::bench::auto_exposure_baseline;
use crate::env::{Env, EpisodeSpec, COARSE_ACTIONS, FINE_ACTIONS, HIGH_OBS_DIM, LOW_OBS_DIM};
use crate::error::{Error, Result};
use crate::harness::curriculum::{curriculum, CurriculumConfig};
use crate::optics::EXPOSURE_STEPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "single-agent-exposure")]
    SingleAgentExposure,
    #[serde(rename = "single-agent-AF")]
    SingleAgentAf,
    #[serde(rename = "hierarchical")]
    Hierarchical,
    /// Exposure alone, then focus alone, then both together.
    #[serde(rename = "staged")]
    Staged,
}

impl Stage {
    pub const NAMES: [&'static str; 4] =
        ["single-agent-exposure", "single-agent-AF", "hierarchical", "staged"];

    pub fn name(self) -> &'static str {
        match self {
            Stage::SingleAgentExposure => Self::NAMES[0],
            Stage::SingleAgentAf => Self::NAMES[1],
            Stage::Hierarchical => Self::NAMES[2],
            Stage::Staged => Self::NAMES[3],
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-agent-exposure" => Ok(Stage::SingleAgentExposure),
            "single-agent-AF" | "single-agent-af" => Ok(Stage::SingleAgentAf),
            "hierarchical" => Ok(Stage::Hierarchical),
            "staged" => Ok(Stage::Staged),
            other => Err(Error::Config(format!(
                "unknown stage `{other}`, expected one of {:?}",
                Stage::NAMES
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub stage: Stage,
    /// Exposure-agent episodes in the exposure-only stage.
    pub exposure_episodes: usize,
    /// Focus-agent steps in the focus-only stage.
    pub af_steps: usize,
    /// Focus-agent steps in the joint stage.
    pub hierarchical_steps: usize,
    pub curriculum: CurriculumConfig,
    pub high: PpoConfig,
    pub low: PpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Staged,
            exposure_episodes: 2048,
            af_steps: 61_440,
            hierarchical_steps: 10_240,
            curriculum: CurriculumConfig::default(),
            // one transition per episode, so a shorter rollout keeps the
            // number of exposure updates comparable
            high: PpoConfig {
                rollout: 512,
                ..PpoConfig::default()
            },
            low: PpoConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.curriculum.validate()?;
        self.high.validate("train.high")?;
        self.low.validate("train.low")?;
        let uses = |s: Stage| self.stage == s || self.stage == Stage::Staged;
        for (used, value, key) in [
            (uses(Stage::SingleAgentExposure), self.exposure_episodes, "exposure_episodes"),
            (uses(Stage::SingleAgentAf), self.af_steps, "af_steps"),
            (uses(Stage::Hierarchical), self.hierarchical_steps, "hierarchical_steps"),
        ] {
            if used && value == 0 {
                return Err(Error::Config(format!("train.{key} must be positive for stage {}", self.stage.name())));
            }
        }
        Ok(())
    }

    /// Upper bound on focus-agent steps for the selected stage.
    pub fn low_step_budget(&self) -> usize {
        match self.stage {
            Stage::SingleAgentExposure => 0,
            Stage::SingleAgentAf => self.af_steps,
            Stage::Hierarchical => self.hierarchical_steps,
            Stage::Staged => self.af_steps + self.hierarchical_steps,
        }
    }
}

/// One learning-curve row, written after every update.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub update: usize,
    pub env_steps: u64,
    pub mean_r_high: Option<f64>,
    pub mean_r_low: Option<f64>,
    pub success_rate: f64,
    pub median_af_steps: Option<f64>,
    pub policy_loss_h: Option<f64>,
    pub policy_loss_l: Option<f64>,
    pub entropy_h: Option<f64>,
    pub entropy_l: Option<f64>,
}

pub const CURVE_HEADER: &str = "update,env_steps,mean_r_high,mean_r_low,success_rate,median_af_steps,policy_loss_h,policy_loss_l,entropy_h,entropy_l";

impl CurveRow {
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{:.6},{},{},{},{},{}",
            self.update,
            self.env_steps,
            f(self.mean_r_high),
            f(self.mean_r_low),
            self.success_rate,
            f(self.median_af_steps),
            f(self.policy_loss_h),
            f(self.policy_loss_l),
            f(self.entropy_h),
            f(self.entropy_l)
        )
    }
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

pub struct TrainOutput {
    pub high: PolicyParams,
    pub low: PolicyParams,
    pub curve: Vec<CurveRow>,
    pub low_steps: u64,
}

pub fn new_high_policy(cfg: &PpoConfig, seed: u64) -> PolicyParams {
    PolicyParams::new(HIGH_OBS_DIM, &cfg.hidden, &[EXPOSURE_STEPS], seed)
}

pub fn new_low_policy(cfg: &PpoConfig, seed: u64) -> PolicyParams {
    PolicyParams::new(LOW_OBS_DIM, &cfg.hidden, &[COARSE_ACTIONS, FINE_ACTIONS], seed)
}

/// Per-window episode bookkeeping.
#[derive(Default)]
struct Window {
    r_high: Vec<f64>,
    r_low: Vec<f64>,
    successes: usize,
    episodes: usize,
    af_steps: Vec<f64>,
}

pub struct Trainer<'a> {
    env: &'a mut Env,
    cfg: TrainConfig,
    pub high: PolicyParams,
    pub low: PolicyParams,
    rng: ChaCha8Rng,
    episode: usize,
    env_steps: u64,
    low_steps: u64,
    curve: Vec<CurveRow>,
    /// Print each curve row to stderr.
    pub verbose: bool,
}

impl<'a> Trainer<'a> {
    pub fn new(env: &'a mut Env, cfg: TrainConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let high = new_high_policy(&cfg.high, rng.random());
        let low = new_low_policy(&cfg.low, rng.random());
        Ok(Self {
            env,
            cfg,
            high,
            low,
            rng,
            episode: 0,
            env_steps: 0,
            low_steps: 0,
            curve: Vec::new(),
            verbose: false,
        })
    }

    /// Continues from existing policies instead of fresh ones.
    pub fn with_policies(mut self, high: PolicyParams, low: PolicyParams) -> Self {
        self.high = high;
        self.low = low;
        self
    }

    fn next_spec(&mut self) -> EpisodeSpec {
        let (distance_cm, illuminance_lx) = curriculum(&self.cfg.curriculum, self.episode);
        self.episode += 1;
        let seeds = &self.env.config().scene_seeds;
        let scene_seed = seeds[self.rng.random_range(0..seeds.len())];
        EpisodeSpec {
            scene_seed,
            distance_cm,
            illuminance_lx,
            noise_seed: self.rng.random(),
        }
    }

    pub fn run(mut self) -> Result<TrainOutput> {
        match self.cfg.stage {
            Stage::SingleAgentExposure => self.exposure_stage()?,
            Stage::SingleAgentAf => self.af_stage()?,
            Stage::Hierarchical => self.joint_stage()?,
            Stage::Staged => {
                self.exposure_stage()?;
                self.af_stage()?;
                self.joint_stage()?;
            }
        }
        Ok(TrainOutput {
            high: self.high,
            low: self.low,
            curve: self.curve,
            low_steps: self.low_steps,
        })
    }

    fn push_row(&mut self, w: &Window, high: Option<UpdateStats>, low: Option<UpdateStats>) {
        let mean = |v: &[f64]| (!v.is_empty()).then(|| crate::stats::mean(v));
        let row = CurveRow {
            update: self.curve.len(),
            env_steps: self.env_steps,
            mean_r_high: mean(&w.r_high),
            mean_r_low: mean(&w.r_low),
            success_rate: if w.episodes == 0 {
                0.0
            } else {
                w.successes as f64 / w.episodes as f64
            },
            median_af_steps: (!w.af_steps.is_empty()).then(|| crate::stats::median(&w.af_steps)),
            policy_loss_h: high.map(|s| s.policy_loss),
            policy_loss_l: low.map(|s| s.policy_loss),
            entropy_h: high.map(|s| s.entropy),
            entropy_l: low.map(|s| s.entropy),
        };
        if self.verbose {
            eprintln!("{}", row.to_csv());
        }
        self.curve.push(row);
    }

    fn high_act(&mut self, obs: Vec<f64>, buffer: &mut RolloutBuffer) -> Result<usize> {
        let (dists, value) = self.high.forward(&obs)?;
        let (a, log_prob) = sample_action(&dists, &mut self.rng);
        buffer.push(Transition {
            obs,
            actions: a.clone(),
            log_prob,
            reward: 0.0,
            value,
            done: true,
        });
        Ok(a[0])
    }

    /// Runs the focus agent until the episode ends. Returns (detected, steps).
    fn low_episode(
        &mut self,
        mut obs: Vec<f64>,
        buffer: &mut RolloutBuffer,
        w: &mut Window,
    ) -> Result<(bool, usize)> {
        let mut steps = 0;
        loop {
            let (dists, value) = self.low.forward(&obs)?;
            let (a, log_prob) = sample_action(&dists, &mut self.rng);
            let ls = self.env.step_low(a[0], a[1])?;
            steps += 1;
            self.env_steps += 1;
            self.low_steps += 1;
            w.r_low.push(ls.reward);
            buffer.push(Transition {
                obs,
                actions: a,
                log_prob,
                reward: ls.reward,
                value,
                done: ls.done,
            });
            if ls.done {
                let horizon = self.env.config().horizon_low;
                w.af_steps.push(if ls.detected { steps } else { horizon } as f64);
                return Ok((ls.detected, steps));
            }
            obs = ls.obs.features;
        }
    }

    fn update(
        params: &mut PolicyParams,
        buffer: &mut RolloutBuffer,
        cfg: &PpoConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<UpdateStats>> {
        if buffer.len() < 2 {
            return Ok(None);
        }
        buffer.finish(cfg.gamma, cfg.gae_lambda)?;
        let stats = ppo_update(params, buffer, cfg, rng)?;
        buffer.clear();
        Ok(Some(stats))
    }

    pub fn exposure_stage(&mut self) -> Result<()> {
        let budget = self.cfg.exposure_episodes;
        let mut done = 0;
        while done < budget {
            let mut buffer = RolloutBuffer::default();
            let mut w = Window::default();
            let n = self.cfg.high.rollout.min(budget - done);
            for _ in 0..n {
                let spec = self.next_spec();
                let obs = self.env.reset_with(&spec)?.to_vec();
                let a = self.high_act(obs, &mut buffer)?;
                let hs = self.env.step_high(a)?;
                self.env_steps += 1;
                buffer.transitions.last_mut().expect("pushed").reward = hs.reward;
                w.r_high.push(hs.reward);
                w.episodes += 1;
                if hs.reward == 1.0 {
                    w.successes += 1;
                }
            }
            done += n;
            let cfg = self.cfg.high.clone();
            let stats = Self::update(&mut self.high, &mut buffer, &cfg, &mut self.rng)?;
            self.push_row(&w, stats, None);
        }
        Ok(())
    }

    pub fn af_stage(&mut self) -> Result<()> {
        let budget = self.cfg.af_steps as u64;
        let start = self.low_steps;
        while self.low_steps - start < budget {
            let mut buffer = RolloutBuffer::default();
            let mut w = Window::default();
            let target = (self.cfg.low.rollout as u64).min(budget - (self.low_steps - start));
            while (buffer.len() as u64) < target {
                let spec = self.next_spec();
                let scene = self.env.scene_for(&spec)?;
                let ae = auto_exposure_baseline(&scene);
                let obs = self.env.reset_for_low(&spec, ae.index)?.features;
                let (detected, _) = self.low_episode(obs, &mut buffer, &mut w)?;
                w.episodes += 1;
                w.successes += detected as usize;
            }
            let cfg = self.cfg.low.clone();
            let stats = Self::update(&mut self.low, &mut buffer, &cfg, &mut self.rng)?;
            self.push_row(&w, None, stats);
        }
        Ok(())
    }

    pub fn joint_stage(&mut self) -> Result<()> {
        let budget = self.cfg.hierarchical_steps as u64;
        let start_low = self.low_steps;
        let mut episodes = 0u64;
        while self.low_steps - start_low < budget && episodes < budget {
            let mut high_buf = RolloutBuffer::default();
            let mut low_buf = RolloutBuffer::default();
            let mut w = Window::default();
            let target = (self.cfg.low.rollout as u64).min(budget - (self.low_steps - start_low));
            while (low_buf.len() as u64) < target
                && high_buf.len() < self.cfg.high.rollout
                && episodes < budget
            {
                let spec = self.next_spec();
                let obs = self.env.reset_with(&spec)?.to_vec();
                let a = self.high_act(obs, &mut high_buf)?;
                let hs = self.env.step_high(a)?;
                self.env_steps += 1;
                episodes += 1;
                high_buf.transitions.last_mut().expect("pushed").reward = hs.reward;
                w.r_high.push(hs.reward);
                w.episodes += 1;
                if hs.handoff {
                    let obs = self.env.low_obs().features;
                    let (detected, _) = self.low_episode(obs, &mut low_buf, &mut w)?;
                    w.successes += detected as usize;
                } else {
                    w.af_steps.push(self.env.config().horizon_low as f64);
                }
            }
            let (hc, lc) = (self.cfg.high.clone(), self.cfg.low.clone());
            let hs = Self::update(&mut self.high, &mut high_buf, &hc, &mut self.rng)?;
            let ls = Self::update(&mut self.low, &mut low_buf, &lc, &mut self.rng)?;
            self.push_row(&w, hs, ls);
        }
        Ok(())
    }
}
