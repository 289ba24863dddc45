//! Classical baselines, policy evaluation and the feature-space analysis.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    Env, EpisodeSpec, EpisodeState, HighObs, LowObs, AF_STEP_LATENCY_S, COARSE_ACTIONS,
    FINE_ACTIONS,
};
use crate::error::{Error, Result};
use crate::image::SensorImage;
use crate::iqa::{histogram256, tenengrad, Histogram256};
use crate::optics::{exposure_value, render_with_sigma, Scene, EXPOSURE_STEPS, LENS_MAX, LENS_MIN};
use crate::rl::policy::{greedy_action, PolicyParams};

pub const SWEEP_STEP: f64 = 0.5;
pub const SWEEP_POSITIONS: usize = 93;
pub const HILLCLIMB_MIN_STEP: f64 = 0.25;
pub const AE_TARGET_MEAN: f64 = 110.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best_lens: f64,
    pub steps: usize,
    /// `(lens, full-frame Tenengrad)` for every grid position.
    pub profile: Vec<(f64, f64)>,
}

/// Contrast-detection sweep over the whole lens range.
pub fn sweep_af(env: &mut Env) -> Result<SweepResult> {
    let mut profile = Vec::with_capacity(SWEEP_POSITIONS);
    for k in 0..SWEEP_POSITIONS {
        let lens = LENS_MIN + SWEEP_STEP * k as f64;
        let frame = env.probe_lens(lens)?;
        profile.push((lens, tenengrad(frame, frame.full_rect())?));
    }
    let mut best = 0;
    for (i, p) in profile.iter().enumerate() {
        if p.1 > profile[best].1 {
            best = i;
        }
    }
    // small defocus can render identically, so take the middle of the plateau
    let run = profile[best..].iter().take_while(|p| p.1 == profile[best].1).count();
    let best_lens = profile[best + (run - 1) / 2].0;
    env.probe_lens(best_lens)?;
    Ok(SweepResult {
        best_lens,
        steps: SWEEP_POSITIONS,
        profile,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillclimbResult {
    pub lens: f64,
    pub steps: usize,
    pub detected: bool,
}

/// Greedy contrast climb from the current lens position. The step halves and
/// the direction flips whenever a move fails to raise full-frame Tenengrad.
pub fn hillclimb_af(env: &mut Env, step0: f64) -> Result<HillclimbResult> {
    let start = env
        .state()
        .ok_or_else(|| Error::Protocol("no episode in progress".into()))?
        .lens
        .control();
    let score = |f: &SensorImage| tenengrad(f, f.full_rect());
    let mut pos = start;
    let mut best = score(env.probe_lens(pos)?)?;
    let mut steps = 1;
    if env.detect_current()? {
        return Ok(HillclimbResult { lens: pos, steps, detected: true });
    }
    let mut dir = 1.0;
    let mut step = step0;
    while step >= HILLCLIMB_MIN_STEP {
        let cand = (pos + dir * step).clamp(LENS_MIN, LENS_MAX);
        let s = score(env.probe_lens(cand)?)?;
        steps += 1;
        if env.detect_current()? {
            return Ok(HillclimbResult { lens: cand, steps, detected: true });
        }
        if s > best && cand != pos {
            pos = cand;
            best = s;
        } else {
            dir = -dir;
            step /= 2.0;
        }
    }
    env.probe_lens(pos)?;
    Ok(HillclimbResult { lens: pos, steps, detected: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoExposure {
    pub index: usize,
    pub saturated: bool,
    pub mean: f64,
    pub histogram: Histogram256,
}

fn in_focus_mean(scene: &Scene, index: usize) -> f64 {
    let t = exposure_value(index).expect("index in table");
    render_with_sigma(scene, 0.0, t, false, 0).mean()
}

/// Mean-targeting camera auto exposure: smallest index whose in-focus,
/// noise-free frame reaches a mean of 110.
pub fn auto_exposure_baseline(scene: &Scene) -> AutoExposure {
    let last = EXPOSURE_STEPS - 1;
    let (index, saturated) = if in_focus_mean(scene, last) < AE_TARGET_MEAN {
        (last, true)
    } else {
        // the mean is non-decreasing in exposure, so bisect
        let (mut lo, mut hi) = (0, last);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if in_focus_mean(scene, mid) >= AE_TARGET_MEAN {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        (lo, false)
    };
    let frame = render_with_sigma(scene, 0.0, exposure_value(index).expect("in table"), false, 0);
    AutoExposure {
        index,
        saturated,
        mean: frame.mean(),
        histogram: histogram256(&frame),
    }
}

/// Something that picks actions for both levels.
pub trait Controller {
    fn high_action(&mut self, obs: &HighObs, state: &EpisodeState) -> Result<usize>;
    fn low_action(&mut self, obs: &LowObs, state: &EpisodeState) -> Result<(usize, usize)>;
}

/// Argmax of both trained policies.
pub struct GreedyPolicies<'a> {
    pub high: &'a PolicyParams,
    pub low: &'a PolicyParams,
}

impl GreedyPolicies<'_> {
    pub fn new<'a>(high: &'a PolicyParams, low: &'a PolicyParams) -> Result<GreedyPolicies<'a>> {
        if high.heads != [EXPOSURE_STEPS] {
            return Err(Error::Contract(format!("exposure policy has heads {:?}", high.heads)));
        }
        if low.heads != [COARSE_ACTIONS, FINE_ACTIONS] {
            return Err(Error::Contract(format!("focus policy has heads {:?}", low.heads)));
        }
        Ok(GreedyPolicies { high, low })
    }
}

impl Controller for GreedyPolicies<'_> {
    fn high_action(&mut self, obs: &HighObs, _: &EpisodeState) -> Result<usize> {
        Ok(greedy_action(&self.high.forward(&obs.to_vec())?.0)[0])
    }

    fn low_action(&mut self, obs: &LowObs, _: &EpisodeState) -> Result<(usize, usize)> {
        let a = greedy_action(&self.low.forward(&obs.features)?.0);
        Ok((a[0], a[1]))
    }
}

/// Uniformly random actions at both levels.
pub struct UniformController(pub ChaCha8Rng);

impl Controller for UniformController {
    fn high_action(&mut self, _: &HighObs, _: &EpisodeState) -> Result<usize> {
        Ok(self.0.random_range(0..EXPOSURE_STEPS))
    }

    fn low_action(&mut self, _: &LowObs, _: &EpisodeState) -> Result<(usize, usize)> {
        Ok((self.0.random_range(0..COARSE_ACTIONS), self.0.random_range(0..FINE_ACTIONS)))
    }
}

/// Cheating reference: reads the latent scene, exposes like the camera's
/// auto exposure and puts the lens at the action nearest focus.
pub struct OracleController;

impl Controller for OracleController {
    fn high_action(&mut self, _: &HighObs, state: &EpisodeState) -> Result<usize> {
        Ok(auto_exposure_baseline(&state.scene).index)
    }

    fn low_action(&mut self, _: &LowObs, state: &EpisodeState) -> Result<(usize, usize)> {
        Ok(crate::env::action_for_lens(state.scene.f_star()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub scene_seed: u64,
    pub distance_cm: f64,
    pub illuminance_lx: f64,
    pub exposure_index: usize,
    pub peak: u8,
    pub frame_mean: f64,
    pub handoff: bool,
    pub detected: bool,
    /// Focus steps to detection; failures count the full horizon.
    pub af_steps: usize,
    pub final_lens: f64,
    pub f_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub median_af_steps: f64,
    pub mean_af_time_s: f64,
    pub records: Vec<EpisodeRecord>,
}

pub const EVAL_HEADER: &str = "episode,scene_seed,distance_cm,illuminance_lx,exposure_index,P,frame_mean,handoff,detected,af_steps,final_lens,f_star";

impl EvalReport {
    pub fn from_records(records: Vec<EpisodeRecord>) -> Self {
        let n = records.len();
        let hits = records.iter().filter(|r| r.detected).count();
        let steps: Vec<f64> = records.iter().map(|r| r.af_steps as f64).collect();
        Self {
            episodes: n,
            success_rate: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            median_af_steps: if n == 0 { 0.0 } else { crate::stats::median(&steps) },
            mean_af_time_s: if n == 0 {
                0.0
            } else {
                crate::stats::mean(&steps) * AF_STEP_LATENCY_S
            },
            records,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVAL_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{},{},{:.4},{},{},{},{:.2},{:.2}",
                r.episode,
                r.scene_seed,
                r.distance_cm,
                r.illuminance_lx,
                r.exposure_index,
                r.peak,
                r.frame_mean,
                r.handoff as u8,
                r.detected as u8,
                r.af_steps,
                r.final_lens,
                r.f_star
            );
        }
        out
    }
}

/// Plays `episodes` fresh episodes drawn from `seed`.
pub fn evaluate(
    env: &mut Env,
    controller: &mut dyn Controller,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = env.config().horizon_low;
    let mut records = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let spec = EpisodeSpec::sample(env.config(), &mut rng);
        let obs = env.reset_with(&spec)?;
        let state = env.state().expect("reset");
        let action = controller.high_action(&obs, state)?;
        let hs = env.step_high(action)?;
        let frame_mean = env.state().expect("episode").last_frame.mean();
        let mut detected = false;
        if hs.handoff {
            let mut obs = env.low_obs();
            loop {
                let (c, f) = controller.low_action(&obs, env.state().expect("episode"))?;
                let ls = env.step_low(c, f)?;
                obs = ls.obs;
                if ls.done {
                    detected = ls.detected;
                    break;
                }
            }
        }
        let st = env.state().expect("episode");
        records.push(EpisodeRecord {
            episode,
            scene_seed: spec.scene_seed,
            distance_cm: spec.distance_cm,
            illuminance_lx: spec.illuminance_lx,
            exposure_index: action,
            peak: hs.peak,
            frame_mean,
            handoff: hs.handoff,
            detected,
            af_steps: if detected { st.low_steps_used } else { horizon },
            final_lens: st.lens.control(),
            f_star: st.scene.f_star(),
        });
    }
    Ok(EvalReport::from_records(records))
}

/// Sweep-baseline evaluation: auto exposure, then the full lens sweep.
pub fn evaluate_sweep(env: &mut Env, episodes: usize, seed: u64) -> Result<EvalReport> {
    evaluate_baseline(env, episodes, seed, |env| {
        let r = sweep_af(env)?;
        Ok((r.steps, env.detect_current()?, r.best_lens))
    })
}

/// Hill-climb baseline evaluation from the factory lens.
pub fn evaluate_hillclimb(env: &mut Env, episodes: usize, seed: u64) -> Result<EvalReport> {
    evaluate_baseline(env, episodes, seed, |env| {
        let r = hillclimb_af(env, 4.0)?;
        Ok((r.steps, r.detected, r.lens))
    })
}

fn evaluate_baseline(
    env: &mut Env,
    episodes: usize,
    seed: u64,
    mut focus: impl FnMut(&mut Env) -> Result<(usize, bool, f64)>,
) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let spec = EpisodeSpec::sample(env.config(), &mut rng);
        let scene = env.scene_for(&spec)?;
        let ae = auto_exposure_baseline(&scene);
        env.reset_with(&spec)?;
        let hs = env.step_high(ae.index)?;
        let frame_mean = env.state().expect("episode").last_frame.mean();
        let (steps, detected, lens) = if hs.handoff {
            focus(env)?
        } else {
            (0, false, env.config().factory_lens)
        };
        records.push(EpisodeRecord {
            episode,
            scene_seed: spec.scene_seed,
            distance_cm: spec.distance_cm,
            illuminance_lx: spec.illuminance_lx,
            exposure_index: ae.index,
            peak: hs.peak,
            frame_mean,
            handoff: hs.handoff,
            detected,
            af_steps: steps,
            final_lens: lens,
            f_star: scene.f_star(),
        });
    }
    Ok(EvalReport::from_records(records))
}

/// Pooled intensity histograms of the frames the exposure controller picks
/// and of the camera's auto exposure on the same episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramComparison {
    pub agent: [u64; 256],
    pub camera: [u64; 256],
    pub agent_median_mean: f64,
    pub camera_median_mean: f64,
}

pub fn compare_histograms(
    env: &mut Env,
    controller: &mut dyn Controller,
    episodes: usize,
    seed: u64,
) -> Result<HistogramComparison> {
    if episodes == 0 {
        return Err(Error::Degenerate("no episodes to compare".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = [0u64; 256];
    let mut camera = [0u64; 256];
    let (mut agent_means, mut camera_means) = (Vec::new(), Vec::new());
    for _ in 0..episodes {
        let spec = EpisodeSpec::sample(env.config(), &mut rng);
        let scene = env.scene_for(&spec)?;
        let obs = env.reset_with(&spec)?;
        let action = controller.high_action(&obs, env.state().expect("reset"))?;
        for (index, counts, means) in [
            (action, &mut agent, &mut agent_means),
            (auto_exposure_baseline(&scene).index, &mut camera, &mut camera_means),
        ] {
            env.reset_with(&spec)?;
            env.step_high(index)?;
            let frame = &env.state().expect("episode").last_frame;
            for (c, h) in counts.iter_mut().zip(histogram256(frame).counts) {
                *c += h;
            }
            means.push(frame.mean());
        }
    }
    Ok(HistogramComparison {
        agent,
        camera,
        agent_median_mean: crate::stats::median(&agent_means),
        camera_median_mean: crate::stats::median(&camera_means),
    })
}

impl HistogramComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("intensity,agent,camera\n");
        for v in 0..256 {
            let _ = writeln!(out, "{v},{},{}", self.agent[v], self.camera[v]);
        }
        out
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub iqa: String,
    pub report: Option<(f64, f64, f64)>,
}

/// Plain-text table: method, IQA type, success, median AF steps, simulated AF time.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<28} {:<18} {:>8} {:>9} {:>10}\n",
        "method", "IQA", "success", "AF steps", "AF time s"
    );
    for r in rows {
        match r.report {
            Some((success, steps, time)) => {
                let _ = writeln!(
                    out,
                    "{:<28} {:<18} {:>8.3} {:>9.1} {:>10.2}",
                    r.method, r.iqa, success, steps, time
                );
            }
            None => {
                let _ = writeln!(out, "{:<28} {:<18} {:>8} {:>9} {:>10}", r.method, r.iqa, "-", "-", "-");
            }
        }
    }
    out
}

impl EvalReport {
    pub fn summary_row(&self, method: &str, iqa: &str) -> SummaryRow {
        SummaryRow {
            method: method.into(),
            iqa: iqa.into(),
            report: Some((self.success_rate, self.median_af_steps, self.mean_af_time_s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca3 {
    /// `N × 3`, row-major.
    pub projections: Vec<[f64; 3]>,
    pub eigenvalues: [f64; 3],
}

pub const PCA_MIN_ITERATIONS: usize = 50;
pub const PCA_MAX_ITERATIONS: usize = 100_000;
pub const PCA_TOLERANCE: f64 = 1e-9;

/// Leading eigenpairs of a symmetric PSD matrix by power iteration with
/// deflation against the vectors already found.
fn power_eigs(m: &DMatrix<f64>, k: usize) -> Vec<(f64, nalgebra::DVector<f64>)> {
    let n = m.nrows();
    let scale = m.norm().max(1e-300);
    let mut found: Vec<(f64, nalgebra::DVector<f64>)> = Vec::with_capacity(k);
    for comp in 0..k.min(n) {
        // deterministic start with every coordinate populated
        let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + ((i * 7 + comp * 13) % 11) as f64 / 11.0);
        let deflate = |v: &mut nalgebra::DVector<f64>, found: &[(f64, nalgebra::DVector<f64>)]| {
            for (_, u) in found {
                let d = u.dot(v);
                *v -= u * d;
            }
        };
        deflate(&mut v, &found);
        let norm = v.norm();
        if norm == 0.0 {
            break;
        }
        v /= norm;
        for it in 0..PCA_MAX_ITERATIONS {
            let mut w = m * &v;
            deflate(&mut w, &found);
            deflate(&mut w, &found);
            let norm = w.norm();
            // the rest of the spectrum is roundoff; renormalizing it would
            // resurrect components along the vectors already found
            if norm <= 1e-12 * scale {
                v.fill(0.0);
                break;
            }
            w /= norm;
            let delta = (&w - &v).norm();
            v = w;
            if it + 1 >= PCA_MIN_ITERATIONS && delta < PCA_TOLERANCE {
                break;
            }
        }
        let lambda = if v.norm() == 0.0 { 0.0 } else { v.dot(&(m * &v)).max(0.0) };
        found.push((lambda, v));
    }
    found
}

/// Top three principal components of the rows of `data`.
pub fn pca3(data: &[Vec<f64>]) -> Result<Pca3> {
    let n = data.len();
    if n < 4 {
        return Err(Error::Degenerate(format!("pca needs at least 4 rows, got {n}")));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|r| r.len() != d) {
        return Err(Error::Contract("pca rows differ in length".into()));
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| data[i][j]);
    for j in 0..d {
        let mean = x.column(j).sum() / n as f64;
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let scale = (n - 1) as f64;
    // work in whichever of the Gram or covariance matrix is smaller
    let gram = n <= d;
    let m = if gram { &x * x.transpose() } else { x.transpose() * &x } / scale;
    if m.trace() <= 1e-300 {
        return Err(Error::Degenerate("features have zero variance".into()));
    }
    let eig = power_eigs(&m, 3);
    let mut eigenvalues = [0.0; 3];
    let mut projections = vec![[0.0; 3]; n];
    for (c, (lambda, v)) in eig.iter().enumerate() {
        eigenvalues[c] = *lambda;
        let scores = if gram {
            // X Xᵀ g = λ(n-1) g, and the scores along the matching
            // covariance eigenvector are sqrt(λ(n-1))·g
            v * (lambda * scale).sqrt()
        } else {
            &x * v
        };
        for i in 0..n {
            projections[i][c] = scores[i];
        }
    }
    Ok(Pca3 {
        projections,
        eigenvalues,
    })
}

impl Pca3 {
    pub fn to_csv(&self, labels: &[bool]) -> String {
        let mut out = String::from("pc1,pc2,pc3,detected\n");
        for (p, l) in self.projections.iter().zip(labels) {
            let _ = writeln!(out, "{:.9},{:.9},{:.9},{}", p[0], p[1], p[2], *l as u8);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub accuracy: f64,
}

/// Fisher discriminant direction with the threshold that maximizes
/// accuracy on the given points.
pub fn fisher_classifier(points: &[Vec<f64>], labels: &[bool]) -> Result<LinearClassifier> {
    let n = points.len();
    if n == 0 || labels.len() != n {
        return Err(Error::Contract("classifier needs one label per point".into()));
    }
    let d = points[0].len();
    let (pos, neg): (Vec<_>, Vec<_>) = points.iter().zip(labels).partition(|(_, &l)| l);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Degenerate("classifier needs both classes".into()));
    }
    let mean_of = |rows: &[(&Vec<f64>, &bool)]| {
        let mut m = nalgebra::DVector::zeros(d);
        for (r, _) in rows {
            m += nalgebra::DVector::from_column_slice(r);
        }
        m / rows.len() as f64
    };
    let (mp, mn) = (mean_of(&pos), mean_of(&neg));
    let mut sw = DMatrix::<f64>::zeros(d, d);
    for (rows, m) in [(&pos, &mp), (&neg, &mn)] {
        for (r, _) in rows.iter() {
            let c = nalgebra::DVector::from_column_slice(r) - m;
            sw += &c * c.transpose();
        }
    }
    let ridge = 1e-9 * (sw.trace() / d as f64).max(1e-300);
    for i in 0..d {
        sw[(i, i)] += ridge;
    }
    let w = sw
        .cholesky()
        .ok_or_else(|| Error::Degenerate("within-class scatter is singular".into()))?
        .solve(&(&mp - &mn));
    let mut scored: Vec<(f64, bool)> = points
        .iter()
        .zip(labels)
        .map(|(p, &l)| (w.dot(&nalgebra::DVector::from_column_slice(p)), l))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // predict positive when score > threshold; scan every split
    let total_pos = scored.iter().filter(|s| s.1).count();
    let mut best = (total_pos, f64::NEG_INFINITY);
    let mut neg_below = 0;
    let mut pos_below = 0;
    for i in 0..n {
        if scored[i].1 {
            pos_below += 1;
        } else {
            neg_below += 1;
        }
        let correct = neg_below + (total_pos - pos_below);
        let is_split = i + 1 == n || scored[i + 1].0 > scored[i].0;
        if is_split && correct > best.0 {
            let t = if i + 1 < n {
                0.5 * (scored[i].0 + scored[i + 1].0)
            } else {
                scored[i].0
            };
            best = (correct, t);
        }
    }
    Ok(LinearClassifier {
        weights: w.iter().copied().collect(),
        threshold: best.1,
        accuracy: best.0 as f64 / n as f64,
    })
}

/// Frames over an exposure × focus grid at a fixed illuminance, with their
/// detection labels.
pub struct GridSample {
    pub exposure_index: usize,
    pub lens: f64,
    pub frame: SensorImage,
    pub detected: bool,
}

/// Renders `scene` at every (exposure, lens) pair through the environment's
/// detector. Noise seeds come from `seed`.
pub fn exposure_focus_grid(
    env: &Env,
    scene: &Scene,
    exposures: &[usize],
    lenses: &[f64],
    noise: bool,
    seed: u64,
) -> Result<Vec<GridSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(exposures.len() * lenses.len());
    for &e in exposures {
        let t = exposure_value(e)?;
        for &l in lenses {
            let sigma = crate::optics::blur_sigma(crate::optics::LensState::new(l), scene.f_star());
            let frame = render_with_sigma(scene, sigma, t, noise, rng.random());
            let detected = env.models().detector.detect(&frame, scene.object_box())?.is_some();
            out.push(GridSample {
                exposure_index: e,
                lens: l,
                frame,
                detected,
            });
        }
    }
    Ok(out)
}

/// Exposure × focus grid around each scene's well-exposed, in-focus point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub illuminance_lx: f64,
    pub distance_cm: f64,
    pub scene_seeds: Vec<u64>,
    /// Offsets from the auto-exposure index.
    pub exposure_offsets: Vec<i64>,
    /// Offsets from the in-focus lens control.
    pub lens_offsets: Vec<f64>,
    pub noise: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            illuminance_lx: 37.0,
            distance_cm: 170.0,
            scene_seeds: crate::scenes::BUNDLED_SCENE_SEEDS.to_vec(),
            exposure_offsets: (-6..=4).map(|k| 5 * k).collect(),
            lens_offsets: (-8..=8).map(f64::from).collect(),
            noise: true,
        }
    }
}

impl AnalyzeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scene_seeds.is_empty() || self.exposure_offsets.is_empty() || self.lens_offsets.is_empty() {
            return Err(Error::Config("analyze grid is empty".into()));
        }
        if self.lens_offsets.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("analyze.lens_offsets must be finite".into()));
        }
        Ok(())
    }
}

pub struct Analysis {
    pub pca: Pca3,
    pub labels: Vec<bool>,
    pub classifier: LinearClassifier,
    /// Accuracy of always guessing the larger class.
    pub majority: f64,
}

/// Encodes the grid frames, projects them on three principal components and
/// fits a linear detected / not-detected boundary there.
pub fn analyze(env: &Env, config: &AnalyzeConfig, seed: u64) -> Result<Analysis> {
    config.validate()?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (k, &s) in config.scene_seeds.iter().enumerate() {
        let scene = crate::scenes::procedural_scene(s, config.distance_cm, config.illuminance_lx)?;
        let ae = auto_exposure_baseline(&scene).index as i64;
        let exposures: Vec<usize> = config
            .exposure_offsets
            .iter()
            .map(|&o| (ae + o).clamp(0, EXPOSURE_STEPS as i64 - 1) as usize)
            .collect();
        let lenses: Vec<f64> = config
            .lens_offsets
            .iter()
            .map(|&o| (scene.f_star() + o).clamp(LENS_MIN, LENS_MAX))
            .collect();
        let grid = exposure_focus_grid(env, &scene, &exposures, &lenses, config.noise, seed ^ k as u64)?;
        for g in grid {
            features.push(env.models().encoder.encode(&g.frame));
            labels.push(g.detected);
        }
    }
    let pca = pca3(&features)?;
    let points: Vec<Vec<f64>> = pca.projections.iter().map(|p| p.to_vec()).collect();
    let classifier = fisher_classifier(&points, &labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    Ok(Analysis {
        pca,
        labels,
        classifier,
        majority: pos.max(1.0 - pos),
    })
}
