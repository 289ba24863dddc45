//! Detection oracle: a frame "contains" the object when its ground-truth box
//! is sharp, reasonably exposed and has enough contrast.
//!
//! Thresholds come from an in-focus, well-exposed calibration corpus. The
//! [`Detector`] trait lets an external process replace the oracle; see
//! [`ExternalDetector`] for the line protocol.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Rect, SensorImage};
use crate::iqa::{histogram256, tenengrad};
use crate::optics::{exposure_value, render_with_sigma, Scene, EXPOSURE_STEPS};

pub const MIN_CALIBRATION_SCENES: usize = 5;
pub const CALIBRATION_PEAK_TARGET: u8 = 100;
const SHARP_MARGIN: f64 = 0.5;
const CONTRAST_MARGIN: f64 = 0.25;
const MEAN_LO: f64 = 25.0;
const MEAN_HI: f64 = 230.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorThresholds {
    pub sharp_min: f64,
    pub mean_lo: f64,
    pub mean_hi: f64,
    pub contrast_min: f64,
}

impl DetectorThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sharp_min > 0.0
            && self.contrast_min > 0.0
            && self.sharp_min.is_finite()
            && self.contrast_min.is_finite()
            && 0.0 <= self.mean_lo
            && self.mean_lo < self.mean_hi
            && self.mean_hi <= 255.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Calibration(format!("invalid detector thresholds {self:?}")))
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.sharp_min, self.mean_lo, self.mean_hi, self.contrast_min]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let [sharp_min, mean_lo, mean_hi, contrast_min] = v else {
            return Err(Error::Corrupt(format!("detector thresholds need 4 values, got {}", v.len())));
        };
        let th = Self {
            sharp_min: *sharp_min,
            mean_lo: *mean_lo,
            mean_hi: *mean_hi,
            contrast_min: *contrast_min,
        };
        th.validate()?;
        Ok(th)
    }
}

/// Exposure index whose in-focus, noise-free render has its histogram peak
/// closest to `target`. Ties go to the shorter exposure.
pub fn well_exposed_index(scene: &Scene, target: u8) -> usize {
    let mut best = (0, u32::MAX);
    for i in 0..EXPOSURE_STEPS {
        let t = exposure_value(i).expect("index in table");
        let img = render_with_sigma(scene, 0.0, t, false, 0);
        let d = (histogram256(&img).peak as i32 - target as i32).unsigned_abs();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

pub fn calibrate_detector(scenes: &[Scene]) -> Result<DetectorThresholds> {
    if scenes.len() < MIN_CALIBRATION_SCENES {
        return Err(Error::Calibration(format!(
            "detector calibration needs at least {MIN_CALIBRATION_SCENES} scenes, got {}",
            scenes.len()
        )));
    }
    let mut sharp = f64::INFINITY;
    let mut contrast = f64::INFINITY;
    for scene in scenes {
        let idx = well_exposed_index(scene, CALIBRATION_PEAK_TARGET);
        let img = render_with_sigma(scene, 0.0, exposure_value(idx)?, false, 0);
        let b = scene.object_box();
        sharp = sharp.min(tenengrad(&img, b)?);
        contrast = contrast.min(img.region_mean_std(b).1);
    }
    let th = DetectorThresholds {
        sharp_min: SHARP_MARGIN * sharp,
        mean_lo: MEAN_LO,
        mean_hi: MEAN_HI,
        contrast_min: CONTRAST_MARGIN * contrast,
    };
    th.validate()?;
    Ok(th)
}

/// Returns `gt_box` when the object passes all three tests.
pub fn detect(image: &SensorImage, gt_box: Rect, th: &DetectorThresholds) -> Option<Rect> {
    let sharp = tenengrad(image, gt_box).ok()?;
    if sharp < th.sharp_min {
        return None;
    }
    let (mean, std) = image.region_mean_std(gt_box);
    if mean < th.mean_lo || mean > th.mean_hi || std < th.contrast_min {
        return None;
    }
    Some(gt_box)
}

/// Anything that can answer "where is the object in this frame".
pub trait Detector: Send + Sync {
    fn detect(&self, image: &SensorImage, gt_box: Rect) -> Result<Option<Rect>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleDetector(pub DetectorThresholds);

impl Detector for OracleDetector {
    fn detect(&self, image: &SensorImage, gt_box: Rect) -> Result<Option<Rect>> {
        Ok(detect(image, gt_box, &self.0))
    }
}

/// Version tag of the external detector line protocol.
pub const EXTERNAL_PROTOCOL: &str = "detect-v1";

/// Child-process detector.
///
/// Protocol `detect-v1`: for each frame one line holding the path of a binary
/// PGM is written to the child's stdin. The child answers with one line,
/// either `none` or `x y w h` in pixels. The ground-truth box is not sent.
pub struct ExternalDetector {
    inner: Mutex<ExternalIo>,
    scratch: PathBuf,
}

struct ExternalIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    counter: u64,
}

impl ExternalDetector {
    /// Starts `program` with `args`. Frames are written under `scratch_dir`.
    pub fn spawn(program: &Path, args: &[String], scratch_dir: &Path) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            inner: Mutex::new(ExternalIo {
                child,
                stdin,
                stdout,
                counter: 0,
            }),
            scratch: scratch_dir.to_path_buf(),
        })
    }
}

impl Drop for ExternalDetector {
    fn drop(&mut self) {
        if let Ok(io) = self.inner.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

/// Parses one response line of the external protocol.
pub fn parse_external_response(line: &str) -> Result<Option<Rect>> {
    let line = line.trim();
    if line == "none" {
        return Ok(None);
    }
    let nums: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::External(format!("bad detector response `{line}`")))?;
    match nums[..] {
        [x, y, w, h] if w > 0 && h > 0 => Ok(Some(Rect::new(x, y, w, h))),
        _ => Err(Error::External(format!("bad detector response `{line}`"))),
    }
}

impl Detector for ExternalDetector {
    fn detect(&self, image: &SensorImage, _gt_box: Rect) -> Result<Option<Rect>> {
        let mut io = self
            .inner
            .lock()
            .map_err(|_| Error::External("detector process state poisoned".into()))?;
        let path = self.scratch.join(format!("frame-{:08}.pgm", io.counter));
        io.counter += 1;
        image.write_pgm(&path)?;
        writeln!(io.stdin, "{}", path.display())
            .and_then(|_| io.stdin.flush())
            .map_err(|e| Error::External(format!("writing to detector: {e}")))?;
        let mut line = String::new();
        let n = io
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::External(format!("reading from detector: {e}")))?;
        let _ = std::fs::remove_file(&path);
        if n == 0 {
            return Err(Error::External("detector process closed its output".into()));
        }
        let found = parse_external_response(&line)?;
        if let Some(r) = found {
            if !r.fits_in(image.width(), image.height()) {
                return Err(Error::External(format!("detector box {r:?} outside frame")));
            }
        }
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{blur_sigma, LensState};
    use crate::scenes::bundled_scenes;

    fn corpus() -> Vec<Scene> {
        bundled_scenes(170.0, 150.0).unwrap()
    }

    #[test]
    fn calibration_frames_are_detected() {
        let scenes = corpus();
        let th = calibrate_detector(&scenes).unwrap();
        assert!(th.sharp_min > 0.0 && th.contrast_min > 0.0);
        for s in &scenes {
            let idx = well_exposed_index(s, CALIBRATION_PEAK_TARGET);
            let img = render_with_sigma(s, 0.0, exposure_value(idx).unwrap(), false, 0);
            assert_eq!(detect(&img, s.object_box(), &th), Some(s.object_box()));
        }
        assert_eq!(calibrate_detector(&scenes).unwrap(), th);
    }

    #[test]
    fn too_few_scenes() {
        let scenes = corpus();
        assert!(matches!(calibrate_detector(&scenes[..4]), Err(Error::Calibration(_))));
    }

    #[test]
    fn heavy_defocus_and_darkness_are_not_detected() {
        let scenes = corpus();
        let th = calibrate_detector(&scenes).unwrap();
        for s in &scenes {
            let t = exposure_value(well_exposed_index(s, CALIBRATION_PEAK_TARGET)).unwrap();
            let anchor = tenengrad(&render_with_sigma(s, 0.0, t, false, 0), s.object_box()).unwrap();
            let blurred = render_with_sigma(s, 10.0, t, false, 0);
            assert!(tenengrad(&blurred, s.object_box()).unwrap() < 0.5 * anchor);
            assert_eq!(detect(&blurred, s.object_box(), &th), None);

            let dark = s.with_conditions(s.distance_cm(), 13.0).unwrap();
            let img = render_with_sigma(&dark, 0.0, exposure_value(0).unwrap(), true, 3);
            assert_eq!(detect(&img, s.object_box(), &th), None);
        }
    }

    #[test]
    fn detection_is_monotone_in_blur() {
        let scenes = corpus();
        let th = calibrate_detector(&scenes).unwrap();
        for s in &scenes {
            let t = exposure_value(well_exposed_index(s, CALIBRATION_PEAK_TARGET)).unwrap();
            let mut lost = false;
            for k in 0..40 {
                let sigma = 0.1 * k as f64;
                let hit = detect(&render_with_sigma(s, sigma, t, false, 0), s.object_box(), &th);
                if lost {
                    assert!(hit.is_none(), "re-detected at sigma {sigma}");
                }
                lost |= hit.is_none();
            }
            assert!(lost);
        }
    }

    #[test]
    fn window_around_focus_is_wide() {
        let scenes = corpus();
        let th = calibrate_detector(&scenes).unwrap();
        for s in &scenes {
            let t = exposure_value(well_exposed_index(s, CALIBRATION_PEAK_TARGET)).unwrap();
            for off in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                let sigma = blur_sigma(LensState::new(s.f_star() + off), s.f_star());
                let img = render_with_sigma(s, sigma, t, false, 0);
                assert!(detect(&img, s.object_box(), &th).is_some());
            }
        }
    }

    #[test]
    fn threshold_serialization() {
        let th = calibrate_detector(&corpus()).unwrap();
        assert_eq!(DetectorThresholds::from_slice(&th.to_vec()).unwrap(), th);
        assert!(DetectorThresholds::from_slice(&[1.0, 2.0]).is_err());
        assert!(DetectorThresholds::from_slice(&[1.0, 200.0, 100.0, 1.0]).is_err());
    }

    #[test]
    fn external_responses() {
        assert_eq!(parse_external_response("none\n").unwrap(), None);
        assert_eq!(
            parse_external_response("1 2 30 40").unwrap(),
            Some(Rect::new(1, 2, 30, 40))
        );
        assert!(parse_external_response("1 2 3").is_err());
        assert!(parse_external_response("1 2 0 4").is_err());
        assert!(parse_external_response("found it").is_err());
    }
}
