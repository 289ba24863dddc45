//! Virtual camera: exposure table, defocus model and the render pipeline.
//!
//! The render pipeline is a pure function of `(scene, lens, camera, noise flag, seed)`:
//!
//! 1. irradiance `255 · R · E_v · t_ex / K`,
//! 2. separable Gaussian PSF whose width grows linearly with the focus error,
//! 3. optional signal-dependent Gaussian noise,
//! 4. clamp and round half up to 8 bits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{Rect, SensorImage};

pub const EXPOSURE_STEPS: usize = 146;
pub const EXPOSURE_MIN_US: f64 = 20.0;
pub const EXPOSURE_MAX_US: f64 = 1_000_000.0;

pub const LENS_MIN: f64 = 24.0;
pub const LENS_MAX: f64 = 70.0;

pub const DISTANCE_MIN_CM: f64 = 140.0;
pub const DISTANCE_MAX_CM: f64 = 200.0;
pub const ILLUMINANCE_MIN_LX: f64 = 13.0;
pub const ILLUMINANCE_MAX_LX: f64 = 300.0;

/// Sensor gain: `(R = 0.5, 150 lx, 20 ms)` lands on mid-gray.
pub const GAIN_K: f64 = 3.0e6;
/// PSF width per unit of lens-control error, in pixels.
pub const K_BLUR: f64 = 0.25;
/// Below this the PSF is treated as a delta.
pub const MIN_SIGMA: f64 = 0.05;

/// Exposure time of table entry `index`, log-uniform between 20 µs and 1 s.
pub fn exposure_value(index: usize) -> Result<f64> {
    if index >= EXPOSURE_STEPS {
        return Err(Error::Range(format!(
            "exposure index {index} outside 0..={}",
            EXPOSURE_STEPS - 1
        )));
    }
    let frac = index as f64 / (EXPOSURE_STEPS - 1) as f64;
    Ok(EXPOSURE_MIN_US * (EXPOSURE_MAX_US / EXPOSURE_MIN_US).powf(frac))
}

/// Lens control value that brings an object at `distance_cm` into focus.
pub fn in_focus_control(distance_cm: f64) -> f64 {
    distance_cm / 2.0 - 40.0
}

pub fn blur_sigma(lens: LensState, f_star: f64) -> f64 {
    K_BLUR * (lens.control() - f_star).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensState {
    control: f64,
}

impl LensState {
    /// Clamps into the lens range on construction.
    pub fn new(control: f64) -> Self {
        Self {
            control: control.clamp(LENS_MIN, LENS_MAX),
        }
    }

    pub fn factory() -> Self {
        Self::new(LENS_MIN)
    }

    pub fn control(&self) -> f64 {
        self.control
    }

    pub fn set(&mut self, control: f64) {
        self.control = control.clamp(LENS_MIN, LENS_MAX);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraState {
    exposure_index: usize,
    exposure_us: f64,
}

impl CameraState {
    pub fn from_index(index: usize) -> Result<Self> {
        Ok(Self {
            exposure_index: index,
            exposure_us: exposure_value(index)?,
        })
    }

    pub fn exposure_index(&self) -> usize {
        self.exposure_index
    }

    pub fn exposure_us(&self) -> f64 {
        self.exposure_us
    }
}

/// Latent ground truth of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: usize,
    height: usize,
    reflectance: Vec<f64>,
    object_box: Rect,
    distance_cm: f64,
    illuminance_lx: f64,
}

impl Scene {
    pub fn new(
        width: usize,
        height: usize,
        reflectance: Vec<f64>,
        object_box: Rect,
        distance_cm: f64,
        illuminance_lx: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 || reflectance.len() != width * height {
            return Err(Error::Range(format!(
                "reflectance has {} values for a {width}x{height} scene",
                reflectance.len()
            )));
        }
        if let Some(bad) = reflectance.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Range(format!("reflectance {bad} outside [0, 1]")));
        }
        if !object_box.fits_in(width, height) {
            return Err(Error::Range(format!(
                "object box {object_box:?} outside {width}x{height} scene"
            )));
        }
        check_distance(distance_cm)?;
        check_illuminance(illuminance_lx)?;
        Ok(Self {
            width,
            height,
            reflectance,
            object_box,
            distance_cm,
            illuminance_lx,
        })
    }

    /// Same reflectance and object, different geometry and lighting.
    pub fn with_conditions(&self, distance_cm: f64, illuminance_lx: f64) -> Result<Self> {
        check_distance(distance_cm)?;
        check_illuminance(illuminance_lx)?;
        Ok(Self {
            distance_cm,
            illuminance_lx,
            ..self.clone()
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn reflectance(&self) -> &[f64] {
        &self.reflectance
    }

    pub fn object_box(&self) -> Rect {
        self.object_box
    }

    pub fn distance_cm(&self) -> f64 {
        self.distance_cm
    }

    pub fn illuminance_lx(&self) -> f64 {
        self.illuminance_lx
    }

    pub fn f_star(&self) -> f64 {
        in_focus_control(self.distance_cm)
    }
}

fn check_distance(d: f64) -> Result<()> {
    if !(DISTANCE_MIN_CM..=DISTANCE_MAX_CM).contains(&d) {
        return Err(Error::Range(format!(
            "distance {d} cm outside [{DISTANCE_MIN_CM}, {DISTANCE_MAX_CM}]"
        )));
    }
    Ok(())
}

fn check_illuminance(e: f64) -> Result<()> {
    if !(ILLUMINANCE_MIN_LX..=ILLUMINANCE_MAX_LX).contains(&e) {
        return Err(Error::Range(format!(
            "illuminance {e} lx outside [{ILLUMINANCE_MIN_LX}, {ILLUMINANCE_MAX_LX}]"
        )));
    }
    Ok(())
}

pub fn render(
    scene: &Scene,
    lens: LensState,
    camera: CameraState,
    noise_enabled: bool,
    seed: u64,
) -> SensorImage {
    let sigma = blur_sigma(lens, scene.f_star());
    render_with_sigma(scene, sigma, camera.exposure_us(), noise_enabled, seed)
}

/// Render at an explicit PSF width and exposure time.
pub fn render_with_sigma(
    scene: &Scene,
    sigma: f64,
    exposure_us: f64,
    noise_enabled: bool,
    seed: u64,
) -> SensorImage {
    let signal = irradiance(scene, sigma, exposure_us);
    quantize(scene.width, scene.height, signal, noise_enabled, seed)
}

/// Pre-noise intensity after the PSF, before clipping.
pub fn irradiance(scene: &Scene, sigma: f64, exposure_us: f64) -> Vec<f64> {
    let gain = 255.0 * scene.illuminance_lx * exposure_us / GAIN_K;
    let pre: Vec<f64> = scene.reflectance.iter().map(|r| r * gain).collect();
    if sigma < MIN_SIGMA {
        pre
    } else {
        gaussian_blur(&pre, scene.width, scene.height, sigma)
    }
}

fn quantize(
    width: usize,
    height: usize,
    mut signal: Vec<f64>,
    noise_enabled: bool,
    seed: u64,
) -> SensorImage {
    if noise_enabled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in signal.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let std = (0.1 * v.max(0.0) + 1.0).sqrt();
            *v += std * z;
        }
    }
    let pixels = signal
        .iter()
        .map(|v| (v.clamp(0.0, 255.0) + 0.5).floor() as u8)
        .collect();
    SensorImage::new(width, height, pixels).expect("dimensions come from the scene")
}

/// Normalized 1-D Gaussian taps for radius `⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(src: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    let r = radius as usize;
    let mut padded = vec![0.0; width + 2 * r];
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[clamp(i as i64 - radius, width)];
        }
        for (x, dst) in tmp[y * width..(y + 1) * width].iter_mut().enumerate() {
            *dst = taps.iter().zip(&padded[x..x + taps.len()]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for (k, t) in taps.iter().enumerate() {
            let sy = clamp(y as i64 + k as i64 - radius, height);
            let src_row = &tmp[sy * width..(sy + 1) * width];
            let dst_row = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_scene(r: f64, illuminance: f64) -> Scene {
        Scene::new(
            32,
            32,
            vec![r; 32 * 32],
            Rect::new(8, 8, 16, 16),
            160.0,
            illuminance,
        )
        .unwrap()
    }

    #[test]
    fn exposure_table_endpoints() {
        assert_eq!(exposure_value(0).unwrap(), 20.0);
        assert!((exposure_value(145).unwrap() - 1.0e6).abs() < 1e-6);
        assert!(exposure_value(146).is_err());
        // 20 · (5·10^4)^(29/145) evaluated independently: 174.1101...
        assert!((exposure_value(29).unwrap() - 174.110).abs() < 1e-2);
    }

    #[test]
    fn exposure_table_is_strictly_increasing() {
        let table: Vec<f64> = (0..EXPOSURE_STEPS).map(|i| exposure_value(i).unwrap()).collect();
        assert!(table.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn focus_geometry() {
        assert_eq!(in_focus_control(140.0), 30.0);
        assert_eq!(in_focus_control(200.0), 60.0);
        assert_eq!(in_focus_control(160.0), 40.0);
        assert_eq!(blur_sigma(LensState::new(40.0), 40.0), 0.0);
        assert_eq!(blur_sigma(LensState::new(44.0), 40.0), 1.0);
        assert_eq!(blur_sigma(LensState::new(24.0), 60.0), 9.0);
    }

    #[test]
    fn lens_is_clamped() {
        assert_eq!(LensState::new(10.0).control(), LENS_MIN);
        assert_eq!(LensState::new(99.0).control(), LENS_MAX);
        let mut l = LensState::factory();
        l.set(80.0);
        assert_eq!(l.control(), LENS_MAX);
    }

    #[test]
    fn scene_validation() {
        let ok = flat_scene(0.5, 150.0);
        assert!(ok.with_conditions(139.0, 150.0).is_err());
        assert!(ok.with_conditions(150.0, 301.0).is_err());
        assert!(Scene::new(4, 4, vec![1.5; 16], Rect::new(0, 0, 2, 2), 150.0, 20.0).is_err());
        assert!(Scene::new(4, 4, vec![0.5; 16], Rect::new(3, 3, 2, 2), 150.0, 20.0).is_err());
    }

    #[test]
    fn mid_gray_calibration_anchor() {
        let scene = flat_scene(0.5, 150.0);
        let img = render_with_sigma(&scene, 0.0, 20_000.0, false, 0);
        assert!(img.pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn shortest_exposure_in_dark_room_is_black() {
        // 255 · 1 · 13 · 20 / 3e6 ≈ 0.0221 DN even for a white scene.
        let scene = flat_scene(1.0, 13.0);
        let cam = CameraState::from_index(0).unwrap();
        let img = render(&scene, LensState::new(scene.f_star()), cam, false, 0);
        assert!(img.pixels().iter().all(|&p| p <= 1));
    }

    #[test]
    fn kernel_is_normalized() {
        for sigma in [0.3, 1.0, 4.5, 11.5] {
            let k = gaussian_kernel(sigma);
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn render_is_deterministic_and_seed_sensitive() {
        let scene = flat_scene(0.4, 80.0);
        let cam = CameraState::from_index(90).unwrap();
        let lens = LensState::new(33.0);
        let a = render(&scene, lens, cam, true, 11);
        let b = render(&scene, lens, cam, true, 11);
        let c = render(&scene, lens, cam, true, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
