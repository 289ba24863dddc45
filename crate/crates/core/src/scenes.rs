//! Procedural scenes and the scene descriptor record.
//!
//! A procedural scene is a smooth textured background with one high-contrast
//! patterned object patch. Everything is derived from a single seed.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Rect, SensorImage};
use crate::optics::Scene;

pub const SCENE_SIZE: usize = 128;

/// Seeds of the scenes shipped with the repository.
pub const BUNDLED_SCENE_SEEDS: [u64; 6] = [0, 1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pattern {
    Checker { cell: usize },
    Stripes { period: usize, vertical: bool },
    Blocks { cell: usize },
}

/// Builds the procedural scene for `seed` at the given conditions.
pub fn procedural_scene(seed: u64, distance_cm: f64, illuminance_lx: f64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE4_E5EE_D000_0000);
    let (w, h) = (SCENE_SIZE, SCENE_SIZE);

    // background: a few low-frequency plane waves around a mid reflectance
    let base = rng.random_range(0.38..0.46);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let period = rng.random_range(36.0..96.0);
            let k = 2.0 * std::f64::consts::PI / period;
            (
                k * theta.cos(),
                k * theta.sin(),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.01..0.025),
            )
        })
        .collect();
    let mut reflectance = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut r = base;
            for &(kx, ky, phase, amp) in &waves {
                r += amp * (kx * x as f64 + ky * y as f64 + phase).sin();
            }
            reflectance[y * w + x] = r;
        }
    }

    let bw = rng.random_range(40..=52);
    let bh = rng.random_range(40..=52);
    let bx = rng.random_range(16..=(w - bw - 16));
    let by = rng.random_range(16..=(h - bh - 16));
    let object_box = Rect::new(bx, by, bw, bh);

    let lo = rng.random_range(0.08..0.14);
    let hi = rng.random_range(0.66..0.74);
    let pattern = match rng.random_range(0..3) {
        0 => Pattern::Checker {
            cell: rng.random_range(8..=12),
        },
        1 => Pattern::Stripes {
            period: rng.random_range(16..=24),
            vertical: rng.random_bool(0.5),
        },
        _ => Pattern::Blocks {
            cell: rng.random_range(8..=12),
        },
    };
    let cells_x = bw.div_ceil(4);
    let cells_y = bh.div_ceil(4);
    let block_bits: Vec<bool> = (0..cells_x * cells_y).map(|_| rng.random_bool(0.5)).collect();

    for oy in 0..bh {
        for ox in 0..bw {
            let on = match pattern {
                Pattern::Checker { cell } => ((ox / cell) + (oy / cell)) % 2 == 0,
                Pattern::Stripes { period, vertical } => {
                    let t = if vertical { ox } else { oy };
                    (t % period) < period / 2
                }
                Pattern::Blocks { cell } => {
                    let cx = (ox / cell).min(cells_x - 1);
                    let cy = (oy / cell).min(cells_y - 1);
                    block_bits[cy * cells_x + cx]
                }
            };
            reflectance[(by + oy) * w + bx + ox] = if on { hi } else { lo };
        }
    }
    for r in reflectance.iter_mut() {
        *r = r.clamp(0.0, 1.0);
    }
    Scene::new(w, h, reflectance, object_box, distance_cm, illuminance_lx)
}

/// The bundled corpus at the given conditions.
pub fn bundled_scenes(distance_cm: f64, illuminance_lx: f64) -> Result<Vec<Scene>> {
    BUNDLED_SCENE_SEEDS
        .iter()
        .map(|&s| procedural_scene(s, distance_cm, illuminance_lx))
        .collect()
}

/// Structured text record describing one scene.
///
/// Exactly one of `reflectance_path` (an 8-bit PGM, scaled by 1/255) or
/// `proc_seed` must be present. `box` is `[x, y, w, h]`; it is required for
/// PGM scenes and overrides the generated box for procedural ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescriptor {
    #[serde(default)]
    pub reflectance_path: Option<PathBuf>,
    #[serde(default)]
    pub proc_seed: Option<u64>,
    #[serde(default, rename = "box")]
    pub object_box: Option<[usize; 4]>,
    pub distance_cm: f64,
    pub illuminance_lx: f64,
}

impl SceneDescriptor {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scene descriptor: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Relative reflectance paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Scene> {
        match (&self.reflectance_path, self.proc_seed) {
            (Some(_), Some(_)) | (None, None) => Err(Error::Config(
                "scene descriptor needs exactly one of reflectance_path or proc_seed".into(),
            )),
            (None, Some(seed)) => {
                let scene = procedural_scene(seed, self.distance_cm, self.illuminance_lx)?;
                match self.object_box {
                    None => Ok(scene),
                    Some([x, y, w, h]) => Scene::new(
                        scene.width(),
                        scene.height(),
                        scene.reflectance().to_vec(),
                        Rect::new(x, y, w, h),
                        self.distance_cm,
                        self.illuminance_lx,
                    ),
                }
            }
            (Some(rel), None) => {
                let [x, y, w, h] = self.object_box.ok_or_else(|| {
                    Error::Config("PGM scenes need an explicit box".into())
                })?;
                let path = if rel.is_absolute() {
                    rel.clone()
                } else {
                    base_dir.join(rel)
                };
                let img = SensorImage::read_pgm(&path)?;
                let reflectance = img.pixels().iter().map(|&p| p as f64 / 255.0).collect();
                Scene::new(
                    img.width(),
                    img.height(),
                    reflectance,
                    Rect::new(x, y, w, h),
                    self.distance_cm,
                    self.illuminance_lx,
                )
            }
        }
    }
}
