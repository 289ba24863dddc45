//! Natural-scene statistics: MSCN coefficients, (asymmetric) generalized
//! Gaussian fits and the 36-d two-scale feature vector.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::image::SensorImage;

pub const BRISQUE_DIM: usize = 36;
const MIN_SAMPLES: usize = 100;
const MSCN_MIN_SIDE: usize = 16;
const FEATURE_MIN_SIDE: usize = 32;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
const SHAPE_MIN: f64 = 0.2;
const SHAPE_MAX: f64 = 10.0;
const SHAPE_STEP: f64 = 0.001;

/// Real-valued image plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn from_image(image: &SensorImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            data: image.pixels().iter().map(|&p| p as f64).collect(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// 2×2 mean pooling; odd trailing rows/columns are dropped.
    pub fn downsample2(&self) -> Plane {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let s = self.at(2 * x, 2 * y)
                    + self.at(2 * x + 1, 2 * y)
                    + self.at(2 * x, 2 * y + 1)
                    + self.at(2 * x + 1, 2 * y + 1);
                data.push(0.25 * s);
            }
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }
}

/// 7×7 Gaussian window (std 7/6), normalized.
fn window_taps() -> &'static [f64] {
    static TAPS: OnceLock<Vec<f64>> = OnceLock::new();
    TAPS.get_or_init(|| {
        let radius = 3i64;
        let mut t: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
            .collect();
        let s: f64 = t.iter().sum();
        t.iter_mut().for_each(|v| *v /= s);
        t
    })
}

fn separable_filter(src: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * src[y * width + clamp(x as i64 + k as i64 - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * tmp[clamp(y as i64 + k as i64 - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn mscn_plane(plane: &Plane) -> Result<Plane> {
    if plane.width < MSCN_MIN_SIDE || plane.height < MSCN_MIN_SIDE {
        return Err(Error::Range(format!(
            "MSCN needs at least {MSCN_MIN_SIDE}x{MSCN_MIN_SIDE}, got {}x{}",
            plane.width, plane.height
        )));
    }
    let taps = window_taps();
    // MSCN is shift invariant; centring on one pixel keeps flat images exactly zero
    let offset = plane.data[0];
    let centred: Vec<f64> = plane.data.iter().map(|v| v - offset).collect();
    let mu = separable_filter(&centred, plane.width, plane.height, taps);
    let sq: Vec<f64> = centred.iter().map(|v| v * v).collect();
    let mu_sq = separable_filter(&sq, plane.width, plane.height, taps);
    let data = centred
        .iter()
        .zip(mu.iter().zip(&mu_sq))
        .map(|(&i, (&m, &m2))| {
            let sigma = (m2 - m * m).abs().sqrt();
            (i - m) / (sigma + 1.0)
        })
        .collect();
    Ok(Plane {
        width: plane.width,
        height: plane.height,
        data,
    })
}

/// Mean-subtracted contrast-normalized coefficients of an 8-bit image.
pub fn mscn(image: &SensorImage) -> Result<Plane> {
    mscn_plane(&Plane::from_image(image))
}

/// `Γ(1/a)·Γ(3/a) / Γ(2/a)²`; equals `E[x²] / E[|x|]²` for a GGD of shape `a`.
fn moment_ratio(shape: f64) -> f64 {
    (ln_gamma(1.0 / shape) + ln_gamma(3.0 / shape) - 2.0 * ln_gamma(2.0 / shape)).exp()
}

/// Moment-ratio values on the shape grid; strictly decreasing in shape.
fn ratio_grid() -> &'static [(f64, f64)] {
    static GRID: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    GRID.get_or_init(|| {
        let n = ((SHAPE_MAX - SHAPE_MIN) / SHAPE_STEP).round() as usize;
        (0..=n)
            .map(|i| {
                let a = SHAPE_MIN + i as f64 * SHAPE_STEP;
                (a, moment_ratio(a))
            })
            .collect()
    })
}

/// Inverts the moment ratio by linear interpolation on the grid, clamping to [0.2, 10].
fn shape_from_ratio(ratio: f64) -> f64 {
    let grid = ratio_grid();
    let (first, last) = (grid[0], grid[grid.len() - 1]);
    if ratio >= first.1 {
        return first.0;
    }
    if ratio <= last.1 {
        return last.0;
    }
    // first index whose ratio falls at or below the target
    let hi = grid.partition_point(|&(_, r)| r > ratio);
    let (a0, r0) = grid[hi - 1];
    let (a1, r1) = grid[hi];
    a0 + (a1 - a0) * (r0 - ratio) / (r0 - r1)
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Degenerate(format!(
            "{} samples, need at least {MIN_SAMPLES}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("non-finite sample {bad}")));
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(Error::Degenerate("all samples equal".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdFit {
    pub shape: f64,
    pub variance: f64,
}

/// Zero-mean generalized Gaussian fit by moment matching.
pub fn ggd_fit(samples: &[f64]) -> Result<GgdFit> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let variance = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let abs_mean = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let shape = shape_from_ratio(variance / (abs_mean * abs_mean));
    Ok(GgdFit { shape, variance })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdFit {
    pub shape: f64,
    pub mean: f64,
    pub left_var: f64,
    pub right_var: f64,
}

/// Asymmetric generalized Gaussian fit by moment matching.
pub fn aggd_fit(samples: &[f64]) -> Result<AggdFit> {
    check_samples(samples)?;
    let (mut left_sq, mut left_n, mut right_sq, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &v in samples {
        if v < 0.0 {
            left_sq += v * v;
            left_n += 1;
        } else if v > 0.0 {
            right_sq += v * v;
            right_n += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    if left_n == 0 || right_n == 0 {
        return Err(Error::Degenerate("AGGD fit needs samples on both sides of zero".into()));
    }
    let n = samples.len() as f64;
    let left_std = (left_sq / left_n as f64).sqrt();
    let right_std = (right_sq / right_n as f64).sqrt();
    let g = left_std / right_std;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let r_hat_norm = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let shape = shape_from_ratio(1.0 / r_hat_norm);
    let lg1 = ln_gamma(1.0 / shape);
    let lg2 = ln_gamma(2.0 / shape);
    let lg3 = ln_gamma(3.0 / shape);
    let mean = (right_std - left_std) * (lg2 - lg1).exp() * (0.5 * (lg1 - lg3)).exp();
    Ok(AggdFit {
        shape,
        mean,
        left_var: left_std * left_std,
        right_var: right_std * right_std,
    })
}

/// Two-scale feature vector: per scale, GGD (shape, variance) of the MSCN map
/// followed by AGGD (shape, mean, left var, right var) of the horizontal,
/// vertical, main-diagonal and anti-diagonal neighbour products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrisqueFeatures(pub [f64; BRISQUE_DIM]);

impl BrisqueFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

const SHIFTS: [(i64, i64); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

fn pair_products(m: &Plane, dx: i64, dy: i64) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.width * m.height);
    for y in 0..m.height as i64 {
        let ny = y + dy;
        if ny < 0 || ny >= m.height as i64 {
            continue;
        }
        for x in 0..m.width as i64 {
            let nx = x + dx;
            if nx < 0 || nx >= m.width as i64 {
                continue;
            }
            out.push(m.at(x as usize, y as usize) * m.at(nx as usize, ny as usize));
        }
    }
    out
}

fn scale_features(plane: &Plane, out: &mut Vec<f64>) -> Result<()> {
    let m = mscn_plane(plane)?;
    let g = ggd_fit(&m.data)?;
    out.extend([g.shape, g.variance]);
    for (dx, dy) in SHIFTS {
        let a = aggd_fit(&pair_products(&m, dx, dy))?;
        out.extend([a.shape, a.mean, a.left_var, a.right_var]);
    }
    Ok(())
}

pub fn brisque_features(image: &SensorImage) -> Result<BrisqueFeatures> {
    if image.width() < FEATURE_MIN_SIDE || image.height() < FEATURE_MIN_SIDE {
        return Err(Error::Range(format!(
            "quality features need at least {FEATURE_MIN_SIDE}x{FEATURE_MIN_SIDE}, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    let full = Plane::from_image(image);
    let mut v = Vec::with_capacity(BRISQUE_DIM);
    scale_features(&full, &mut v)?;
    scale_features(&full.downsample2(), &mut v)?;
    let mut f = [0.0; BRISQUE_DIM];
    f.copy_from_slice(&v);
    Ok(BrisqueFeatures(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use crate::optics::gaussian_kernel;

    fn reference_window() -> Vec<f64> {
        // radius ⌈3σ⌉ = 4 would be the render kernel; the MSCN window stops at 3.
        let mut k = gaussian_kernel(WINDOW_SIGMA);
        let r = k.len() / 2;
        k = k[r - 3..=r + 3].to_vec();
        let s: f64 = k.iter().sum();
        k.iter().map(|v| v / s).collect()
    }

    #[test]
    fn window_matches_truncated_gaussian() {
        let a = window_taps();
        let b = reference_window();
        assert_eq!(a.len(), 7);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn ratio_grid_is_monotone() {
        let g = ratio_grid();
        assert!(g.windows(2).all(|w| w[1].1 < w[0].1));
        // Gaussian: π/2, Laplacian: 2
        assert!((moment_ratio(2.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((moment_ratio(1.0) - 2.0).abs() < 1e-12);
        assert!((shape_from_ratio(std::f64::consts::FRAC_PI_2) - 2.0).abs() < 1e-6);
        assert_eq!(shape_from_ratio(1e9), SHAPE_MIN);
        assert_eq!(shape_from_ratio(0.5), SHAPE_MAX);
    }

    #[test]
    fn ggd_on_gaussian_and_laplacian_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gauss: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let fit = ggd_fit(&gauss).unwrap();
        assert!((fit.shape - 2.0).abs() < 0.1, "{fit:?}");
        assert!((fit.variance - 1.0).abs() < 0.05, "{fit:?}");

        let laplace: Vec<f64> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random_range(-0.5..0.5);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        let fit = ggd_fit(&laplace).unwrap();
        assert!((fit.shape - 1.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn aggd_on_symmetric_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..100_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                2.0 * z
            })
            .collect();
        let a = aggd_fit(&s).unwrap();
        assert!((a.left_var / a.right_var - 1.0).abs() < 0.05, "{a:?}");
        assert!((a.shape - 2.0).abs() < 0.1, "{a:?}");
        assert!(a.mean.abs() < 0.05, "{a:?}");
    }

    #[test]
    fn aggd_tracks_asymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..50_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if z < 0.0 { 0.5 * z } else { 2.0 * z }
            })
            .collect();
        let a = aggd_fit(&s).unwrap();
        assert!(a.right_var > 10.0 * a.left_var);
        assert!(a.mean > 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(ggd_fit(&[1.0; 50]), Err(Error::Degenerate(_))));
        assert!(matches!(ggd_fit(&[0.0; 500]), Err(Error::Degenerate(_))));
        let positive: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        assert!(matches!(aggd_fit(&positive), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mscn_constant_and_bounds() {
        let m = mscn(&SensorImage::filled(20, 20, 90)).unwrap();
        assert!(m.data.iter().all(|&v| v == 0.0));
        assert!(mscn(&SensorImage::filled(15, 20, 90)).is_err());
        let img = SensorImage::from_fn(32, 32, |x, y| if (x / 3 + y / 5) % 2 == 0 { 0 } else { 255 });
        let m = mscn(&img).unwrap();
        assert!(m.data.iter().all(|v| v.is_finite() && v.abs() <= 255.0));
    }

    #[test]
    fn mscn_of_white_noise_has_unit_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = SensorImage::from_fn(128, 128, |_, _| rng.random::<u8>());
        let m = mscn(&img).unwrap();
        let n = m.data.len() as f64;
        let mean = m.data.iter().sum::<f64>() / n;
        let var = m.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((0.5..=1.5).contains(&var), "MSCN variance {var}");
    }

    #[test]
    fn feature_vector_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = SensorImage::from_fn(48, 40, |x, y| {
            ((x * 5 + y * 3) % 200) as u8 + rng.random_range(0..40u8)
        });
        let f = brisque_features(&img).unwrap();
        assert_eq!(f.0.len(), BRISQUE_DIM);
        assert!(f.0.iter().all(|v| v.is_finite()));
        assert_eq!(f, brisque_features(&img).unwrap());
        for s in 0..2 {
            let b = &f.0[s * 18..(s + 1) * 18];
            assert!(b[0] > 0.0 && b[1] >= 0.0);
            for o in 0..4 {
                let a = &b[2 + 4 * o..6 + 4 * o];
                assert!(a[0] > 0.0 && a[2] >= 0.0 && a[3] >= 0.0);
            }
        }
        assert!(brisque_features(&SensorImage::filled(31, 64, 3)).is_err());
    }
}
