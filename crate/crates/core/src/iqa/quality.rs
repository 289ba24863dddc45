//! No-reference quality score: Mahalanobis distance of an image's feature
//! vector from pristine statistics, squashed into [0, 100). Lower is better.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::brisque::{brisque_features, BrisqueFeatures, BRISQUE_DIM};
use crate::error::{Error, Result};
use crate::image::SensorImage;

pub const MIN_PRISTINE_IMAGES: usize = 20;
const RIDGE: f64 = 1e-6;
/// Median distances below this mean the corpus has no spread at all.
const DEGENERATE_SPREAD: f64 = 1e-6;
/// Score assigned to the median pristine image.
const MEDIAN_PRISTINE_SCORE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct QualityModel {
    mu: Vec<f64>,
    /// Covariance including the ridge term.
    sigma: Vec<f64>,
    tau: f64,
    chol: Cholesky<f64, Dyn>,
}

impl PartialEq for QualityModel {
    fn eq(&self, other: &Self) -> bool {
        self.mu == other.mu && self.sigma == other.sigma && self.tau == other.tau
    }
}

impl QualityModel {
    /// `sigma` is row-major 36×36 and must be symmetric positive definite.
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>, tau: f64) -> Result<Self> {
        if mu.len() != BRISQUE_DIM || sigma.len() != BRISQUE_DIM * BRISQUE_DIM {
            return Err(Error::Calibration(format!(
                "quality model needs {BRISQUE_DIM}-d mean and {BRISQUE_DIM}x{BRISQUE_DIM} covariance"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Calibration(format!("tau must be positive, got {tau}")));
        }
        if mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::Calibration("non-finite model statistics".into()));
        }
        for i in 0..BRISQUE_DIM {
            for j in 0..i {
                let (a, b) = (sigma[i * BRISQUE_DIM + j], sigma[j * BRISQUE_DIM + i]);
                if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Calibration("covariance is not symmetric".into()));
                }
            }
        }
        let m = DMatrix::from_row_slice(BRISQUE_DIM, BRISQUE_DIM, &sigma);
        let chol = Cholesky::new(m)
            .ok_or_else(|| Error::Calibration("covariance is singular".into()))?;
        Ok(Self {
            mu,
            sigma,
            tau,
            chol,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn distance(&self, features: &BrisqueFeatures) -> f64 {
        let d = DVector::from_iterator(
            BRISQUE_DIM,
            features.0.iter().zip(&self.mu).map(|(f, m)| f - m),
        );
        let solved = self.chol.solve(&d);
        d.dot(&solved).max(0.0).sqrt()
    }

    pub fn score_from_distance(&self, distance: f64) -> f64 {
        100.0 * (1.0 - (-distance / self.tau).exp())
    }

    pub fn score_features(&self, features: &BrisqueFeatures) -> f64 {
        self.score_from_distance(self.distance(features))
    }

    /// Quality score in [0, 100) of `image`.
    pub fn quality_score(&self, image: &SensorImage) -> Result<f64> {
        Ok(self.score_features(&brisque_features(image)?))
    }

    /// Like [`quality_score`](Self::quality_score), but images without usable
    /// statistics (flat, too few samples) score the worst value, 100.
    pub fn quality_score_or_worst(&self, image: &SensorImage) -> f64 {
        self.quality_score(image).unwrap_or(100.0)
    }
}

/// Fits pristine statistics to a corpus of in-focus, well-exposed frames.
pub fn fit_pristine(corpus: &[SensorImage]) -> Result<QualityModel> {
    if corpus.len() < MIN_PRISTINE_IMAGES {
        return Err(Error::Calibration(format!(
            "pristine corpus has {} images, need at least {MIN_PRISTINE_IMAGES}",
            corpus.len()
        )));
    }
    let feats = corpus
        .iter()
        .map(brisque_features)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Calibration(format!("pristine image unusable: {e}")))?;
    let n = feats.len() as f64;
    let mut mu = vec![0.0; BRISQUE_DIM];
    for f in &feats {
        for (m, v) in mu.iter_mut().zip(f.0) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut sigma = vec![0.0; BRISQUE_DIM * BRISQUE_DIM];
    for f in &feats {
        for i in 0..BRISQUE_DIM {
            let di = f.0[i] - mu[i];
            for j in 0..BRISQUE_DIM {
                sigma[i * BRISQUE_DIM + j] += di * (f.0[j] - mu[j]) / (n - 1.0);
            }
        }
    }
    // symmetrize exactly, then ridge
    for i in 0..BRISQUE_DIM {
        for j in 0..i {
            let avg = 0.5 * (sigma[i * BRISQUE_DIM + j] + sigma[j * BRISQUE_DIM + i]);
            sigma[i * BRISQUE_DIM + j] = avg;
            sigma[j * BRISQUE_DIM + i] = avg;
        }
        sigma[i * BRISQUE_DIM + i] += RIDGE;
    }
    let provisional = QualityModel::new(mu.clone(), sigma.clone(), 1.0)?;
    let mut dists: Vec<f64> = feats.iter().map(|f| provisional.distance(f)).collect();
    dists.sort_by(f64::total_cmp);
    let median = crate::stats::median_sorted(&dists);
    // 1 - exp(-median/tau) = 0.1
    let tau = if median > DEGENERATE_SPREAD {
        median / (100.0 / (100.0 - MEDIAN_PRISTINE_SCORE)).ln()
    } else {
        1.0
    };
    QualityModel::new(mu, sigma, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(seed: u64) -> SensorImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let period = rng.random_range(4..9);
        SensorImage::from_fn(48, 48, |x, y| {
            let base = if (x / period + y / period) % 2 == 0 { 60 } else { 180 };
            base + rng.random_range(0..20u8)
        })
    }

    #[test]
    fn too_small_corpus() {
        let corpus: Vec<_> = (0..19).map(textured).collect();
        assert!(matches!(fit_pristine(&corpus), Err(Error::Calibration(_))));
    }

    #[test]
    fn repeated_image_scores_near_zero() {
        let img = textured(1);
        let corpus = vec![img.clone(); 20];
        let model = fit_pristine(&corpus).unwrap();
        let s = model.quality_score(&img).unwrap();
        assert!(s < 1.0, "{s}");
        assert!(model.mu().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn median_pristine_score_is_ten() {
        let corpus: Vec<_> = (0..60).map(textured).collect();
        let model = fit_pristine(&corpus).unwrap();
        let mut scores: Vec<f64> = corpus.iter().map(|i| model.quality_score(i).unwrap()).collect();
        scores.sort_by(f64::total_cmp);
        let med = crate::stats::median_sorted(&scores);
        assert!((med - 10.0).abs() <= 0.5, "{med}");
        // PSD: Cholesky succeeded, diagonal positive
        for i in 0..BRISQUE_DIM {
            assert!(model.sigma()[i * BRISQUE_DIM + i] > 0.0);
        }
    }

    #[test]
    fn score_limits_and_monotonicity() {
        let mut sigma = vec![0.0; BRISQUE_DIM * BRISQUE_DIM];
        for i in 0..BRISQUE_DIM {
            sigma[i * BRISQUE_DIM + i] = 1.0;
        }
        let model = QualityModel::new(vec![0.5; BRISQUE_DIM], sigma, 2.0).unwrap();
        assert_eq!(model.score_features(&BrisqueFeatures([0.5; BRISQUE_DIM])), 0.0);
        assert!(model.score_from_distance(1e6) <= 100.0);
        assert!(model.score_from_distance(1e3) > 99.99);
        let mut prev = -1.0;
        for k in 0..50 {
            let s = model.score_from_distance(k as f64 * 0.3);
            assert!(s > prev && s < 100.0);
            prev = s;
        }
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let sigma = vec![0.0; BRISQUE_DIM * BRISQUE_DIM];
        assert!(matches!(
            QualityModel::new(vec![0.0; BRISQUE_DIM], sigma, 1.0),
            Err(Error::Calibration(_))
        ));
    }
}
