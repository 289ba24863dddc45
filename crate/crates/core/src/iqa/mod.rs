//! Image analytics feeding rewards and observations.

mod brisque;
mod histogram;
mod quality;
mod sharpness;

pub use brisque::{
    aggd_fit, brisque_features, ggd_fit, mscn, AggdFit, BrisqueFeatures, GgdFit, Plane,
    BRISQUE_DIM,
};
pub use histogram::{histogram256, obs_histogram, Histogram256, ObsHistogram, OBS_BINS};
pub use quality::{fit_pristine, QualityModel, MIN_PRISTINE_IMAGES};
pub use sharpness::tenengrad;
