use crate::image::SensorImage;

pub const OBS_BINS: usize = 10;
const OBS_BIN_WIDTH: f64 = 25.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    pub counts: [u64; 256],
    /// Smallest intensity with the maximal count.
    pub peak: u8,
}

pub fn histogram256(image: &SensorImage) -> Histogram256 {
    let mut counts = [0u64; 256];
    for &p in image.pixels() {
        counts[p as usize] += 1;
    }
    let mut peak = 0usize;
    for v in 1..256 {
        if counts[v] > counts[peak] {
            peak = v;
        }
    }
    Histogram256 {
        counts,
        peak: peak as u8,
    }
}

/// Coarse normalized histogram used in the exposure agent's observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsHistogram {
    pub val: [f64; OBS_BINS],
    pub bin: [f64; OBS_BINS + 1],
}

/// Ten equal-width bins over [0, 255]; the last bin is right-closed.
pub fn obs_histogram(image: &SensorImage) -> ObsHistogram {
    let mut counts = [0u64; OBS_BINS];
    for &p in image.pixels() {
        let k = ((p as f64 / OBS_BIN_WIDTH) as usize).min(OBS_BINS - 1);
        counts[k] += 1;
    }
    let n = image.pixels().len() as f64;
    let mut val = [0.0; OBS_BINS];
    for (v, c) in val.iter_mut().zip(counts) {
        *v = c as f64 / n;
    }
    let mut bin = [0.0; OBS_BINS + 1];
    for (k, b) in bin.iter_mut().enumerate() {
        *b = OBS_BIN_WIDTH * k as f64;
    }
    ObsHistogram { val, bin }
}
