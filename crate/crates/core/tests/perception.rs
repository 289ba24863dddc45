mod common;

use autofocus_core::detect::{detect, parse_external_response, well_exposed_index};
use autofocus_core::encoder::{encode, init_encoder, FEATURE_DIM};
use autofocus_core::harness::calibrate::pristine_corpus;
use autofocus_core::image::{Rect, SensorImage};
use autofocus_core::iqa::{brisque_features, histogram256, mscn, obs_histogram, tenengrad, BRISQUE_DIM};
use autofocus_core::optics::{exposure_value, render_with_sigma};
use autofocus_core::scenes::procedural_scene;
use autofocus_core::stats::median;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn noisy_image() -> impl Strategy<Value = SensorImage> {
    (32usize..80, 32usize..80, any::<u64>()).prop_map(|(w, h, seed)| {
        let mut s = seed | 1;
        SensorImage::from_fn(w, h, |x, y| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            ((x * 3 + y * 5) as u64 % 97 + s % 120) as u8
        })
    })
}

#[test]
fn distance_matches_dense_mahalanobis() {
    let q = &common::calibration().quality;
    let sigma = DMatrix::from_row_slice(BRISQUE_DIM, BRISQUE_DIM, q.sigma());
    let inv = sigma.try_inverse().unwrap();
    let mu = DVector::from_column_slice(q.mu());
    for seed in 0..4 {
        let scene = procedural_scene(seed, 170.0, 150.0).unwrap();
        let t = exposure_value(well_exposed_index(&scene, 100)).unwrap();
        let frame = render_with_sigma(&scene, 1.5, t, true, seed);
        let f = brisque_features(&frame).unwrap();
        let x = DVector::from_column_slice(f.as_slice()) - &mu;
        let d = (x.transpose() * &inv * &x)[(0, 0)].sqrt();
        assert!((q.distance(&f) - d).abs() <= 1e-6 * d.max(1.0));
        let b = 100.0 * (1.0 - (-d / q.tau()).exp());
        assert!((q.quality_score(&frame).unwrap() - b).abs() < 1e-6);
    }
}

#[test]
fn median_pristine_image_scores_ten() {
    let q = &common::calibration().quality;
    let corpus = pristine_corpus(100, 1000, 1).unwrap();
    let scores: Vec<f64> = corpus.iter().map(|im| q.quality_score(im).unwrap()).collect();
    assert!((median(&scores) - 10.0).abs() < 0.5, "median {}", median(&scores));
}

#[test]
fn tenengrad_drops_with_blur_and_vanishes_on_flat() {
    let flat = SensorImage::filled(40, 40, 77);
    assert_eq!(tenengrad(&flat, flat.full_rect()).unwrap(), 0.0);
    let scene = procedural_scene(4, 170.0, 150.0).unwrap();
    let t = exposure_value(well_exposed_index(&scene, 100)).unwrap();
    let vals: Vec<f64> = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
        .iter()
        .map(|&s| {
            let fr = render_with_sigma(&scene, s, t, false, 0);
            tenengrad(&fr, scene.object_box()).unwrap()
        })
        .collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
}

#[test]
fn detector_needs_focus_and_exposure() {
    let th = common::calibration().thresholds;
    let scene = procedural_scene(0, 170.0, 150.0).unwrap();
    let b = scene.object_box();
    let good = well_exposed_index(&scene, 100);
    let frame = |sigma: f64, idx: usize| render_with_sigma(&scene, sigma, exposure_value(idx).unwrap(), false, 0);
    assert_eq!(detect(&frame(0.0, good), b, &th), Some(b));
    assert_eq!(detect(&frame(5.0, good), b, &th), None);
    assert_eq!(detect(&frame(0.0, 0), b, &th), None);
    assert_eq!(detect(&frame(0.0, 145), b, &th), None);
}

#[test]
fn external_responses_parse() {
    assert_eq!(parse_external_response("none\n").unwrap(), None);
    assert_eq!(parse_external_response(" 1 2 30 40 ").unwrap(), Some(Rect::new(1, 2, 30, 40)));
    for bad in ["", "1 2 3", "1 2 0 4", "a b c d", "1 2 3 4 5", "-1 2 3 4"] {
        assert!(parse_external_response(bad).is_err(), "{bad:?}");
    }
}

#[test]
fn encoder_is_seeded() {
    let scene = procedural_scene(1, 170.0, 150.0).unwrap();
    let img = render_with_sigma(&scene, 0.0, exposure_value(95).unwrap(), false, 0);
    let a = encode(&init_encoder(7), &img);
    assert_eq!(a.len(), FEATURE_DIM);
    assert_eq!(a, encode(&init_encoder(7), &img));
    assert_ne!(a, encode(&init_encoder(8), &img));
    assert!(a.iter().all(|v| v.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn histograms_account_for_every_pixel(img in noisy_image()) {
        let h = histogram256(&img);
        prop_assert_eq!(h.counts.iter().sum::<u64>(), (img.width() * img.height()) as u64);
        prop_assert_eq!(h.counts[h.peak as usize], *h.counts.iter().max().unwrap());
        let o = obs_histogram(&img);
        prop_assert!((o.val.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(o.bin.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn scores_are_bounded_and_repeatable(img in noisy_image()) {
        let q = &common::calibration().quality;
        let a = q.quality_score_or_worst(&img);
        prop_assert!((0.0..=100.0).contains(&a));
        prop_assert_eq!(a.to_bits(), q.quality_score_or_worst(&img).to_bits());
    }

    #[test]
    fn mscn_is_bounded(img in noisy_image()) {
        let m = mscn(&img).unwrap();
        prop_assert!(m.data.iter().all(|v| v.is_finite() && v.abs() < 255.0 * 8.0));
    }

    #[test]
    fn encoder_output_is_finite(img in noisy_image()) {
        let p = init_encoder(3);
        let a = encode(&p, &img);
        prop_assert_eq!(a.len(), FEATURE_DIM);
        prop_assert!(a.iter().all(|v| v.is_finite()));
    }
}
