mod common;

use autofocus_core::bench::{
    auto_exposure_baseline, evaluate, hillclimb_af, sweep_af, OracleController, UniformController,
    AE_TARGET_MEAN, SWEEP_STEP,
};
use autofocus_core::env::{EnvConfig, EpisodeSpec, Phase, COARSE_ACTIONS, FINE_ACTIONS};
use autofocus_core::error::Error;
use autofocus_core::optics::{exposure_value, render_with_sigma, EXPOSURE_STEPS};
use autofocus_core::scenes::{procedural_scene, BUNDLED_SCENE_SEEDS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec(seed: u64, d: f64, e: f64) -> EpisodeSpec {
    EpisodeSpec {
        scene_seed: seed,
        distance_cm: d,
        illuminance_lx: e,
        noise_seed: 17,
    }
}

fn quiet() -> EnvConfig {
    EnvConfig {
        noise_enabled: false,
        ..EnvConfig::default()
    }
}

#[test]
fn steps_out_of_phase_are_protocol_errors() {
    let mut env = common::env();
    assert!(matches!(env.step_high(50), Err(Error::Protocol(_))));
    assert!(matches!(env.step_low(0, 0), Err(Error::Protocol(_)) | Err(Error::Range(_))));
    env.reset_with(&spec(0, 170.0, 150.0)).unwrap();
    assert!(matches!(env.step_low(3, 3), Err(Error::Protocol(_))));
    assert!(env.step_high(EXPOSURE_STEPS).is_err());
    let ae = auto_exposure_baseline(&env.state().unwrap().scene).index;
    let hs = env.step_high(ae).unwrap();
    assert!(hs.handoff);
    assert!(matches!(env.step_high(ae), Err(Error::Protocol(_))));
    assert!(env.step_low(COARSE_ACTIONS, 0).is_err());
    assert!(env.step_low(0, FINE_ACTIONS).is_err());
}

#[test]
fn failed_exposure_ends_the_episode() {
    let mut env = common::env();
    env.reset_with(&spec(1, 170.0, 13.0)).unwrap();
    let hs = env.step_high(0).unwrap();
    assert!(!hs.handoff && hs.done);
    assert_eq!(hs.reward, -1.0);
    assert_eq!(env.state().unwrap().phase, Phase::Done);
    assert!(matches!(env.step_low(0, 0), Err(Error::Protocol(_))));
}

#[test]
fn focus_horizon_is_enforced() {
    let mut env = common::env();
    let sp = spec(2, 200.0, 150.0);
    env.reset_for_low(&sp, auto_exposure_baseline(&env.scene_for(&sp).unwrap()).index).unwrap();
    // lens far from the in-focus control of 60 never detects
    let mut steps = 0;
    loop {
        let ls = env.step_low(0, 0).unwrap();
        steps += 1;
        assert!(!ls.detected);
        assert_eq!(ls.reward, -1.0);
        if ls.done {
            break;
        }
    }
    assert_eq!(steps, env.config().horizon_low);
    assert!(matches!(env.step_low(0, 0), Err(Error::Protocol(_))));
}

#[test]
fn oracle_detects_in_one_step_and_uniform_rarely_does() {
    let mut env = common::env();
    let oracle = evaluate(&mut env, &mut OracleController, 60, 123).unwrap();
    assert_eq!(oracle.median_af_steps, 1.0);
    assert!(oracle.success_rate >= 0.95, "oracle success {}", oracle.success_rate);
    let mut uniform = UniformController(ChaCha8Rng::seed_from_u64(5));
    let u = evaluate(&mut env, &mut uniform, 100, 123).unwrap();
    assert!(u.success_rate <= 0.2, "uniform success {}", u.success_rate);
}

#[test]
fn auto_exposure_targets_mean() {
    for seed in BUNDLED_SCENE_SEEDS {
        let scene = procedural_scene(seed, 170.0, 100.0).unwrap();
        let ae = auto_exposure_baseline(&scene);
        assert!(!ae.saturated);
        assert!(ae.mean >= AE_TARGET_MEAN);
        let below = render_with_sigma(&scene, 0.0, exposure_value(ae.index - 1).unwrap(), false, 0);
        assert!(below.mean() < AE_TARGET_MEAN);
    }
}

#[test]
fn sweep_finds_focus_and_profile_is_unimodal() {
    let mut env = common::env_with(quiet());
    for (k, &d) in [140.0, 170.0, 200.0].iter().enumerate() {
        let sp = spec(BUNDLED_SCENE_SEEDS[k], d, 150.0);
        let scene = env.scene_for(&sp).unwrap();
        env.reset_for_low(&sp, auto_exposure_baseline(&scene).index).unwrap();
        let r = sweep_af(&mut env).unwrap();
        assert!((r.best_lens - scene.f_star()).abs() <= SWEEP_STEP, "best {} f* {}", r.best_lens, scene.f_star());
        let peak = r.profile.iter().position(|p| p.0 == r.best_lens).unwrap();
        assert_eq!(r.steps, 93);
        assert!(r.profile[..=peak].windows(2).all(|w| w[1].1 >= w[0].1));
        assert!(r.profile[peak..].windows(2).all(|w| w[1].1 <= w[0].1));
    }
}

#[test]
fn hillclimb_is_cheap() {
    let mut env = common::env();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let sp = EpisodeSpec::sample(env.config(), &mut rng);
        let scene = env.scene_for(&sp).unwrap();
        env.reset_for_low(&sp, auto_exposure_baseline(&scene).index).unwrap();
        let r = hillclimb_af(&mut env, 4.0).unwrap();
        assert!(r.steps <= 40, "{} renders", r.steps);
    }
}

#[test]
fn bundled_scenes_are_solvable() {
    let env = common::env();
    for seed in BUNDLED_SCENE_SEEDS {
        for (d, e) in [(140.0, 13.0), (200.0, 300.0), (170.0, 100.0)] {
            assert!(env.is_solvable(&spec(seed, d, e)).unwrap(), "scene {seed} at {d} cm {e} lx");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn episodes_replay_exactly(seed in 0u64..6, d in 140.0f64..200.0, e in 13.0f64..300.0, a in 0usize..EXPOSURE_STEPS, c in 0usize..COARSE_ACTIONS, f in 0usize..FINE_ACTIONS) {
        let mut env = common::env();
        let sp = spec(seed, d, e);
        let run = |env: &mut autofocus_core::env::Env| {
            let o = env.reset_with(&sp).unwrap();
            let h = env.step_high(a).unwrap();
            let l = if h.handoff { Some(env.step_low(c, f).unwrap()) } else { None };
            (o, h, l)
        };
        let first = run(&mut env);
        let second = run(&mut env);
        prop_assert_eq!(first, second);
    }

    #[test]
    fn rewards_stay_in_range(seed in 0u64..6, e in 13.0f64..300.0, a in 0usize..EXPOSURE_STEPS, c in 0usize..COARSE_ACTIONS, f in 0usize..FINE_ACTIONS) {
        let mut env = common::env();
        env.reset_with(&spec(seed, 170.0, e)).unwrap();
        let h = env.step_high(a).unwrap();
        prop_assert!((-1.0..=1.0).contains(&h.reward));
        prop_assert!((0.0..=100.0).contains(&h.quality));
        if h.handoff {
            let l = env.step_low(c, f).unwrap();
            prop_assert!((-1.0..=0.0).contains(&l.reward));
            prop_assert_eq!(l.detected, l.quality.is_some());
        }
    }
}

#[test]
fn auto_exposure_compensates_light_and_flags_black_scenes() {
    let scene = procedural_scene(3, 170.0, 150.0).unwrap();
    let dark = auto_exposure_baseline(&scene.with_conditions(170.0, 13.0).unwrap());
    let bright = auto_exposure_baseline(&scene.with_conditions(170.0, 300.0).unwrap());
    assert!(dark.index > bright.index);
    let ae = auto_exposure_baseline(&scene);
    assert!((110.0..=140.0).contains(&ae.mean), "mean {}", ae.mean);
    let black = autofocus_core::optics::Scene::new(
        scene.width(),
        scene.height(),
        vec![0.0; scene.width() * scene.height()],
        scene.object_box(),
        170.0,
        150.0,
    )
    .unwrap();
    let ae = auto_exposure_baseline(&black);
    assert_eq!(ae.index, EXPOSURE_STEPS - 1);
    assert!(ae.saturated);
}

#[test]
fn near_focus_is_detected_and_hillclimb_stops_at_once() {
    let mut env = common::env_with(quiet());
    for seed in BUNDLED_SCENE_SEEDS {
        let sp = spec(seed, 170.0, 150.0);
        let scene = env.scene_for(&sp).unwrap();
        let index = auto_exposure_baseline(&scene).index;
        for off in [-0.5, 0.0, 0.5] {
            env.reset_for_low(&sp, index).unwrap();
            env.probe_lens(scene.f_star() + off).unwrap();
            assert!(env.detect_current().unwrap(), "scene {seed} offset {off}");
        }
        env.reset_for_low(&sp, index).unwrap();
        env.probe_lens(scene.f_star()).unwrap();
        let r = hillclimb_af(&mut env, 4.0).unwrap();
        assert!(r.detected);
        assert_eq!(r.steps, 1);
    }
}
