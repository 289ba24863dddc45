use std::path::Path;
use std::process::Command;

use autofocus_core::image::SensorImage;

fn autofocus(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_autofocus"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

#[test]
fn render_writes_a_frame() {
    let dir = tempfile::tempdir().unwrap();
    let out = autofocus(dir.path(), &["render", "--scene", "3", "--exposure-index", "95"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let img = SensorImage::read_pgm(&dir.path().join("out/render.pgm")).unwrap();
    assert!(img.width() > 0 && img.mean() > 0.0);
}

#[test]
fn unknown_config_key_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nstages = \"staged\"\n").unwrap();
    let out = autofocus(dir.path(), &["--config", cfg.to_str().unwrap(), "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(autofocus(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(autofocus(dir.path(), &["train", "--stage", "solo"]).status.code(), Some(2));
    assert_eq!(
        autofocus(dir.path(), &["render", "--scene", "1", "--exposure-index", "146"]).status.code(),
        Some(2)
    );
}

#[test]
fn corrupt_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("bad.dash");
    std::fs::write(&ck, b"NOPE0000").unwrap();
    let out = autofocus(dir.path(), &["eval", "--checkpoint", ck.to_str().unwrap(), "--episodes", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}
