//! Command-line front end. Exit status 0 on success, 2 on a configuration
//! or usage error, 1 on any other failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bundle::{calibration_blocks, calibration_from_blocks, Bundle};
use super::calibrate::{calibrate, Calibration};
use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::config::RunConfig;
use crate::bench::{
    analyze, compare_histograms, evaluate, evaluate_hillclimb, evaluate_sweep, summary_table,
    GreedyPolicies, OracleController, SummaryRow, UniformController,
};
use crate::detect::{Detector, ExternalDetector, OracleDetector};
use crate::encoder::init_encoder;
use crate::env::{Env, EnvModels};
use crate::error::{Error, Result};
use crate::optics::{blur_sigma, exposure_value, render_with_sigma, LensState, EXPOSURE_STEPS};
use crate::rl::train::{curve_csv, Stage, Trainer};
use crate::scenes::{procedural_scene, SceneDescriptor, BUNDLED_SCENE_SEEDS};

pub const CALIBRATION_FILE: &str = "calibration.dash";
pub const CHECKPOINT_FILE: &str = "checkpoint.dash";
pub const CURVE_FILE: &str = "learning_curve.csv";

#[derive(Debug, Parser)]
#[command(name = "autofocus", version, about = "Simulated two-agent exposure and autofocus control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the quality model and detector thresholds.
    Calibrate,
    /// Train the agents and write a checkpoint and learning curve.
    Train {
        /// single-agent-exposure, single-agent-AF, hierarchical or staged.
        #[arg(long)]
        stage: Option<String>,
        /// Print each learning-curve row while training.
        #[arg(long)]
        verbose: bool,
    },
    /// Greedy evaluation of a trained checkpoint.
    Eval {
        /// Defaults to checkpoint.dash in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Sweep, hill-climb, uniform and oracle baselines, plus the checkpoint if given.
    Bench {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Render one frame as PGM.
    Render {
        /// Procedural scene seed.
        #[arg(long, conflicts_with = "scene_file")]
        scene: Option<u64>,
        /// Scene descriptor (TOML).
        #[arg(long)]
        scene_file: Option<PathBuf>,
        /// Lens control; defaults to the in-focus setting.
        #[arg(long)]
        focus: Option<f64>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u16).range(0..EXPOSURE_STEPS as i64))]
        exposure_index: u16,
        #[arg(long, default_value_t = 170.0)]
        distance: f64,
        #[arg(long, default_value_t = 150.0)]
        illuminance: f64,
        /// Add sensor noise.
        #[arg(long)]
        noise: bool,
        /// Output file name inside the output directory.
        #[arg(long, default_value = "render.pgm")]
        file: String,
    },
    /// Exposure × focus grid at fixed light, projected on three principal components.
    Analyze,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Command::Train {
        stage: Some(stage), ..
    } = &cli.command
    {
        cfg.train.stage = stage.parse::<Stage>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    match cli.command {
        Command::Calibrate => {
            let cal = calibrate(&cfg.calibration, cfg.seed)?;
            save_checkpoint(&out.join(CALIBRATION_FILE), &calibration_blocks(&cal))?;
            println!(
                "quality tau {:.4}; detector {:?}",
                cal.quality.tau(),
                cal.thresholds
            );
            Ok(())
        }
        Command::Train { verbose, .. } => train(&cfg, &out, verbose),
        Command::Eval {
            checkpoint,
            episodes,
        } => {
            let path = checkpoint.unwrap_or_else(|| out.join(CHECKPOINT_FILE));
            let bundle = Bundle::load(&path)?;
            let mut env = Env::new(cfg.env.clone(), models(&cfg, &bundle.calibration, bundle.encoder_seed, &out)?)?;
            let mut ctl = GreedyPolicies::new(&bundle.high, &bundle.low)?;
            let report = evaluate(&mut env, &mut ctl, episodes.unwrap_or(cfg.eval.episodes), cfg.eval.seed)?;
            write(&out.join("eval.csv"), &report.to_csv())?;
            let table = summary_table(&[report.summary_row("trained agents", "BRISQUE-style")]);
            write(&out.join("eval_summary.txt"), &table)?;
            print!("{table}");
            Ok(())
        }
        Command::Bench {
            checkpoint,
            episodes,
        } => bench(&cfg, &out, checkpoint, episodes.unwrap_or(cfg.eval.episodes)),
        Command::Render {
            scene,
            scene_file,
            focus,
            exposure_index,
            distance,
            illuminance,
            noise,
            file,
        } => {
            let scene = match scene_file {
                Some(p) => {
                    let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                    SceneDescriptor::load(&p)?.build(&base)?
                }
                None => procedural_scene(scene.unwrap_or(BUNDLED_SCENE_SEEDS[0]), distance, illuminance)?,
            };
            let lens = LensState::new(focus.unwrap_or(scene.f_star()));
            let sigma = blur_sigma(lens, scene.f_star());
            let frame = render_with_sigma(&scene, sigma, exposure_value(exposure_index.into())?, noise, cfg.seed);
            let path = out.join(file);
            frame.write_pgm(&path)?;
            println!("{} (lens {:.2}, sigma {:.3}, mean {:.1})", path.display(), lens.control(), sigma, frame.mean());
            Ok(())
        }
        Command::Analyze => {
            let cal = calibration(&cfg)?;
            let env = Env::new(cfg.env.clone(), models(&cfg, &cal, cfg.encoder_seed, &out)?)?;
            let a = analyze(&env, &cfg.analyze, cfg.seed)?;
            write(&out.join("pca.csv"), &a.pca.to_csv(&a.labels))?;
            println!(
                "{} frames; eigenvalues {:.4?}; linear accuracy {:.3} (majority {:.3})",
                a.labels.len(),
                a.pca.eigenvalues,
                a.classifier.accuracy,
                a.majority
            );
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn calibration(cfg: &RunConfig) -> Result<Calibration> {
    match &cfg.quality_model {
        Some(p) => calibration_from_blocks(&load_checkpoint(p)?),
        None => calibrate(&cfg.calibration, cfg.seed),
    }
}

fn models(cfg: &RunConfig, cal: &Calibration, encoder_seed: u64, out: &Path) -> Result<EnvModels> {
    let detector: Arc<dyn Detector> = match &cfg.detector.program {
        Some(program) => {
            let scratch = out.join("detector_frames");
            fs::create_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
            Arc::new(ExternalDetector::spawn(program, &cfg.detector.args, &scratch)?)
        }
        None => Arc::new(OracleDetector(cal.thresholds)),
    };
    Ok(EnvModels {
        encoder: Arc::new(init_encoder(encoder_seed)),
        quality: Arc::new(cal.quality.clone()),
        detector,
    })
}

fn train(cfg: &RunConfig, out: &Path, verbose: bool) -> Result<()> {
    let cal = calibration(cfg)?;
    let mut env = Env::new(cfg.env.clone(), models(cfg, &cal, cfg.encoder_seed, out)?)?;
    let mut trainer = Trainer::new(&mut env, cfg.train.clone(), cfg.seed)?;
    trainer.verbose = verbose;
    let result = trainer.run()?;
    write(&out.join(CURVE_FILE), &curve_csv(&result.curve))?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    let bundle = Bundle {
        high: result.high,
        low: result.low,
        encoder_seed: cfg.encoder_seed,
        calibration: cal,
    };
    bundle.save(&out.join(CHECKPOINT_FILE))?;
    println!(
        "{} updates, {} focus steps; wrote {}",
        result.curve.len(),
        result.low_steps,
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn bench(cfg: &RunConfig, out: &Path, checkpoint: Option<PathBuf>, episodes: usize) -> Result<()> {
    let bundle = checkpoint.as_deref().map(Bundle::load).transpose()?;
    let (cal, encoder_seed) = match &bundle {
        Some(b) => (b.calibration.clone(), b.encoder_seed),
        None => (calibration(cfg)?, cfg.encoder_seed),
    };
    let mut env = Env::new(cfg.env.clone(), models(cfg, &cal, encoder_seed, out)?)?;
    let seed = cfg.eval.seed;
    let mut rows: Vec<SummaryRow> = Vec::new();
    let sweep = evaluate_sweep(&mut env, episodes, seed)?;
    write(&out.join("bench_sweep.csv"), &sweep.to_csv())?;
    rows.push(sweep.summary_row("auto exposure + sweep", "Tenengrad"));
    let hill = evaluate_hillclimb(&mut env, episodes, seed)?;
    write(&out.join("bench_hillclimb.csv"), &hill.to_csv())?;
    rows.push(hill.summary_row("auto exposure + hill climb", "detector"));
    let uniform = evaluate(&mut env, &mut UniformController(ChaCha8Rng::seed_from_u64(seed)), episodes, seed)?;
    write(&out.join("bench_uniform.csv"), &uniform.to_csv())?;
    rows.push(uniform.summary_row("uniform random", "-"));
    let oracle = evaluate(&mut env, &mut OracleController, episodes, seed)?;
    write(&out.join("bench_oracle.csv"), &oracle.to_csv())?;
    rows.push(oracle.summary_row("oracle (reads focus)", "-"));
    rows.push(SummaryRow {
        method: "phase-detection AF".into(),
        iqa: "needs PDAF hardware".into(),
        report: None,
    });
    if let Some(b) = &bundle {
        let mut ctl = GreedyPolicies::new(&b.high, &b.low)?;
        let trained = evaluate(&mut env, &mut ctl, episodes, seed)?;
        write(&out.join("bench_trained.csv"), &trained.to_csv())?;
        rows.push(trained.summary_row("trained agents", "BRISQUE-style"));
        let hist = compare_histograms(&mut env, &mut ctl, episodes, seed)?;
        write(&out.join("histograms.csv"), &hist.to_csv())?;
        println!(
            "median frame mean: agent {:.1}, camera auto exposure {:.1}",
            hist.agent_median_mean, hist.camera_median_mean
        );
    }
    let table = summary_table(&rows);
    write(&out.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(())
}
