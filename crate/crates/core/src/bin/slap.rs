use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slap::config::{Dataset, PipelineConfig, SyntheticScene};
use slap::hsi::{generate_synthetic_scene, write_cube, write_ground_truth};
use slap::pipeline::{aggregate_text, run_pipeline, run_sweep};
use slap::stages::{run_stage, Stage};
use slap::Error;

#[derive(Parser)]
#[command(
    name = "slap",
    version,
    about = "Superpixel low-rank denoising with partial-label disambiguation"
)]
struct Cli {
    /// Flat key=value config file; defaults describe the synthetic scene.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (run directory, or stage cache for single stages).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial end to end and write the aggregate report.
    Pipeline,
    /// Segment the image into superpixels.
    Segment,
    /// Solve the low-rank model on every superpixel.
    Solve,
    /// Draw candidate sets and resolve them by label propagation.
    Disambiguate,
    /// Train the classifier on the resolved labels.
    Train,
    /// Predict every pixel and score the test pixels.
    Evaluate,
    /// Write the synthetic scene as a cube, ground truth and config.
    Synth,
    /// Run the pipeline over the lambda x gamma grid.
    Sweep,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(cfg: &PipelineConfig, seed_override: Option<u64>) -> Result<(), Error> {
    let mut scene = match &cfg.dataset {
        Dataset::Synthetic(s) => s.clone(),
        Dataset::Files { .. } => SyntheticScene::default(),
    };
    if let Some(s) = seed_override {
        scene.seed = s;
    }
    let (cube, gt) = generate_synthetic_scene(
        scene.height,
        scene.width,
        scene.bands,
        scene.classes,
        scene.noise,
        scene.seed,
    )?;
    let out: &Path = &cfg.out;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    write_cube(&out.join("cube.hdr"), &cube)?;
    write_ground_truth(&out.join("ground_truth.txt"), &gt)?;
    let config = format!(
        "cube=cube.hdr\nground_truth=ground_truth.txt\nsuperpixels={}\nfalse_labels={}\ntrain_percent={}\ntrials={}\nout=run\n",
        cfg.slic.target, cfg.false_labels, cfg.train_percent, cfg.trials
    );
    let path = out.join("config.txt");
    std::fs::write(&path, config).map_err(|e| Error::Io { path, source: e })?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<i32, Error> {
    let cfg = load_config(cli)?;
    let stage = match cli.command {
        Command::Pipeline => {
            let run = run_pipeline(&cfg)?;
            print!("{}", aggregate_text(&run.aggregate, &run.outcomes));
            return Ok(run.exit_code());
        }
        Command::Synth => {
            synth(&cfg, cli.seed)?;
            return Ok(0);
        }
        Command::Sweep => {
            let points = run_sweep(&cfg)?;
            for p in &points {
                println!(
                    "lambda={} gamma={} oa_mean={:.6} succeeded={}",
                    p.lambda, p.gamma, p.aggregate.oa.mean, p.aggregate.succeeded
                );
            }
            return Ok(0);
        }
        Command::Segment => Stage::Segment,
        Command::Solve => Stage::Solve,
        Command::Disambiguate => Stage::Disambiguate,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
    };
    let out = run_stage(stage, &cfg, &cfg.out)?;
    println!(
        "stage={} cache_hit={} key={} dir={}",
        out.stage,
        out.cache_hit,
        out.key,
        out.dir.display()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
