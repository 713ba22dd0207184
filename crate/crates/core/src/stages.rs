//! Single-stage execution over an on-disk cache.
//!
//! Each stage owns `<cache>/<stage>/` holding its artifacts and a `KEY` file.
//! The key is a SHA-256 over every setting the stage and its upstream stages
//! depend on, so changing a parameter invalidates exactly the stages that
//! consume it. Stages run with the first trial's seed, `seed + 1`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierKind, KernelWidth, TrainedModel};
use crate::config::{PipelineConfig, TrainingLabels};
use crate::error::{Error, Result};
use crate::hsi::{format_candidates, parse_candidates};
use crate::lra::{decode_solutions, encode_solutions, JUpdate};
use crate::pipeline::{
    disambiguate_trial, load_scene, predict_and_evaluate, segment_scene, solve_superpixels,
    train_model, trial_report_text, with_workers, Decomposition, Disambiguation, Scene,
};
use crate::propagation::disambiguation_accuracy;
use crate::raster::write_int_raster;
use crate::superpixel::{group_pixels, Segmentation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Segment,
    Solve,
    Disambiguate,
    Train,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Segment,
        Stage::Solve,
        Stage::Disambiguate,
        Stage::Train,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Segment => "segment",
            Stage::Solve => "solve",
            Stage::Disambiguate => "disambiguate",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Files a complete artifact of this stage contains.
    pub fn artifacts(self) -> &'static [&'static str] {
        match self {
            Stage::Segment => &["segmentation.txt"],
            Stage::Solve => &["solutions.bin", "solve_summary.csv"],
            Stage::Disambiguate => &["candidates.txt", "disambiguation.txt"],
            Stage::Train => &["model.bin"],
            Stage::Evaluate => &["report.txt", "map.ppm", "predictions.txt"],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Seed the single-stage path uses (the pipeline's first trial).
pub fn stage_seed(cfg: &PipelineConfig) -> u64 {
    cfg.seed.wrapping_add(1)
}

fn scene_fingerprint(scene: &Scene) -> String {
    let mut h = Sha256::new();
    let c = &scene.cube;
    for v in [c.height(), c.width(), c.bands()] {
        h.update((v as u64).to_le_bytes());
    }
    for v in c.data() {
        h.update(v.to_le_bytes());
    }
    for &l in scene.gt.labels() {
        h.update(l.to_le_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn chain(parent: &str, stage: Stage, fields: &[(&str, String)]) -> String {
    let mut h = Sha256::new();
    h.update(parent.as_bytes());
    h.update(b"\n");
    h.update(stage.name().as_bytes());
    for (k, v) in fields {
        h.update(format!("\n{k}={v}").as_bytes());
    }
    hex(&h.finalize())
}

/// Cache keys of all stages, in pipeline order.
pub fn stage_keys(cfg: &PipelineConfig, scene: &Scene) -> [String; 5] {
    let s = &cfg.solver;
    let segment = chain(
        &scene_fingerprint(scene),
        Stage::Segment,
        &[
            ("superpixels", cfg.slic.target.to_string()),
            ("compactness", cfg.slic.compactness.to_string()),
            ("slic_iterations", cfg.slic.iterations.to_string()),
        ],
    );
    let solve = chain(
        &segment,
        Stage::Solve,
        &[
            ("k_neighbors", cfg.k_neighbors.to_string()),
            ("lambda", s.lambda.to_string()),
            ("gamma", s.gamma.to_string()),
            ("mu0", s.mu0.to_string()),
            ("mu_max", s.mu_max.to_string()),
            ("rho", s.rho.to_string()),
            ("epsilon", s.epsilon.to_string()),
            ("max_iters", s.max_iters.to_string()),
            ("svt_rank", s.svt_rank.to_string()),
            (
                "j_update",
                match s.j_update {
                    JUpdate::Stationary => "stationary".into(),
                    JUpdate::Pseudoinverse => "pseudoinverse".into(),
                },
            ),
        ],
    );
    let p = &cfg.propagation;
    let disambiguate = chain(
        &solve,
        Stage::Disambiguate,
        &[
            ("train_percent", cfg.train_percent.to_string()),
            ("false_labels", cfg.false_labels.to_string()),
            ("alpha", p.alpha.to_string()),
            ("propagation_rounds", p.max_rounds.to_string()),
            ("propagation_tol", p.tol.to_string()),
            ("seed", stage_seed(cfg).to_string()),
        ],
    );
    let classifier = match &cfg.classifier {
        ClassifierKind::NearestNeighbor => "nearest".to_string(),
        ClassifierKind::Svm(p) => format!(
            "svm c={} sigma={} tol={} max_iter={}",
            p.c,
            match p.width {
                KernelWidth::Median => "median".to_string(),
                KernelWidth::Fixed(w) => w.to_string(),
            },
            p.tol,
            p.max_iter
        ),
    };
    let train = chain(
        &disambiguate,
        Stage::Train,
        &[
            ("classifier", classifier),
            (
                "training_labels",
                match cfg.training_labels {
                    TrainingLabels::Disambiguated => "disambiguated".into(),
                    TrainingLabels::RandomCandidate => "random_candidate".into(),
                    TrainingLabels::True => "true".into(),
                },
            ),
        ],
    );
    let evaluate = chain(&train, Stage::Evaluate, &[]);
    [segment, solve, disambiguate, train, evaluate]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub stage: Stage,
    pub dir: PathBuf,
    pub key: String,
    pub cache_hit: bool,
}

fn read_key(dir: &Path) -> Option<String> {
    fs::read_to_string(dir.join("KEY"))
        .ok()
        .map(|s| s.trim().to_string())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn complete(dir: &Path, stage: Stage, key: &str) -> bool {
    read_key(dir).as_deref() == Some(key) && stage.artifacts().iter().all(|a| dir.join(a).is_file())
}

/// Runs exactly one stage, reusing cached upstream artifacts.
///
/// The upstream stage must have been run with matching settings: a missing
/// artifact is a prerequisite error and a key mismatch is a stale-cache
/// error. A stage whose own artifact is current is a cache hit and is not
/// recomputed.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, cache_dir: &Path) -> Result<StageOutput> {
    cfg.validate()?;
    let scene = load_scene(cfg)?;
    let keys = stage_keys(cfg, &scene);
    let key_of = |s: Stage| keys[s as usize].clone();
    let dir_of = |s: Stage| cache_dir.join(s.name());

    for up in Stage::ALL.into_iter().filter(|&s| s < stage) {
        let up_dir = dir_of(up);
        match read_key(&up_dir) {
            None => {
                return Err(Error::Prerequisite(format!(
                    "`{stage}` needs the `{up}` artifact in {}; run `slap {up}` first",
                    cache_dir.display()
                )))
            }
            Some(k) if k != key_of(up) || !complete(&up_dir, up, &k) => {
                return Err(Error::StaleCache(format!(
                    "`{up}` artifact in {} was built with different settings; re-run `slap {up}`",
                    up_dir.display()
                )))
            }
            Some(_) => {}
        }
    }

    let dir = dir_of(stage);
    let key = key_of(stage);
    if complete(&dir, stage, &key) {
        return Ok(StageOutput {
            stage,
            dir,
            key,
            cache_hit: true,
        });
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let key_path = dir.join("KEY");
    if key_path.exists() {
        fs::remove_file(&key_path).map_err(|e| Error::io(&key_path, e))?;
    }

    with_workers(cfg.workers, || compute(stage, cfg, &scene, &dir, cache_dir))??;
    write(&key_path, format!("{key}\n"))?;
    Ok(StageOutput {
        stage,
        dir,
        key,
        cache_hit: false,
    })
}

fn load_decomposition(scene: &Scene, cache: &Path) -> Result<Decomposition> {
    let seg = Segmentation::read(&cache.join(Stage::Segment.name()).join("segmentation.txt"))?;
    let grouping = group_pixels(&scene.cube, &seg)?;
    let solutions = decode_solutions(&read_bytes(
        &cache.join(Stage::Solve.name()).join("solutions.bin"),
    )?)?;
    if solutions.len() != grouping.blocks.len()
        || solutions
            .iter()
            .zip(&grouping.blocks)
            .any(|(s, b)| s.z.ncols() != b.len())
    {
        return Err(Error::StaleCache(
            "solver output does not match the segmentation; re-run `slap solve`".into(),
        ));
    }
    Ok(Decomposition {
        grouping,
        solutions,
    })
}

fn load_disambiguation(scene: &Scene, cache: &Path) -> Result<Disambiguation> {
    let text = read_string(
        &cache
            .join(Stage::Disambiguate.name())
            .join("candidates.txt"),
    )?;
    let (set, resolved) = parse_candidates(&text, scene.gt.classes())?;
    let resolved =
        resolved.ok_or_else(|| Error::Data("candidate file lacks resolved labels".into()))?;
    let accuracy = disambiguation_accuracy(&set, &resolved);
    Ok(Disambiguation {
        set,
        resolved,
        accuracy,
        rounds: 0,
    })
}

fn compute(
    stage: Stage,
    cfg: &PipelineConfig,
    scene: &Scene,
    dir: &Path,
    cache: &Path,
) -> Result<()> {
    let seed = stage_seed(cfg);
    match stage {
        Stage::Segment => {
            segment_scene(&scene.cube, &cfg.slic)?.write(&dir.join("segmentation.txt"))
        }
        Stage::Solve => {
            let seg =
                Segmentation::read(&cache.join(Stage::Segment.name()).join("segmentation.txt"))?;
            let d = solve_superpixels(&scene.cube, &seg, cfg)?;
            write(&dir.join("solutions.bin"), encode_solutions(&d.solutions))?;
            write(&dir.join("solve_summary.csv"), d.summary_csv())
        }
        Stage::Disambiguate => {
            let d = load_decomposition(scene, cache)?;
            let dis = disambiguate_trial(scene, &d, cfg, seed)?;
            write(
                &dir.join("candidates.txt"),
                format_candidates(&dis.set, Some(&dis.resolved)),
            )?;
            write(
                &dir.join("disambiguation.txt"),
                format!(
                    "disambiguation_accuracy={:.6}\npropagation_rounds={}\n",
                    dis.accuracy, dis.rounds
                ),
            )
        }
        Stage::Train => {
            let d = load_decomposition(scene, cache)?;
            let dis = load_disambiguation(scene, cache)?;
            let model = train_model(&d.features()?, &dis, cfg, seed)?;
            model.save(&dir.join("model.bin"))
        }
        Stage::Evaluate => {
            let d = load_decomposition(scene, cache)?;
            let dis = load_disambiguation(scene, cache)?;
            let model = TrainedModel::load(&cache.join(Stage::Train.name()).join("model.bin"))?;
            let pred =
                predict_and_evaluate(&model, &d.features()?, &scene.gt, &dis.train_pixels())?;
            write(
                &dir.join("report.txt"),
                trial_report_text(&pred.report, seed, dis.accuracy),
            )?;
            pred.map.write_ppm(&dir.join("map.ppm"))?;
            let labels: Vec<i64> = pred.labels.iter().map(|&l| i64::from(l)).collect();
            write_int_raster(&dir.join("predictions.txt"), scene.gt.width(), &labels)
        }
    }
}
