//! End-to-end runs: segment, solve, disambiguate, train, predict, evaluate.
//!
//! Segmentation and the per-superpixel solves depend only on the image and
//! model settings, so one run computes them once and shares them across
//! trials. Everything downstream of the train/test split is redone per trial
//! with seed `seed + t`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rayon::prelude::*;

use crate::classifier::{reassemble_denoised, Classifier, FeatureTable, TrainedModel};
use crate::config::{Dataset, PipelineConfig, TrainingLabels};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, render_map, ColorMap, EvalReport};
use crate::graph::{build_laplacian, Bandwidth};
use crate::hsi::{
    format_candidates, generate_candidates, generate_synthetic_scene, load_cube, load_ground_truth,
    seeded_rng, split_train_test, stream, GroundTruth, HsiCube, Label, PartialLabeledSet,
};
use crate::lra::{self, LraSolution};
use crate::propagation::{
    assemble_affinity, disambiguate, disambiguation_accuracy, init_confidence, propagate,
    TrainingIndex,
};
use crate::superpixel::{
    compute_base_image, group_pixels, segment, Grouping, Segmentation, SlicParams,
};

#[derive(Debug, Clone)]
pub struct Scene {
    pub cube: HsiCube,
    pub gt: GroundTruth,
}

pub fn load_scene(cfg: &PipelineConfig) -> Result<Scene> {
    let (cube, gt) = match &cfg.dataset {
        Dataset::Files { cube, ground_truth } => {
            let c = load_cube(cube)?;
            let g = load_ground_truth(ground_truth, &c)?;
            (c, g)
        }
        Dataset::Synthetic(s) => {
            generate_synthetic_scene(s.height, s.width, s.bands, s.classes, s.noise, s.seed)?
        }
    };
    cfg.check_false_labels(gt.classes())?;
    Ok(Scene { cube, gt })
}

/// Runs `f` on a pool of `workers` threads (`0` = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn segment_scene(cube: &HsiCube, slic: &SlicParams) -> Result<Segmentation> {
    segment(&compute_base_image(cube), slic)
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub grouping: Grouping,
    pub solutions: Vec<LraSolution>,
}

impl Decomposition {
    pub fn features(&self) -> Result<FeatureTable> {
        reassemble_denoised(&self.solutions, &self.grouping)
    }

    /// `superpixel,pixels,iterations,converged,final_residual` rows.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("superpixel,pixels,iterations,converged,final_residual\n");
        for (i, sol) in self.solutions.iter().enumerate() {
            let last = sol.trace.last().map_or(0.0, |r| r.max());
            let _ = writeln!(
                s,
                "{i},{},{},{},{last:e}",
                sol.z.ncols(),
                sol.iterations(),
                sol.converged
            );
        }
        s
    }
}

/// Builds each superpixel's prior and solves it. Blocks run in parallel on the
/// current pool; results stay in superpixel order.
pub fn solve_superpixels(
    cube: &HsiCube,
    seg: &Segmentation,
    cfg: &PipelineConfig,
) -> Result<Decomposition> {
    let grouping = group_pixels(cube, seg)?;
    let solutions = grouping
        .blocks
        .par_iter()
        .map(|block| {
            let prior = build_laplacian(block, cfg.k_neighbors, Bandwidth::MeanNearestNeighbor)?;
            lra::solve(block, &prior, &cfg.solver)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Decomposition {
        grouping,
        solutions,
    })
}

#[derive(Debug, Clone)]
pub struct Disambiguation {
    pub set: PartialLabeledSet,
    pub resolved: Vec<Label>,
    pub accuracy: f64,
    pub rounds: usize,
}

impl Disambiguation {
    pub fn train_pixels(&self) -> Vec<usize> {
        self.set.pixels()
    }
}

/// Resolves an existing candidate set using the superpixel coefficients.
pub fn resolve_candidates(
    set: PartialLabeledSet,
    decomposition: &Decomposition,
    cfg: &PipelineConfig,
) -> Result<Disambiguation> {
    let owner = &decomposition.grouping.owner;
    let index = set
        .entries
        .iter()
        .map(|e| {
            owner
                .get(e.pixel)
                .map(|&(superpixel, column)| TrainingIndex { superpixel, column })
                .ok_or_else(|| Error::Data(format!("training pixel {} outside the image", e.pixel)))
        })
        .collect::<Result<Vec<_>>>()?;
    let affinity = assemble_affinity(&decomposition.solutions, &index)?;
    let initial = init_confidence(&set)?;
    let candidates = set.candidate_sets();
    let propagated = propagate(&initial, &affinity.graph, &candidates, &cfg.propagation)?;
    let resolved = disambiguate(&propagated.confidence, &candidates);
    let accuracy = disambiguation_accuracy(&set, &resolved);
    Ok(Disambiguation {
        set,
        resolved,
        accuracy,
        rounds: propagated.rounds,
    })
}

/// Draws the trial's split and candidate sets, then resolves them.
pub fn disambiguate_trial(
    scene: &Scene,
    decomposition: &Decomposition,
    cfg: &PipelineConfig,
    trial_seed: u64,
) -> Result<Disambiguation> {
    let split = split_train_test(&scene.gt, cfg.train_percent, trial_seed)?;
    let set = generate_candidates(&split.train, &scene.gt, cfg.false_labels, trial_seed)?;
    resolve_candidates(set, decomposition, cfg)
}

/// Labels the classifier is trained on, per [`TrainingLabels`].
pub fn training_labels(dis: &Disambiguation, mode: TrainingLabels, trial_seed: u64) -> Vec<Label> {
    match mode {
        TrainingLabels::Disambiguated => dis.resolved.clone(),
        TrainingLabels::True => dis.set.entries.iter().map(|e| e.true_label).collect(),
        TrainingLabels::RandomCandidate => {
            let mut rng = seeded_rng(trial_seed, stream::ABLATION);
            dis.set
                .entries
                .iter()
                .map(|e| {
                    *e.candidates
                        .choose(&mut rng)
                        .expect("non-empty candidate set")
                })
                .collect()
        }
    }
}

pub fn train_model(
    features: &FeatureTable,
    dis: &Disambiguation,
    cfg: &PipelineConfig,
    trial_seed: u64,
) -> Result<TrainedModel> {
    let train = features.select_pixels(&dis.train_pixels())?;
    let labels = training_labels(dis, cfg.training_labels, trial_seed);
    TrainedModel::train(&cfg.classifier, &train, &labels)
}

/// Labeled pixels outside the training set, ascending.
pub fn test_pixels(gt: &GroundTruth, train: &[usize]) -> Vec<usize> {
    let mut is_train = vec![false; gt.labels().len()];
    for &p in train {
        if let Some(slot) = is_train.get_mut(p) {
            *slot = true;
        }
    }
    gt.labels()
        .iter()
        .enumerate()
        .filter(|&(p, &l)| l != 0 && !is_train[p])
        .map(|(p, _)| p)
        .collect()
}

#[derive(Debug, Clone)]
pub struct Prediction {
    /// One label per pixel.
    pub labels: Vec<Label>,
    pub report: EvalReport,
    pub map: ColorMap,
}

/// Predicts every pixel (the feature table must cover the image in
/// row-major order) and scores the labeled non-training pixels.
pub fn predict_and_evaluate(
    model: &dyn Classifier,
    features: &FeatureTable,
    gt: &GroundTruth,
    train: &[usize],
) -> Result<Prediction> {
    let labels = model.predict(features)?;
    let report = evaluate(&labels, gt, &test_pixels(gt, train))?;
    let map = render_map(&labels, gt)?;
    Ok(Prediction {
        labels,
        report,
        map,
    })
}

/// Per-trial report: the evaluation keys followed by `seed` and
/// `disambiguation_accuracy`.
pub fn trial_report_text(report: &EvalReport, seed: u64, disambiguation: f64) -> String {
    let mut s = report.to_text();
    let _ = writeln!(s, "seed={seed}");
    let _ = writeln!(s, "disambiguation_accuracy={disambiguation:.6}");
    s
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub disambiguation: Disambiguation,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialFailure {
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for TrialFailure {
    fn from(e: &Error) -> Self {
        Self {
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    /// `1..=trials`.
    pub trial: usize,
    pub seed: u64,
    pub result: std::result::Result<TrialResult, TrialFailure>,
}

fn run_one_trial(
    scene: &Scene,
    decomposition: &Decomposition,
    features: &FeatureTable,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<TrialResult> {
    let disambiguation = disambiguate_trial(scene, decomposition, cfg, seed)?;
    let model = train_model(features, &disambiguation, cfg, seed)?;
    let prediction =
        predict_and_evaluate(&model, features, &scene.gt, &disambiguation.train_pixels())?;
    Ok(TrialResult {
        disambiguation,
        prediction,
    })
}

/// Outcome of the shared (trial-independent) stages.
#[derive(Debug, Clone)]
pub struct SharedStages {
    pub segmentation: Segmentation,
    pub decomposition: std::result::Result<Decomposition, TrialFailure>,
}

pub fn run_shared_stages(scene: &Scene, cfg: &PipelineConfig) -> Result<SharedStages> {
    let segmentation = segment_scene(&scene.cube, &cfg.slic)?;
    let decomposition =
        solve_superpixels(&scene.cube, &segmentation, cfg).map_err(|e| TrialFailure::from(&e));
    Ok(SharedStages {
        segmentation,
        decomposition,
    })
}

/// All trials in memory; call inside [`with_workers`] to bound parallelism.
pub fn run_trials(scene: &Scene, shared: &SharedStages, cfg: &PipelineConfig) -> Vec<TrialOutcome> {
    let features = shared
        .decomposition
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|d| d.features().map_err(|e| TrialFailure::from(&e)));
    (1..=cfg.trials)
        .map(|trial| {
            let seed = cfg.seed.wrapping_add(trial as u64);
            let result = match (&shared.decomposition, &features) {
                (Ok(d), Ok(f)) => {
                    run_one_trial(scene, d, f, cfg, seed).map_err(|e| TrialFailure::from(&e))
                }
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
            };
            TrialOutcome {
                trial,
                seed,
                result,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub trials: usize,
    pub succeeded: usize,
    pub oa: Stat,
    pub aa: Stat,
    pub kappa: Stat,
    pub disambiguation: Stat,
}

impl Aggregate {
    pub fn of(outcomes: &[TrialOutcome]) -> Self {
        let ok: Vec<&TrialResult> = outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok())
            .collect();
        let stat = |f: &dyn Fn(&TrialResult) -> f64| {
            Stat::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
        };
        Self {
            trials: outcomes.len(),
            succeeded: ok.len(),
            oa: stat(&|r| r.prediction.report.oa),
            aa: stat(&|r| r.prediction.report.aa),
            kappa: stat(&|r| r.prediction.report.kappa),
            disambiguation: stat(&|r| r.disambiguation.accuracy),
        }
    }
}

/// `key=value` aggregate with one `trial_<t>` line per trial; failed trials
/// carry `failed exit=<code>` and the error message.
pub fn aggregate_text(agg: &Aggregate, outcomes: &[TrialOutcome]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "trials={}", agg.trials);
    let _ = writeln!(s, "succeeded={}", agg.succeeded);
    let _ = writeln!(s, "failed={}", agg.trials - agg.succeeded);
    for (name, st) in [
        ("oa", agg.oa),
        ("aa", agg.aa),
        ("kappa", agg.kappa),
        ("disambiguation_accuracy", agg.disambiguation),
    ] {
        let _ = writeln!(s, "{name}_mean={:.6}", st.mean);
        let _ = writeln!(s, "{name}_std={:.6}", st.std);
    }
    for o in outcomes {
        match &o.result {
            Ok(r) => {
                let rep = &r.prediction.report;
                let _ = writeln!(
                    s,
                    "trial_{}=ok seed={} oa={:.6} aa={:.6} kappa={:.6} disambiguation_accuracy={:.6}",
                    o.trial, o.seed, rep.oa, rep.aa, rep.kappa, r.disambiguation.accuracy
                );
            }
            Err(f) => {
                let msg = f.message.replace('\n', " ");
                let _ = writeln!(
                    s,
                    "trial_{}=failed seed={} exit={} error={msg}",
                    o.trial, o.seed, f.exit_code
                );
            }
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub dir: PathBuf,
    pub outcomes: Vec<TrialOutcome>,
    pub aggregate: Aggregate,
}

impl PipelineRun {
    /// Exit code for the run: 0 when any trial succeeded, else the first
    /// failure's code.
    pub fn exit_code(&self) -> i32 {
        if self.aggregate.succeeded > 0 {
            return 0;
        }
        self.outcomes
            .iter()
            .find_map(|o| o.result.as_ref().err().map(|f| f.exit_code))
            .unwrap_or(0)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `segmentation.txt`, `solve_summary.csv`, per-trial
/// `trial_<t>/{report.txt, map.ppm, candidates.txt}` and `aggregate.txt`
/// under `dir`.
pub fn write_run(
    dir: &Path,
    shared: &SharedStages,
    outcomes: &[TrialOutcome],
    aggregate: &Aggregate,
) -> Result<()> {
    create_dir(dir)?;
    shared.segmentation.write(&dir.join("segmentation.txt"))?;
    if let Ok(d) = &shared.decomposition {
        write(&dir.join("solve_summary.csv"), d.summary_csv())?;
    }
    for o in outcomes {
        let Ok(r) = &o.result else { continue };
        let tdir = dir.join(format!("trial_{}", o.trial));
        create_dir(&tdir)?;
        let dis = &r.disambiguation;
        write(
            &tdir.join("report.txt"),
            trial_report_text(&r.prediction.report, o.seed, dis.accuracy),
        )?;
        r.prediction.map.write_ppm(&tdir.join("map.ppm"))?;
        write(
            &tdir.join("candidates.txt"),
            format_candidates(&dis.set, Some(&dis.resolved)),
        )?;
    }
    write(
        &dir.join("aggregate.txt"),
        aggregate_text(aggregate, outcomes),
    )
}

/// Loads the data, runs every trial and writes the run directory `cfg.out`.
/// Data and config problems are returned as errors; failures inside the
/// stages are recorded per trial.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let scene = load_scene(cfg)?;
    with_workers(cfg.workers, || {
        let shared = run_shared_stages(&scene, cfg)?;
        let outcomes = run_trials(&scene, &shared, cfg);
        let aggregate = Aggregate::of(&outcomes);
        write_run(&cfg.out, &shared, &outcomes, &aggregate)?;
        Ok(PipelineRun {
            dir: cfg.out.clone(),
            outcomes,
            aggregate,
        })
    })?
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    pub gamma: f64,
    pub aggregate: Aggregate,
}

fn sweep_dir_name(lambda: f64, gamma: f64) -> String {
    format!("lambda_{lambda}_gamma_{gamma}")
}

/// Runs the pipeline over the `sweep_lambda x sweep_gamma` grid. Each point
/// writes its run under `<out>/<lambda_..._gamma_...>`; `<out>/sweep.csv`
/// collects the aggregates.
pub fn run_sweep(cfg: &PipelineConfig) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let scene = load_scene(cfg)?;
    create_dir(&cfg.out)?;
    let points = with_workers(cfg.workers, || -> Result<Vec<SweepPoint>> {
        let segmentation = segment_scene(&scene.cube, &cfg.slic)?;
        let mut points = Vec::new();
        for &lambda in &cfg.sweep_lambda {
            for &gamma in &cfg.sweep_gamma {
                let mut point = cfg.clone();
                point.solver.lambda = lambda;
                point.solver.gamma = gamma;
                point.out = cfg.out.join(sweep_dir_name(lambda, gamma));
                let shared = SharedStages {
                    segmentation: segmentation.clone(),
                    decomposition: solve_superpixels(&scene.cube, &segmentation, &point)
                        .map_err(|e| TrialFailure::from(&e)),
                };
                let outcomes = run_trials(&scene, &shared, &point);
                let aggregate = Aggregate::of(&outcomes);
                write_run(&point.out, &shared, &outcomes, &aggregate)?;
                points.push(SweepPoint {
                    lambda,
                    gamma,
                    aggregate,
                });
            }
        }
        Ok(points)
    })??;
    let mut csv = String::from(
        "lambda,gamma,succeeded,oa_mean,oa_std,aa_mean,aa_std,kappa_mean,kappa_std,disambiguation_mean\n",
    );
    for p in &points {
        let a = &p.aggregate;
        let _ = writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            p.lambda,
            p.gamma,
            a.succeeded,
            a.oa.mean,
            a.oa.std,
            a.aa.mean,
            a.aa.std,
            a.kappa.mean,
            a.kappa.std,
            a.disambiguation.mean
        );
    }
    write(&cfg.out.join("sweep.csv"), csv)?;
    Ok(points)
}
