//! Flat `key=value` run configuration.
//!
//! Recognised keys and defaults:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `dataset` | `files` | `files` or `synthetic` |
//! | `cube`, `ground_truth` | | header and label raster, relative to the config file |
//! | `synth_height`, `synth_width`, `synth_bands`, `synth_classes` | 32, 32, 16, 4 | synthetic scene shape |
//! | `synth_noise`, `synth_seed` | 0.05, 0 | synthetic noise std and generator seed |
//! | `superpixels` | 64 | target superpixel count |
//! | `compactness`, `slic_iterations` | 0.1, 10 | segmenter settings |
//! | `k_neighbors` | 10 | graph neighbours per pixel |
//! | `lambda`, `gamma` | 1, 20 | model weights |
//! | `mu0`, `mu_max`, `rho`, `epsilon`, `max_iters` | 1e-4, 1e12, 1.1, 1e-3, 200 | solver schedule |
//! | `j_update` | `stationary` | `stationary` or `pseudoinverse` |
//! | `svt_rank` | 0 | singular triplets kept per thresholding step, 0 = exact full SVD |
//! | `alpha`, `propagation_rounds`, `propagation_tol` | 0.96, 100, 1e-6 | label propagation |
//! | `false_labels` | 1 | false labels per candidate set |
//! | `train_percent` | 0.1 | per-class training fraction |
//! | `seed`, `trials` | 0, 10 | trial `t` uses seed `seed + t` |
//! | `training_labels` | `disambiguated` | `disambiguated`, `random_candidate` or `true` |
//! | `classifier` | `svm` | `svm` or `nearest` |
//! | `svm_c`, `svm_sigma`, `svm_tol` | 100, `median`, 1e-3 | SVM settings |
//! | `workers` | 0 | solve worker threads, 0 = all cores |
//! | `out` | `slap-out` | output directory, relative to the config file |
//! | `sweep_lambda`, `sweep_gamma` | see [`DEFAULT_SWEEP_LAMBDA`], [`DEFAULT_SWEEP_GAMMA`] | sweep grid |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classifier::{ClassifierKind, KernelWidth, SvmParams};
use crate::error::{Error, Result};
use crate::hsi::parse_key_values;
use crate::lra::{JUpdate, SolverConfig};
use crate::propagation::PropagationParams;
use crate::superpixel::SlicParams;

pub const DEFAULT_SWEEP_LAMBDA: [f64; 3] = [0.01, 0.1, 1.0];
pub const DEFAULT_SWEEP_GAMMA: [f64; 12] = [
    0.0, 0.001, 0.01, 0.1, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 70.0, 100.0,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            bands: 16,
            classes: 4,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Files {
        cube: PathBuf,
        ground_truth: PathBuf,
    },
    Synthetic(SyntheticScene),
}

/// Which labels the classifier is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingLabels {
    Disambiguated,
    /// Ablation: one candidate drawn uniformly per pixel.
    RandomCandidate,
    /// Oracle: the hidden true labels.
    True,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: Dataset,
    pub slic: SlicParams,
    pub k_neighbors: usize,
    pub solver: SolverConfig,
    pub propagation: PropagationParams,
    pub false_labels: usize,
    pub train_percent: f64,
    pub seed: u64,
    pub trials: usize,
    pub training_labels: TrainingLabels,
    pub classifier: ClassifierKind,
    pub workers: usize,
    pub out: PathBuf,
    pub sweep_lambda: Vec<f64>,
    pub sweep_gamma: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::Synthetic(SyntheticScene::default()),
            slic: SlicParams::new(64),
            k_neighbors: 10,
            solver: SolverConfig::default(),
            propagation: PropagationParams::default(),
            false_labels: 1,
            train_percent: 0.1,
            seed: 0,
            trials: 10,
            training_labels: TrainingLabels::Disambiguated,
            classifier: ClassifierKind::Svm(SvmParams::default()),
            workers: 0,
            out: PathBuf::from("slap-out"),
            sweep_lambda: DEFAULT_SWEEP_LAMBDA.to_vec(),
            sweep_gamma: DEFAULT_SWEEP_GAMMA.to_vec(),
        }
    }
}

struct Fields {
    map: BTreeMap<String, String>,
}

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.map.remove(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{t}`")))
                })
                .collect(),
        }
    }
}

impl PipelineConfig {
    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut f = Fields {
            map: parse_key_values(text)?,
        };
        let d = Self::default();
        let resolve = |p: String| base_dir.join(p);

        let dataset = match f.take_str("dataset").as_deref().unwrap_or("files") {
            "files" => {
                let cube = f
                    .take_str("cube")
                    .ok_or_else(|| Error::Config("`cube` is required for dataset=files".into()))?;
                let gt = f.take_str("ground_truth").ok_or_else(|| {
                    Error::Config("`ground_truth` is required for dataset=files".into())
                })?;
                Dataset::Files {
                    cube: resolve(cube),
                    ground_truth: resolve(gt),
                }
            }
            "synthetic" => {
                let s = SyntheticScene::default();
                Dataset::Synthetic(SyntheticScene {
                    height: f.take("synth_height", s.height)?,
                    width: f.take("synth_width", s.width)?,
                    bands: f.take("synth_bands", s.bands)?,
                    classes: f.take("synth_classes", s.classes)?,
                    noise: f.take("synth_noise", s.noise)?,
                    seed: f.take("synth_seed", s.seed)?,
                })
            }
            other => return Err(Error::Config(format!("unknown dataset `{other}`"))),
        };
        let slic = SlicParams {
            target: f.take("superpixels", d.slic.target)?,
            compactness: f.take("compactness", d.slic.compactness)?,
            iterations: f.take("slic_iterations", d.slic.iterations)?,
        };
        let j_update = match f.take_str("j_update").as_deref().unwrap_or("stationary") {
            "stationary" => JUpdate::Stationary,
            "pseudoinverse" => JUpdate::Pseudoinverse,
            other => return Err(Error::Config(format!("unknown j_update `{other}`"))),
        };
        let solver = SolverConfig {
            lambda: f.take("lambda", d.solver.lambda)?,
            gamma: f.take("gamma", d.solver.gamma)?,
            mu0: f.take("mu0", d.solver.mu0)?,
            mu_max: f.take("mu_max", d.solver.mu_max)?,
            rho: f.take("rho", d.solver.rho)?,
            epsilon: f.take("epsilon", d.solver.epsilon)?,
            max_iters: f.take("max_iters", d.solver.max_iters)?,
            j_update,
            svt_rank: f.take("svt_rank", d.solver.svt_rank)?,
        };
        let propagation = PropagationParams {
            alpha: f.take("alpha", d.propagation.alpha)?,
            max_rounds: f.take("propagation_rounds", d.propagation.max_rounds)?,
            tol: f.take("propagation_tol", d.propagation.tol)?,
        };
        let training_labels = match f
            .take_str("training_labels")
            .as_deref()
            .unwrap_or("disambiguated")
        {
            "disambiguated" => TrainingLabels::Disambiguated,
            "random_candidate" => TrainingLabels::RandomCandidate,
            "true" => TrainingLabels::True,
            other => return Err(Error::Config(format!("unknown training_labels `{other}`"))),
        };
        let classifier = match f.take_str("classifier").as_deref().unwrap_or("svm") {
            "svm" => {
                let def = SvmParams::default();
                let width =
                    match f.take_str("svm_sigma").as_deref().unwrap_or("median") {
                        "median" => KernelWidth::Median,
                        v => KernelWidth::Fixed(v.parse().map_err(|_| {
                            Error::Config(format!("`svm_sigma`: cannot parse `{v}`"))
                        })?),
                    };
                ClassifierKind::Svm(SvmParams {
                    c: f.take("svm_c", def.c)?,
                    width,
                    tol: f.take("svm_tol", def.tol)?,
                    max_iter: def.max_iter,
                })
            }
            "nearest" => ClassifierKind::NearestNeighbor,
            other => return Err(Error::Config(format!("unknown classifier `{other}`"))),
        };
        let cfg = Self {
            dataset,
            slic,
            k_neighbors: f.take("k_neighbors", d.k_neighbors)?,
            solver,
            propagation,
            false_labels: f.take("false_labels", d.false_labels)?,
            train_percent: f.take("train_percent", d.train_percent)?,
            seed: f.take("seed", d.seed)?,
            trials: f.take("trials", d.trials)?,
            training_labels,
            classifier,
            workers: f.take("workers", d.workers)?,
            out: resolve(f.take_str("out").unwrap_or_else(|| "slap-out".into())),
            sweep_lambda: f.take_list("sweep_lambda", &DEFAULT_SWEEP_LAMBDA)?,
            sweep_gamma: f.take_list("sweep_gamma", &DEFAULT_SWEEP_GAMMA)?,
        };
        if let Some(key) = f.map.keys().next() {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or_else(|| Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.solver.validate().map_err(|_| {
            Error::Config(format!("solver settings out of range: {:?}", self.solver))
        })?;
        let a = self.propagation.alpha;
        if !(a > 0.0 && a < 1.0) {
            return bad(format!("alpha = {a} must lie in (0, 1)"));
        }
        if self.propagation.max_rounds == 0 || !(self.propagation.tol > 0.0) {
            return bad("propagation_rounds must be >= 1 and propagation_tol > 0".into());
        }
        let p = self.train_percent;
        if !(p > 0.0 && p < 1.0) {
            return bad(format!("train_percent = {p} must lie in (0, 1)"));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.slic.target == 0 || self.slic.iterations == 0 || !(self.slic.compactness >= 0.0) {
            return bad("superpixels and slic_iterations must be >= 1, compactness >= 0".into());
        }
        if let Dataset::Synthetic(s) = &self.dataset {
            if s.height == 0 || s.width == 0 || s.bands == 0 || s.classes == 0 {
                return bad("synthetic scene dimensions must be positive".into());
            }
            if !(s.noise >= 0.0 && s.noise.is_finite()) {
                return bad(format!("synth_noise = {} must be >= 0", s.noise));
            }
            self.check_false_labels(s.classes)?;
        }
        if let ClassifierKind::Svm(s) = &self.classifier {
            if !(s.c > 0.0 && s.tol > 0.0) {
                return bad("svm_c and svm_tol must be > 0".into());
            }
            if let KernelWidth::Fixed(w) = s.width {
                if !(w > 0.0 && w.is_finite()) {
                    return bad(format!("svm_sigma = {w} must be > 0"));
                }
            }
        }
        if self.sweep_lambda.iter().any(|&l| !(l > 0.0))
            || self.sweep_gamma.iter().any(|&g| !(g >= 0.0))
        {
            return bad("sweep grid needs lambda > 0 and gamma >= 0".into());
        }
        Ok(())
    }

    /// `r` must be below the class count, which is only known once the
    /// ground truth is loaded for file datasets.
    pub fn check_false_labels(&self, classes: usize) -> Result<()> {
        if self.false_labels >= classes {
            return Err(Error::Config(format!(
                "false_labels = {} must be below the class count {classes}",
                self.false_labels
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig> {
        PipelineConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn synthetic_defaults() {
        let cfg = parse("dataset=synthetic\n").unwrap();
        assert_eq!(cfg.solver.lambda, 1.0);
        assert_eq!(cfg.solver.gamma, 20.0);
        assert_eq!(cfg.propagation.alpha, 0.96);
        assert_eq!(cfg.out, PathBuf::from("/base/slap-out"));
    }

    #[test]
    fn file_paths_resolve_against_base() {
        let cfg = parse("cube=data/x.hdr\nground_truth=/abs/gt.txt\n").unwrap();
        assert_eq!(
            cfg.dataset,
            Dataset::Files {
                cube: "/base/data/x.hdr".into(),
                ground_truth: "/abs/gt.txt".into()
            }
        );
        assert!(parse("cube=x.hdr\n").is_err());
    }

    #[test]
    fn range_checks() {
        for bad in [
            "lambda=0",
            "gamma=-1",
            "alpha=1",
            "alpha=0",
            "train_percent=1",
            "trials=0",
            "false_labels=4",
            "svm_c=0",
            "svm_sigma=-2",
        ] {
            let err = parse(&format!("dataset=synthetic\n{bad}\n")).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn unknown_and_malformed_keys() {
        assert!(parse("dataset=synthetic\nlamda=1\n").is_err());
        assert!(parse("dataset=synthetic\nlambda=abc\n").is_err());
        assert!(parse("dataset=synthetic\njust text\n").is_err());
        assert!(parse("dataset=elsewhere\n").is_err());
    }

    #[test]
    fn lists_and_enums() {
        let cfg = parse(
            "dataset=synthetic\nsweep_gamma=0, 20\nclassifier=nearest\ntraining_labels=random_candidate\nj_update=pseudoinverse\nsvt_rank=8\n",
        )
        .unwrap();
        assert_eq!(cfg.sweep_gamma, vec![0.0, 20.0]);
        assert_eq!(cfg.classifier, ClassifierKind::NearestNeighbor);
        assert_eq!(cfg.training_labels, TrainingLabels::RandomCandidate);
        assert_eq!(cfg.solver.j_update, JUpdate::Pseudoinverse);
        assert_eq!(cfg.solver.svt_rank, 8);
    }
}
