//! Denoised feature tables and the kernel classifier trained on them.
//!
//! The SVM is a one-vs-one ensemble of binary C-SVMs with a Gaussian kernel,
//! each solved by SMO with second-order working-set selection. Features are
//! min-max scaled per band using the training rows before anything else.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::binio::{put_f64, put_f64s, put_u64, ByteReader};
use crate::error::{Error, Result};
use crate::hsi::Label;
use crate::lra::LraSolution;
use crate::superpixel::Grouping;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    /// Row-major, `rows * dim`.
    pub values: Vec<f64>,
    /// Row -> linear pixel index.
    pub pixel_map: Vec<usize>,
}

impl FeatureTable {
    pub fn new(dim: usize, values: Vec<f64>, pixel_map: Vec<usize>) -> Result<Self> {
        if values.len() != dim * pixel_map.len() {
            return Err(Error::SizeMismatch {
                expected: dim * pixel_map.len(),
                found: values.len(),
            });
        }
        if let Some(offset) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { offset });
        }
        let mut seen = pixel_map.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("pixel map is not injective".into()));
        }
        Ok(Self {
            dim,
            values,
            pixel_map,
        })
    }

    pub fn rows(&self) -> usize {
        self.pixel_map.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows for the given pixels, in the given order.
    pub fn select_pixels(&self, pixels: &[usize]) -> Result<FeatureTable> {
        let mut lookup = vec![usize::MAX; self.pixel_map.iter().max().map_or(0, |m| m + 1)];
        for (row, &p) in self.pixel_map.iter().enumerate() {
            lookup[p] = row;
        }
        let mut values = Vec::with_capacity(pixels.len() * self.dim);
        for &p in pixels {
            let row = lookup
                .get(p)
                .copied()
                .filter(|&r| r != usize::MAX)
                .ok_or_else(|| Error::InvalidArgument(format!("pixel {p} not in feature table")))?;
            values.extend_from_slice(self.row(row));
        }
        Ok(FeatureTable {
            dim: self.dim,
            values,
            pixel_map: pixels.to_vec(),
        })
    }
}

/// Stacks each superpixel's `X_i Z_i` columns back onto the pixel grid, one
/// row per pixel in row-major order.
pub fn reassemble_denoised(solutions: &[LraSolution], grouping: &Grouping) -> Result<FeatureTable> {
    if solutions.len() != grouping.blocks.len() {
        return Err(Error::InvalidArgument(format!(
            "{} solutions for {} superpixels",
            solutions.len(),
            grouping.blocks.len()
        )));
    }
    let dim = grouping.blocks.first().map_or(0, |b| b.matrix.nrows());
    let n = grouping.owner.len();
    let mut values = vec![0.0; n * dim];
    for (p, &(sp, col)) in grouping.owner.iter().enumerate() {
        let denoised = &solutions[sp].denoised;
        if denoised.shape() != (dim, grouping.blocks[sp].len()) {
            return Err(Error::DimensionMismatch {
                expected: (dim, grouping.blocks[sp].len()),
                found: denoised.shape(),
            });
        }
        for b in 0..dim {
            values[p * dim + b] = denoised[(b, col)];
        }
    }
    FeatureTable::new(dim, values, (0..n).collect())
}

/// Gaussian kernel `exp(-||x - y||^2 / (2 sigma^2))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

pub trait Classifier: Send + Sync {
    /// One label per feature row.
    fn predict(&self, features: &FeatureTable) -> Result<Vec<Label>>;
}

/// Per-band affine scaling to `[0, 1]` over the fitted rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub scale: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(features: &FeatureTable) -> Self {
        let dim = features.dim;
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for i in 0..features.rows() {
            for (b, &v) in features.row(i).iter().enumerate() {
                min[b] = min[b].min(v);
                max[b] = max[b].max(v);
            }
        }
        let scale = min
            .iter()
            .zip(&max)
            .map(|(lo, hi)| if hi > lo { 1.0 / (hi - lo) } else { 0.0 })
            .collect();
        Self { min, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.scale))
            .map(|(v, (lo, s))| (v - lo) * s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelWidth {
    /// Median pairwise distance between scaled training rows.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub width: KernelWidth,
    /// KKT violation tolerance for SMO.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 100.0,
            width: KernelWidth::Median,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// One binary machine: `f(x) = sum coef_k K(sv_k, x) - rho`; positive votes
/// for `positive`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub positive: Label,
    pub negative: Label,
    /// Indices into [`SvmModel::support_vectors`].
    pub support: Vec<usize>,
    /// `alpha_k * y_k`.
    pub coef: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub classes: Vec<Label>,
    pub scaler: MinMaxScaler,
    pub sigma: f64,
    pub c: f64,
    /// Scaled support vectors shared by all pairs, row-major.
    pub support_vectors: Vec<f64>,
    pub pairs: Vec<PairModel>,
}

struct BinaryDual {
    alpha: Vec<f64>,
    rho: f64,
}

/// SMO for `min 1/2 a^T Q a - e^T a`, `0 <= a <= C`, `y^T a = 0`, with
/// `Q_ij = y_i y_j K_ij`. Working-set selection uses second-order information.
fn smo(kernel: &DMatrix<f64>, y: &[f64], c: f64, tol: f64, max_iter: usize) -> BinaryDual {
    const TAU: f64 = 1e-12;
    let l = y.len();
    let mut alpha = vec![0.0; l];
    let mut grad = vec![-1.0; l];
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[(i, j)];
    let is_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let is_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    for _ in 0..max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            if is_up(alpha[t], y[t]) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..l {
            if !is_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i_sel != usize::MAX {
                let b = gmax - v;
                if b > 0.0 {
                    let a = kernel[(i_sel, i_sel)] + kernel[(t, t)] - 2.0 * kernel[(i_sel, t)];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj <= best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if gmax - gmin < tol || i_sel == usize::MAX || j_sel == usize::MAX {
            break;
        }
        let (i, j) = (i_sel, j_sel);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = kernel[(i, i)] + kernel[(j, j)] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kernel[(i, i)] + kernel[(j, j)] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..l {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Bias: mean over free variables, else midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..l {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    BinaryDual { alpha, rho }
}

fn median_pairwise_distance(rows: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let s: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len().is_multiple_of(2) {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if median > 0.0 {
        median
    } else {
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        if mean > 0.0 {
            mean
        } else {
            1.0
        }
    }
}

impl SvmModel {
    pub fn train(features: &FeatureTable, labels: &[Label], params: &SvmParams) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::SizeMismatch {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if !(params.c > 0.0) {
            return Err(Error::InvalidArgument(format!("C = {}", params.c)));
        }
        let mut classes: Vec<Label> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::InvalidArgument(
                "training needs at least two classes".into(),
            ));
        }
        let scaler = MinMaxScaler::fit(features);
        let rows: Vec<Vec<f64>> = (0..features.rows())
            .map(|i| scaler.apply(features.row(i)))
            .collect();
        let sigma = match params.width {
            KernelWidth::Median => median_pairwise_distance(&rows),
            KernelWidth::Fixed(s) if s > 0.0 => s,
            KernelWidth::Fixed(s) => {
                return Err(Error::InvalidArgument(format!("kernel width {s}")))
            }
        };
        let l = rows.len();
        let kernel = DMatrix::from_fn(l, l, |i, j| rbf_kernel(&rows[i], &rows[j], sigma));

        let pair_ids: Vec<(Label, Label)> = classes
            .iter()
            .enumerate()
            .flat_map(|(a, &ca)| classes[a + 1..].iter().map(move |&cb| (ca, cb)))
            .collect();
        let duals: Vec<(Vec<usize>, Vec<f64>, f64)> = pair_ids
            .par_iter()
            .map(|&(pos, neg)| {
                let members: Vec<usize> = (0..l)
                    .filter(|&i| labels[i] == pos || labels[i] == neg)
                    .collect();
                let y: Vec<f64> = members
                    .iter()
                    .map(|&i| if labels[i] == pos { 1.0 } else { -1.0 })
                    .collect();
                let sub = DMatrix::from_fn(members.len(), members.len(), |a, b| {
                    kernel[(members[a], members[b])]
                });
                let dual = smo(&sub, &y, params.c, params.tol, params.max_iter);
                let (sv, coef): (Vec<usize>, Vec<f64>) = dual
                    .alpha
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| a > 0.0)
                    .map(|(k, &a)| (members[k], a * y[k]))
                    .unzip();
                (sv, coef, dual.rho)
            })
            .collect();

        let mut pool_index = vec![usize::MAX; l];
        let mut support_vectors = Vec::new();
        let mut n_pool = 0;
        let mut pairs = Vec::with_capacity(duals.len());
        for ((pos, neg), (sv, coef, rho)) in pair_ids.into_iter().zip(duals) {
            let support = sv
                .iter()
                .map(|&i| {
                    if pool_index[i] == usize::MAX {
                        pool_index[i] = n_pool;
                        n_pool += 1;
                        support_vectors.extend_from_slice(&rows[i]);
                    }
                    pool_index[i]
                })
                .collect();
            pairs.push(PairModel {
                positive: pos,
                negative: neg,
                support,
                coef,
                rho,
            });
        }
        Ok(Self {
            classes,
            scaler,
            sigma,
            c: params.c,
            support_vectors,
            pairs,
        })
    }

    pub fn dim(&self) -> usize {
        self.scaler.min.len()
    }

    fn support_vector(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.support_vectors[k * d..(k + 1) * d]
    }

    /// Decision value of every pair for one raw (unscaled) feature row.
    pub fn decision_values(&self, row: &[f64]) -> Vec<f64> {
        let x = self.scaler.apply(row);
        let n_sv = self.support_vectors.len() / self.dim().max(1);
        let k: Vec<f64> = (0..n_sv)
            .map(|s| rbf_kernel(self.support_vector(s), &x, self.sigma))
            .collect();
        self.pairs
            .iter()
            .map(|p| {
                p.support
                    .iter()
                    .zip(&p.coef)
                    .map(|(&s, c)| c * k[s])
                    .sum::<f64>()
                    - p.rho
            })
            .collect()
    }

    fn vote(&self, decisions: &[f64]) -> Label {
        let mut votes = vec![0usize; self.classes.len()];
        let pos_of = |l: Label| self.classes.binary_search(&l).expect("pair class in model");
        for (p, &f) in self.pairs.iter().zip(decisions) {
            votes[pos_of(if f > 0.0 { p.positive } else { p.negative })] += 1;
        }
        let mut best = 0;
        for (k, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = k;
            }
        }
        self.classes[best]
    }

    const MAGIC: &'static [u8; 12] = b"SLAP-SVM v1\n";

    /// Layout: magic, then little-endian `u64` counts
    /// `[dim, n_classes, n_pairs, n_sv]`, `f64` `[c, sigma]`, `u64` class
    /// labels, `f64` scaler minima and scales, `f64` support vectors
    /// (row-major), then per pair `u64 [positive, negative, n]`, `f64 rho`,
    /// `u64` support indices and `f64` coefficients.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(Self::MAGIC);
        let d = self.dim();
        put_u64(&mut out, d);
        put_u64(&mut out, self.classes.len());
        put_u64(&mut out, self.pairs.len());
        put_u64(&mut out, self.support_vectors.len() / d.max(1));
        put_f64(&mut out, self.c);
        put_f64(&mut out, self.sigma);
        for &c in &self.classes {
            put_u64(&mut out, c as usize);
        }
        put_f64s(
            &mut out,
            self.scaler
                .min
                .iter()
                .chain(&self.scaler.scale)
                .chain(&self.support_vectors),
        );
        for p in &self.pairs {
            put_u64(&mut out, p.positive as usize);
            put_u64(&mut out, p.negative as usize);
            put_u64(&mut out, p.support.len());
            put_f64(&mut out, p.rho);
            for &s in &p.support {
                put_u64(&mut out, s);
            }
            put_f64s(&mut out, &p.coef);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(Self::MAGIC, "SVM model")?;
        let d = r.count()?;
        let n_classes = r.count()?;
        let n_pairs = r.count()?;
        let n_sv = r.count()?;
        let c = r.f64()?;
        let sigma = r.f64()?;
        let classes = (0..n_classes)
            .map(|_| r.count().map(|v| v as Label))
            .collect::<Result<Vec<_>>>()?;
        let min = r.f64s(d)?;
        let scale = r.f64s(d)?;
        let support_vectors = r.f64s(n_sv * d)?;
        let mut pairs = Vec::with_capacity(n_pairs.min(1 << 16));
        for _ in 0..n_pairs {
            let positive = r.count()? as Label;
            let negative = r.count()? as Label;
            let n = r.count()?;
            let rho = r.f64()?;
            let support = (0..n).map(|_| r.count()).collect::<Result<Vec<_>>>()?;
            if support.iter().any(|&s| s >= n_sv) {
                return Err(Error::Data("support index out of range".into()));
            }
            if classes.binary_search(&positive).is_err()
                || classes.binary_search(&negative).is_err()
            {
                return Err(Error::Data("pair refers to an unknown class".into()));
            }
            let coef = r.f64s(n)?;
            pairs.push(PairModel {
                positive,
                negative,
                support,
                coef,
                rho,
            });
        }
        r.finish()?;
        Ok(Self {
            classes,
            scaler: MinMaxScaler { min, scale },
            sigma,
            c,
            support_vectors,
            pairs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl Classifier for SvmModel {
    fn predict(&self, features: &FeatureTable) -> Result<Vec<Label>> {
        if features.dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: (features.rows(), self.dim()),
                found: (features.rows(), features.dim),
            });
        }
        Ok((0..features.rows())
            .into_par_iter()
            .map(|i| self.vote(&self.decision_values(features.row(i))))
            .collect())
    }
}

/// 1-nearest-neighbour on scaled features; a debugging stand-in for the SVM.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestNeighbor {
    pub scaler: MinMaxScaler,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl NearestNeighbor {
    pub fn train(features: &FeatureTable, labels: &[Label]) -> Result<Self> {
        if labels.len() != features.rows() || labels.is_empty() {
            return Err(Error::SizeMismatch {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        let scaler = MinMaxScaler::fit(features);
        let rows = (0..features.rows())
            .map(|i| scaler.apply(features.row(i)))
            .collect();
        Ok(Self {
            scaler,
            rows,
            labels: labels.to_vec(),
        })
    }
}

impl Classifier for NearestNeighbor {
    fn predict(&self, features: &FeatureTable) -> Result<Vec<Label>> {
        if features.dim != self.scaler.min.len() {
            return Err(Error::DimensionMismatch {
                expected: (features.rows(), self.scaler.min.len()),
                found: (features.rows(), features.dim),
            });
        }
        Ok((0..features.rows())
            .into_par_iter()
            .map(|i| {
                let x = self.scaler.apply(features.row(i));
                let mut best = (f64::INFINITY, 0);
                for (r, &l) in self.rows.iter().zip(&self.labels) {
                    let d: f64 = r.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, l);
                    }
                }
                best.1
            })
            .collect())
    }
}

impl NearestNeighbor {
    const MAGIC: &'static [u8; 12] = b"SLAP-1NN v1\n";

    /// Layout: magic, `u64 [dim, rows]`, `f64` scaler minima and scales,
    /// `f64` scaled rows, `u64` labels.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(Self::MAGIC);
        put_u64(&mut out, self.scaler.min.len());
        put_u64(&mut out, self.rows.len());
        put_f64s(&mut out, self.scaler.min.iter().chain(&self.scaler.scale));
        for r in &self.rows {
            put_f64s(&mut out, r);
        }
        for &l in &self.labels {
            put_u64(&mut out, l as usize);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(Self::MAGIC, "nearest-neighbour model")?;
        let d = r.count()?;
        let n = r.count()?;
        let min = r.f64s(d)?;
        let scale = r.f64s(d)?;
        let rows = (0..n).map(|_| r.f64s(d)).collect::<Result<Vec<_>>>()?;
        let labels = (0..n)
            .map(|_| r.count().map(|v| v as Label))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            scaler: MinMaxScaler { min, scale },
            rows,
            labels,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierKind {
    Svm(SvmParams),
    NearestNeighbor,
}

/// A trained model of either kind, with a self-describing file format.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Svm(SvmModel),
    NearestNeighbor(NearestNeighbor),
}

impl TrainedModel {
    pub fn train(kind: &ClassifierKind, features: &FeatureTable, labels: &[Label]) -> Result<Self> {
        match kind {
            ClassifierKind::Svm(p) => SvmModel::train(features, labels, p).map(Self::Svm),
            ClassifierKind::NearestNeighbor => {
                NearestNeighbor::train(features, labels).map(Self::NearestNeighbor)
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Self::Svm(m) => m.to_bytes(),
            Self::NearestNeighbor(m) => m.to_bytes(),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(NearestNeighbor::MAGIC) {
            NearestNeighbor::from_bytes(bytes).map(Self::NearestNeighbor)
        } else {
            SvmModel::from_bytes(bytes).map(Self::Svm)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl Classifier for TrainedModel {
    fn predict(&self, features: &FeatureTable) -> Result<Vec<Label>> {
        match self {
            Self::Svm(m) => m.predict(features),
            Self::NearestNeighbor(m) => m.predict(features),
        }
    }
}
