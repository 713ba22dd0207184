//! SLIC-style superpixel segmentation and per-superpixel pixel grouping.
//!
//! The segmenter clusters on `(feature, row, col)` from a regular seed grid,
//! runs a fixed number of local k-means passes, then enforces 4-connectivity by
//! merging orphan fragments into their largest neighbour.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hsi::HsiCube;
use crate::raster;

/// Per-pixel feature vectors on the image grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRaster {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    /// `values[p * dim + j]`.
    pub values: Vec<f64>,
}

impl FeatureRaster {
    pub fn intensity(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::SizeMismatch {
                expected: height * width,
                found: values.len(),
            });
        }
        Ok(Self {
            height,
            width,
            dim: 1,
            values,
        })
    }

    /// Full spectra scaled by the cube's global value range.
    pub fn spectral(cube: &HsiCube) -> Self {
        let (lo, hi) = cube
            .data()
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = f64::from(hi - lo);
        let scale = if range > 0.0 { 1.0 / range } else { 0.0 };
        let (n, d) = (cube.pixels(), cube.bands());
        let mut values = vec![0.0; n * d];
        for p in 0..n {
            for b in 0..d {
                values[p * d + b] = (f64::from(cube.value(p, b)) - f64::from(lo)) * scale;
            }
        }
        Self {
            height: cube.height(),
            width: cube.width(),
            dim: d,
            values,
        }
    }

    #[inline]
    fn pixel(&self, p: usize) -> &[f64] {
        &self.values[p * self.dim..(p + 1) * self.dim]
    }
}

/// Scores of every pixel on the first principal component of the
/// pixel-by-band matrix. Sign is fixed so the loading with the largest
/// magnitude is positive.
pub fn first_principal_component(cube: &HsiCube) -> Vec<f64> {
    let (n, d) = (cube.pixels(), cube.bands());
    let means: Vec<f64> = (0..d)
        .map(|b| (0..n).map(|p| f64::from(cube.value(p, b))).sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for p in 0..n {
        for b in 0..d {
            centered[b] = f64::from(cube.value(p, b)) - means[b];
        }
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let mut axis: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let pivot = axis
        .iter()
        .copied()
        .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if pivot < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
    (0..n)
        .map(|p| {
            (0..d)
                .map(|b| (f64::from(cube.value(p, b)) - means[b]) * axis[b])
                .sum()
        })
        .collect()
}

/// First principal component, min-max normalised to `[0, 1]`. A cube with no
/// spread along the component maps to a uniform 0.5 raster.
pub fn compute_base_image(cube: &HsiCube) -> FeatureRaster {
    let scores = first_principal_component(cube);
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = hi - lo;
    let values = if scale > 1e-12 * hi.abs().max(lo.abs()).max(1e-300) {
        scores.iter().map(|v| (v - lo) / scale).collect()
    } else {
        vec![0.5; scores.len()]
    };
    FeatureRaster {
        height: cube.height(),
        width: cube.width(),
        dim: 1,
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    height: usize,
    width: usize,
    labels: Vec<usize>,
    count: usize,
}

impl Segmentation {
    /// Validates that labels are exactly `0..K` with every value present.
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::SizeMismatch {
                expected: height * width,
                found: labels.len(),
            });
        }
        let count = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("superpixel {missing} is empty")));
        }
        Ok(Self {
            height,
            width,
            labels,
            count,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of superpixels `K`.
    pub fn count(&self) -> usize {
        self.count
    }

    /// True when every superpixel is a single 4-connected region.
    pub fn is_connected(&self) -> bool {
        let (_, n_components) = connected_components(self.height, self.width, &self.labels);
        n_components == self.count
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        raster::write_int_raster(path, self.width, &self.labels)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let r = raster::read_int_raster(path)?;
        let labels = r
            .values
            .iter()
            .map(|&v| usize::try_from(v).map_err(|_| Error::Data(format!("negative label {v}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(r.height, r.width, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub target: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl SlicParams {
    pub fn new(target: usize) -> Self {
        Self {
            target,
            compactness: 0.1,
            iterations: 10,
        }
    }
}

fn seed_grid(height: usize, width: usize, target: usize) -> (usize, usize) {
    let rows = ((target as f64 * height as f64 / width as f64)
        .sqrt()
        .round() as usize)
        .clamp(1, height);
    let cols = ((target as f64 / rows as f64).round() as usize).clamp(1, width);
    (rows, cols)
}

struct Center {
    feature: Vec<f64>,
    row: f64,
    col: f64,
}

/// SLIC segmentation; the produced `K` may differ slightly from the target.
pub fn segment(base: &FeatureRaster, params: &SlicParams) -> Result<Segmentation> {
    let (h, w, dim) = (base.height, base.width, base.dim);
    let n = h * w;
    if params.target == 0 || params.target > n {
        return Err(Error::InvalidArgument(format!(
            "superpixel target {} outside 1..={n}",
            params.target
        )));
    }
    if !(params.compactness >= 0.0) {
        return Err(Error::InvalidArgument(
            "compactness must be non-negative".into(),
        ));
    }
    let (grid_rows, grid_cols) = seed_grid(h, w, params.target);
    let mut centers = Vec::with_capacity(grid_rows * grid_cols);
    for i in 0..grid_rows {
        for j in 0..grid_cols {
            let r = (2 * i + 1) * h / (2 * grid_rows);
            let c = (2 * j + 1) * w / (2 * grid_cols);
            centers.push(Center {
                feature: base.pixel(r * w + c).to_vec(),
                row: r as f64,
                col: c as f64,
            });
        }
    }
    let k = centers.len();
    let step = (n as f64 / k as f64).sqrt();
    let spatial_weight = (params.compactness / step).powi(2);
    let reach = step.ceil() as isize;

    let distance = |c: &Center, p: usize| -> f64 {
        let f = base.pixel(p);
        let df: f64 = f
            .iter()
            .zip(&c.feature)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let (r, col) = ((p / w) as f64, (p % w) as f64);
        df + spatial_weight * ((r - c.row).powi(2) + (col - c.col).powi(2))
    };

    let mut labels = vec![usize::MAX; n];
    let mut best = vec![f64::INFINITY; n];
    for _ in 0..params.iterations.max(1) {
        labels.fill(usize::MAX);
        best.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let (cr, cc) = (c.row.round() as isize, c.col.round() as isize);
            let r0 = (cr - reach).max(0) as usize;
            let r1 = ((cr + reach) as usize).min(h - 1);
            let c0 = (cc - reach).max(0) as usize;
            let c1 = ((cc + reach) as usize).min(w - 1);
            for r in r0..=r1 {
                for col in c0..=c1 {
                    let p = r * w + col;
                    let d = distance(c, p);
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = ci;
                    }
                }
            }
        }
        for p in 0..n {
            if labels[p] == usize::MAX {
                let (ci, _) = centers
                    .iter()
                    .enumerate()
                    .map(|(ci, c)| (ci, distance(c, p)))
                    .fold(
                        (0, f64::INFINITY),
                        |acc, x| if x.1 < acc.1 { x } else { acc },
                    );
                labels[p] = ci;
            }
        }
        let mut sums = vec![(vec![0.0; dim], 0.0, 0.0, 0usize); k];
        for p in 0..n {
            let s = &mut sums[labels[p]];
            for (acc, v) in s.0.iter_mut().zip(base.pixel(p)) {
                *acc += v;
            }
            s.1 += (p / w) as f64;
            s.2 += (p % w) as f64;
            s.3 += 1;
        }
        for (c, (f, r, col, cnt)) in centers.iter_mut().zip(sums) {
            if cnt > 0 {
                let inv = 1.0 / cnt as f64;
                c.feature = f.iter().map(|v| v * inv).collect();
                c.row = r * inv;
                c.col = col * inv;
            }
        }
    }
    let labels = enforce_connectivity(h, w, &labels);
    Segmentation::new(h, w, labels)
}

/// 4-connected components of equal-label regions. Component ids are assigned
/// in row-major order of first occurrence.
fn connected_components(h: usize, w: usize, labels: &[usize]) -> (Vec<usize>, usize) {
    let mut comp = vec![usize::MAX; h * w];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = count;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbours(p, h, w) {
                if comp[q] == usize::MAX && labels[q] == labels[start] {
                    comp[q] = count;
                    queue.push_back(q);
                }
            }
        }
        count += 1;
    }
    (comp, count)
}

fn neighbours(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (p / w, p % w);
    [
        (r > 0).then(|| p - w),
        (r + 1 < h).then(|| p + w),
        (c > 0).then(|| p - 1),
        (c + 1 < w).then(|| p + 1),
    ]
    .into_iter()
    .flatten()
}

/// Each label keeps its largest component; every other fragment is merged into
/// the largest adjacent region. Output labels are compacted to `0..K` in
/// row-major order of first occurrence.
fn enforce_connectivity(h: usize, w: usize, labels: &[usize]) -> Vec<usize> {
    let (comp, n_comp) = connected_components(h, w, labels);
    let mut size = vec![0usize; n_comp];
    let mut comp_label = vec![0usize; n_comp];
    for p in 0..h * w {
        size[comp[p]] += 1;
        comp_label[comp[p]] = labels[p];
    }
    let max_label = labels.iter().max().map_or(0, |m| m + 1);
    let mut main = vec![usize::MAX; max_label];
    for c in 0..n_comp {
        let l = comp_label[c];
        if main[l] == usize::MAX || size[c] > size[main[l]] {
            main[l] = c;
        }
    }
    let mut adjacency = vec![Vec::<usize>::new(); n_comp];
    for p in 0..h * w {
        for q in neighbours(p, h, w) {
            if comp[p] != comp[q] {
                adjacency[comp[p]].push(comp[q]);
            }
        }
    }
    for a in &mut adjacency {
        a.sort_unstable();
        a.dedup();
    }

    // Union-find over components; merged sizes steer later merges.
    let mut parent: Vec<usize> = (0..n_comp).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut orphans: Vec<usize> = (0..n_comp).filter(|&c| main[comp_label[c]] != c).collect();
    orphans.sort_by_key(|&c| (size[c], c));
    let mut merged_size = size.clone();
    for o in orphans {
        let ro = root(&mut parent, o);
        let mut target: Option<usize> = None;
        for &nb in &adjacency[o] {
            let rn = root(&mut parent, nb);
            if rn == ro {
                continue;
            }
            if target.is_none_or(|t| merged_size[rn] > merged_size[t]) {
                target = Some(rn);
            }
        }
        if let Some(t) = target {
            parent[ro] = t;
            merged_size[t] += merged_size[ro];
        }
    }

    let mut relabel = vec![usize::MAX; n_comp];
    let mut next = 0;
    let mut out = vec![0; h * w];
    for p in 0..h * w {
        let r = root(&mut parent, comp[p]);
        if relabel[r] == usize::MAX {
            relabel[r] = next;
            next += 1;
        }
        out[p] = relabel[r];
    }
    out
}

/// Pixels of one superpixel, columns in row-major scan order.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelBlock {
    pub index: usize,
    /// `d x n_i`, one column per pixel.
    pub matrix: DMatrix<f64>,
    pub coords: Vec<(usize, usize)>,
}

impl SuperpixelBlock {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Grouping {
    pub blocks: Vec<SuperpixelBlock>,
    /// Pixel -> (superpixel index, column within that block).
    pub owner: Vec<(usize, usize)>,
}

pub fn group_pixels(cube: &HsiCube, seg: &Segmentation) -> Result<Grouping> {
    if (seg.height, seg.width) != (cube.height(), cube.width()) {
        return Err(Error::DimensionMismatch {
            expected: (cube.height(), cube.width()),
            found: (seg.height, seg.width),
        });
    }
    let w = cube.width();
    let mut members = vec![Vec::new(); seg.count];
    let mut owner = Vec::with_capacity(cube.pixels());
    for (p, &l) in seg.labels.iter().enumerate() {
        owner.push((l, members[l].len()));
        members[l].push(p);
    }
    let d = cube.bands();
    let blocks = members
        .into_iter()
        .enumerate()
        .map(|(index, pixels)| SuperpixelBlock {
            index,
            matrix: DMatrix::from_fn(d, pixels.len(), |b, j| f64::from(cube.value(pixels[j], b))),
            coords: pixels.iter().map(|&p| (p / w, p % w)).collect(),
        })
        .collect();
    Ok(Grouping { blocks, owner })
}
