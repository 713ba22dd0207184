//! Per-superpixel Laplacian prior.
//!
//! Inside each superpixel, pixels are linked to their `k` nearest spectral
//! neighbours with Gaussian weights, the weight matrix is symmetrised by
//! elementwise max, and `G = D - W`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::superpixel::SuperpixelBlock;

/// Relative cutoff below which eigenvalues count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Mean distance from each pixel to its nearest neighbour.
    MeanNearestNeighbor,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPrior {
    pub laplacian: DMatrix<f64>,
    pub pseudoinverse: DMatrix<f64>,
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

/// Moore-Penrose pseudoinverse of a symmetric matrix via its eigendecomposition.
/// Eigenvalues with `|lambda| <= rel_tol * max|lambda|` are treated as zero.
pub fn pseudoinverse(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    if !is_symmetric(m, 1e-10) {
        return Err(Error::InvalidArgument(
            "pseudoinverse requires a symmetric matrix".into(),
        ));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let cutoff = rel_tol * eig.eigenvalues.amax();
    let inv_vals = eig.eigenvalues.map(|l| {
        if l.abs() > cutoff && l != 0.0 {
            1.0 / l
        } else {
            0.0
        }
    });
    let u = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(n, n, |i, j| u[(i, j)] * inv_vals[j]);
    let p = scaled * u.transpose();
    Ok((&p + p.transpose()) * 0.5)
}

fn squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let norms: Vec<f64> = (0..n).map(|j| x.column(j).norm_squared()).collect();
    let gram = x.transpose() * x;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (norms[i] + norms[j] - 2.0 * gram[(i, j)]).max(0.0)
        }
    })
}

/// kNN Gaussian weight matrix on the block's columns, symmetrised by max.
pub fn knn_weights(x: &DMatrix<f64>, k_neighbors: usize, bandwidth: Bandwidth) -> DMatrix<f64> {
    let n = x.ncols();
    let k = k_neighbors.min(n.saturating_sub(1));
    let mut w = DMatrix::zeros(n, n);
    if k == 0 {
        return w;
    }
    let dist2 = squared_distances(x);
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let mut others: Vec<usize> = (0..n).filter(|&v| v != u).collect();
            others.sort_by(|&a, &b| dist2[(u, a)].total_cmp(&dist2[(u, b)]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect();
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::MeanNearestNeighbor => {
            neighbours
                .iter()
                .enumerate()
                .map(|(u, nb)| dist2[(u, nb[0])].sqrt())
                .sum::<f64>()
                / n as f64
        }
    };
    for (u, nb) in neighbours.iter().enumerate() {
        for &v in nb {
            let d2 = dist2[(u, v)];
            // sigma -> 0 limit: coincident pixels weigh 1, distinct ones 0.
            let weight = if sigma > 0.0 {
                (-d2 / (2.0 * sigma * sigma)).exp()
            } else if d2 == 0.0 {
                1.0
            } else {
                0.0
            };
            if weight > w[(u, v)] {
                w[(u, v)] = weight;
                w[(v, u)] = weight;
            }
        }
    }
    w
}

pub fn laplacian_from_weights(w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = -w.clone();
    for i in 0..w.nrows() {
        g[(i, i)] = w.row(i).sum() - w[(i, i)];
    }
    g
}

pub fn build_laplacian(
    block: &SuperpixelBlock,
    k_neighbors: usize,
    bandwidth: Bandwidth,
) -> Result<LaplacianPrior> {
    let w = knn_weights(&block.matrix, k_neighbors, bandwidth);
    let laplacian = laplacian_from_weights(&w);
    let pseudoinverse = pseudoinverse(&laplacian, RANK_TOLERANCE)?;
    Ok(LaplacianPrior {
        laplacian,
        pseudoinverse,
    })
}
