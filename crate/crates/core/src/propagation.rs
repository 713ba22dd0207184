//! Training-pixel affinity graph and candidate-restricted label propagation.
//!
//! The affinity between two training pixels is the coefficient linking them in
//! their shared superpixel's `Z`, and zero across superpixels. Columns are
//! scaled to unit norm and the result symmetrised. Confidences then follow
//! `Q~(t) = (1 - alpha) Q(0) + alpha G Q(t-1)`, renormalised over each pixel's
//! candidate set after every round.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hsi::{Label, PartialLabeledSet};
use crate::lra::LraSolution;

/// Where one training pixel lives: superpixel index and its column in that
/// superpixel's coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingIndex {
    pub superpixel: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingAffinity {
    /// Column-normalised `p x p` coefficients.
    pub coefficients: DMatrix<f64>,
    /// `(coefficients + coefficients^T) / 2`.
    pub graph: DMatrix<f64>,
}

pub fn assemble_affinity(
    solutions: &[LraSolution],
    index: &[TrainingIndex],
) -> Result<TrainingAffinity> {
    for (i, t) in index.iter().enumerate() {
        let z = solutions.get(t.superpixel).map(|s| &s.z).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "training pixel {i}: superpixel {} missing",
                t.superpixel
            ))
        })?;
        if t.column >= z.ncols() {
            return Err(Error::InvalidArgument(format!(
                "training pixel {i}: column {} outside superpixel {} ({} pixels)",
                t.column,
                t.superpixel,
                z.ncols()
            )));
        }
    }
    let p = index.len();
    let mut coefficients = DMatrix::from_fn(p, p, |i, j| {
        let (a, b) = (index[i], index[j]);
        if a.superpixel == b.superpixel {
            solutions[a.superpixel].z[(a.column, b.column)]
        } else {
            0.0
        }
    });
    for mut col in coefficients.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let graph = (&coefficients + coefficients.transpose()) * 0.5;
    Ok(TrainingAffinity {
        coefficients,
        graph,
    })
}

/// `p x c` labeling confidences; column `b` holds label `b + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMatrix {
    pub q: DMatrix<f64>,
}

pub fn init_confidence(set: &PartialLabeledSet) -> Result<ConfidenceMatrix> {
    let mut q = DMatrix::zeros(set.len(), set.classes);
    for (i, e) in set.entries.iter().enumerate() {
        if e.candidates.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "training pixel {} has no candidates",
                e.pixel
            )));
        }
        let share = 1.0 / e.candidates.len() as f64;
        for &l in &e.candidates {
            if l == 0 || l as usize > set.classes {
                return Err(Error::InvalidArgument(format!(
                    "candidate label {l} outside 1..={}",
                    set.classes
                )));
            }
            q[(i, l as usize - 1)] = share;
        }
    }
    Ok(ConfidenceMatrix { q })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    pub alpha: f64,
    pub max_rounds: usize,
    pub tol: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            alpha: 0.96,
            max_rounds: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagated {
    pub confidence: ConfidenceMatrix,
    pub rounds: usize,
}

/// Iterates the propagation recurrence. Rows whose candidate mass vanishes are
/// reset to their initial row.
pub fn propagate(
    initial: &ConfidenceMatrix,
    graph: &DMatrix<f64>,
    candidates: &[Vec<Label>],
    params: &PropagationParams,
) -> Result<Propagated> {
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {} outside (0, 1)",
            params.alpha
        )));
    }
    let (p, c) = initial.q.shape();
    if graph.shape() != (p, p) || candidates.len() != p {
        return Err(Error::DimensionMismatch {
            expected: (p, p),
            found: graph.shape(),
        });
    }
    let q0 = &initial.q;
    let mut q = q0.clone();
    let mut rounds = 0;
    while rounds < params.max_rounds {
        rounds += 1;
        let raw = q0 * (1.0 - params.alpha) + (graph * &q) * params.alpha;
        let mut next = DMatrix::zeros(p, c);
        for (i, cands) in candidates.iter().enumerate() {
            let mass: f64 = cands.iter().map(|&l| raw[(i, l as usize - 1)]).sum();
            if mass > 0.0 && mass.is_finite() {
                for &l in cands {
                    let b = l as usize - 1;
                    next[(i, b)] = raw[(i, b)] / mass;
                }
            } else {
                next.row_mut(i).copy_from(&q0.row(i));
            }
        }
        let change = (&next - &q).amax();
        q = next;
        if change < params.tol {
            break;
        }
    }
    Ok(Propagated {
        confidence: ConfidenceMatrix { q },
        rounds,
    })
}

/// Highest-confidence candidate per row; ties go to the smallest label.
pub fn disambiguate(conf: &ConfidenceMatrix, candidates: &[Vec<Label>]) -> Vec<Label> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, cands)| {
            let mut sorted = cands.clone();
            sorted.sort_unstable();
            let mut best = sorted[0];
            for &l in &sorted[1..] {
                if conf.q[(i, l as usize - 1)] > conf.q[(i, best as usize - 1)] {
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// Fraction of entries whose resolved label equals the hidden true label.
pub fn disambiguation_accuracy(set: &PartialLabeledSet, resolved: &[Label]) -> f64 {
    if set.is_empty() {
        return 1.0;
    }
    let hits = set
        .entries
        .iter()
        .zip(resolved)
        .filter(|(e, &r)| e.true_label == r)
        .count();
    hits as f64 / set.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsi::PartialEntry;

    fn set(cands: &[&[Label]], truth: &[Label], classes: usize) -> PartialLabeledSet {
        PartialLabeledSet {
            entries: cands
                .iter()
                .zip(truth)
                .enumerate()
                .map(|(i, (c, &t))| PartialEntry {
                    pixel: i,
                    true_label: t,
                    candidates: c.to_vec(),
                })
                .collect(),
            classes,
            false_labels: cands[0].len() - 1,
        }
    }

    fn solution(z: DMatrix<f64>) -> LraSolution {
        let n = z.ncols();
        LraSolution {
            z,
            e: DMatrix::zeros(1, n),
            denoised: DMatrix::zeros(1, n),
            converged: true,
            trace: vec![],
        }
    }

    #[test]
    fn cross_superpixel_entries_are_zero() {
        let sols = vec![
            solution(DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.7])),
            solution(DMatrix::from_row_slice(1, 1, &[0.9])),
        ];
        let idx = [
            TrainingIndex {
                superpixel: 0,
                column: 0,
            },
            TrainingIndex {
                superpixel: 1,
                column: 0,
            },
            TrainingIndex {
                superpixel: 0,
                column: 1,
            },
        ];
        let a = assemble_affinity(&sols, &idx).unwrap();
        assert_eq!(a.coefficients[(0, 1)], 0.0);
        assert_eq!(a.coefficients[(1, 2)], 0.0);
        // Lone pixel of superpixel 1: its self-coefficient normalised to 1.
        assert_eq!(a.coefficients[(1, 1)], 1.0);
        for j in 0..3 {
            assert!((a.coefficients.column(j).norm() - 1.0).abs() < 1e-15);
        }
        assert_eq!(a.graph, a.graph.transpose());
    }

    #[test]
    fn affinity_index_out_of_range() {
        let sols = vec![solution(DMatrix::zeros(2, 2))];
        assert!(assemble_affinity(
            &sols,
            &[TrainingIndex {
                superpixel: 1,
                column: 0
            }]
        )
        .is_err());
        assert!(assemble_affinity(
            &sols,
            &[TrainingIndex {
                superpixel: 0,
                column: 2
            }]
        )
        .is_err());
    }

    #[test]
    fn zero_column_left_unnormalised() {
        let sols = vec![solution(DMatrix::zeros(2, 2))];
        let idx = [TrainingIndex {
            superpixel: 0,
            column: 0,
        }];
        let a = assemble_affinity(&sols, &idx).unwrap();
        assert_eq!(a.coefficients[(0, 0)], 0.0);
    }

    #[test]
    fn init_is_uniform_over_candidates() {
        let s = set(&[&[1, 3], &[2]], &[1, 2], 3);
        let q = init_confidence(&s).unwrap().q;
        assert_eq!(
            q.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.5, 0.0, 0.5]
        );
        assert_eq!(
            q.row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn empty_candidate_set_rejected() {
        let mut s = set(&[&[1]], &[1], 2);
        s.entries[0].candidates.clear();
        assert!(init_confidence(&s).is_err());
    }

    #[test]
    fn tiny_alpha_keeps_initial() {
        let s = set(&[&[1, 2], &[2, 3]], &[1, 2], 3);
        let q0 = init_confidence(&s).unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let params = PropagationParams {
            alpha: 1e-12,
            max_rounds: 1,
            tol: 0.0,
        };
        let out = propagate(&q0, &g, &s.candidate_sets(), &params).unwrap();
        assert!((&out.confidence.q - &q0.q).amax() < 1e-9);
    }

    #[test]
    fn isolated_pixels_keep_initial() {
        let s = set(&[&[1, 2], &[2, 3], &[1, 3]], &[1, 2, 3], 3);
        let q0 = init_confidence(&s).unwrap();
        let out = propagate(
            &q0,
            &DMatrix::zeros(3, 3),
            &s.candidate_sets(),
            &PropagationParams::default(),
        )
        .unwrap();
        assert!((&out.confidence.q - &q0.q).amax() < 1e-15);
    }

    #[test]
    fn confident_neighbour_wins() {
        // Pixel 0 is sure of label 2; pixel 1 is undecided between 1 and 2.
        let s = set(&[&[2], &[1, 2]], &[2, 2], 2);
        let q0 = init_confidence(&s).unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let out = propagate(&q0, &g, &s.candidate_sets(), &PropagationParams::default()).unwrap();
        assert_eq!(
            disambiguate(&out.confidence, &s.candidate_sets()),
            vec![2, 2]
        );
        // Fixed point of q = 0.02 * 0.5 + 0.96 * 1 over mass 1 + ... for label 2.
        let q = &out.confidence.q;
        assert!(q[(1, 1)] > 0.9);
        assert!((q.row(1).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_and_tie_rules() {
        let conf = ConfidenceMatrix {
            q: DMatrix::from_row_slice(
                3,
                5,
                &[
                    0.7, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.9, 0.4, 0.0, 0.6,
                ],
            ),
        };
        let cands = vec![vec![1, 2], vec![3, 5], vec![3, 5]];
        assert_eq!(disambiguate(&conf, &cands), vec![1, 3, 5]);
    }

    #[test]
    fn alpha_out_of_range() {
        let s = set(&[&[1]], &[1], 1);
        let q0 = init_confidence(&s).unwrap();
        let g = DMatrix::zeros(1, 1);
        for alpha in [0.0, 1.0, -0.5] {
            let params = PropagationParams {
                alpha,
                ..Default::default()
            };
            assert!(propagate(&q0, &g, &s.candidate_sets(), &params).is_err());
        }
    }
}
