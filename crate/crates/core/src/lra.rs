//! Laplacian-regularised low-rank approximation of one superpixel.
//!
//! Solves
//!
//! ```text
//! min ||Z||_* + lambda ||E||_{2,1} + gamma Tr(X Z G (X Z)^T)
//! s.t. X = X Z + E,  Z >= 0
//! ```
//!
//! with an inexact augmented Lagrangian method over the split
//! `W = Z`, `J = Z`. Each iteration updates `W` (singular value thresholding),
//! `Z` (regularised least squares then clipping), `E` (column shrinkage),
//! `J` (a Sylvester-type system), then the multipliers and penalty, in that
//! order.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen, SVD};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::binio::{put_f64s, put_u64, ByteReader};
use crate::error::{Error, Result};
use crate::graph::{self, LaplacianPrior};
use crate::hsi::{seeded_rng, stream};
use crate::superpixel::SuperpixelBlock;

/// How the `J` subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JUpdate {
    /// Exact minimiser: `2 gamma X^T X J G + mu J = mu Z + Gamma2`.
    Stationary,
    /// `2 gamma X^T X J + mu J G^+ = mu (Z + Gamma2 / mu) G^+` with
    /// minimum-norm completion on singular entries.
    Pseudoinverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub mu0: f64,
    pub mu_max: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub j_update: JUpdate,
    /// Singular triplets kept by the `W` update; 0 keeps the exact full SVD.
    pub svt_rank: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 20.0,
            mu0: 1e-4,
            mu_max: 1e12,
            rho: 1.1,
            epsilon: 1e-3,
            max_iters: 200,
            j_update: JUpdate::Stationary,
            svt_rank: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda > 0.0
            && self.gamma >= 0.0
            && self.mu0 > 0.0
            && self.mu_max >= self.mu0
            && self.rho > 1.0
            && self.epsilon > 0.0
            && self.max_iters > 0
            && [
                self.lambda,
                self.gamma,
                self.mu0,
                self.mu_max,
                self.rho,
                self.epsilon,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LraState {
    pub w: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub gamma1: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
    pub gamma3: DMatrix<f64>,
    pub mu: f64,
    pub iter: usize,
}

impl LraState {
    pub fn zeros(d: usize, n: usize, mu: f64) -> Self {
        Self {
            w: DMatrix::zeros(n, n),
            z: DMatrix::zeros(n, n),
            j: DMatrix::zeros(n, n),
            e: DMatrix::zeros(d, n),
            gamma1: DMatrix::zeros(d, n),
            gamma2: DMatrix::zeros(n, n),
            gamma3: DMatrix::zeros(n, n),
            mu,
            iter: 0,
        }
    }
}

/// Infinity-norm (max absolute entry) constraint residuals after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub iter: usize,
    /// `X - XZ - E`
    pub reconstruction: f64,
    /// `Z - J`
    pub z_j: f64,
    /// `Z - W`
    pub z_w: f64,
    /// Penalty used during this iteration.
    pub mu: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.reconstruction.max(self.z_j).max(self.z_w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LraSolution {
    pub z: DMatrix<f64>,
    pub e: DMatrix<f64>,
    /// `X Z`, the denoised representation.
    pub denoised: DMatrix<f64>,
    pub converged: bool,
    pub trace: Vec<Residuals>,
}

impl LraSolution {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// `iter,res1,res2,res3,mu` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,res1,res2,res3,mu\n");
        for r in &self.trace {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e}",
                r.iter, r.reconstruction, r.z_j, r.z_w, r.mu
            );
        }
        out
    }
}

const SOLUTIONS_MAGIC: &[u8; 12] = b"SLAP-LRA v1\n";

/// Layout: magic, `u64` block count, then per block `u64 [d, n, converged,
/// trace_len]`, `f64` `Z` (`n x n`), `E` and `XZ` (`d x n`), all
/// column-major, then per trace row `u64 iter` and `f64 [res1, res2, res3, mu]`.
pub fn encode_solutions(solutions: &[LraSolution]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SOLUTIONS_MAGIC);
    put_u64(&mut out, solutions.len());
    for s in solutions {
        let (d, n) = s.e.shape();
        put_u64(&mut out, d);
        put_u64(&mut out, n);
        put_u64(&mut out, usize::from(s.converged));
        put_u64(&mut out, s.trace.len());
        put_f64s(
            &mut out,
            s.z.iter().chain(s.e.iter()).chain(s.denoised.iter()),
        );
        for r in &s.trace {
            put_u64(&mut out, r.iter);
            put_f64s(&mut out, &[r.reconstruction, r.z_j, r.z_w, r.mu]);
        }
    }
    out
}

pub fn decode_solutions(bytes: &[u8]) -> Result<Vec<LraSolution>> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(SOLUTIONS_MAGIC, "solver output")?;
    let count = r.count()?;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let d = r.count()?;
        let n = r.count()?;
        let converged = r.count()? != 0;
        let len = r.count()?;
        let z = DMatrix::from_vec(n, n, r.f64s(n * n)?);
        let e = DMatrix::from_vec(d, n, r.f64s(d * n)?);
        let denoised = DMatrix::from_vec(d, n, r.f64s(d * n)?);
        let trace = (0..len)
            .map(|_| {
                let iter = r.count()?;
                let v = r.f64s(4)?;
                Ok(Residuals {
                    iter,
                    reconstruction: v[0],
                    z_j: v[1],
                    z_w: v[2],
                    mu: v[3],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(LraSolution {
            z,
            e,
            denoised,
            converged,
            trace,
        });
    }
    r.finish()?;
    Ok(out)
}

/// Singular value thresholding: `U max(S - tau, 0) V^T`.
pub fn svt(p: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let (m, n) = p.shape();
    if m == 0 || n == 0 {
        return p.clone();
    }
    // Largest singular value <= Frobenius norm.
    if p.norm() <= tau {
        return DMatrix::zeros(m, n);
    }
    let svd = SVD::new(p.clone(), true, true);
    let (u, v_t) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tau)
        .collect();
    if kept.is_empty() {
        return DMatrix::zeros(m, n);
    }
    let mut left = u.select_columns(&kept);
    for (c, &i) in kept.iter().enumerate() {
        left.column_mut(c).scale_mut(svd.singular_values[i] - tau);
    }
    left * v_t.select_rows(&kept)
}

/// Singular value thresholding restricted to the `rank` leading triplets.
///
/// The triplets come from a randomized range finder (5 extra columns, two
/// power iterations) drawn from `rng`; when `rank + 5` reaches the smaller
/// dimension the exact SVD is used instead.
pub fn svt_truncated(
    p: &DMatrix<f64>,
    tau: f64,
    rank: usize,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let (m, n) = p.shape();
    let full = m.min(n);
    if rank == 0 || full == 0 || p.norm() <= tau {
        return DMatrix::zeros(m, n);
    }
    let sketch = rank + 5;
    let (u, s, v_t) = if sketch >= full {
        let svd = SVD::new(p.clone(), true, true);
        (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap())
    } else {
        let omega = DMatrix::from_fn(n, sketch, |_, _| StandardNormal.sample(rng));
        let mut q = (p * omega).qr().q();
        for _ in 0..2 {
            let back = p.tr_mul(&q).qr().q();
            q = (p * back).qr().q();
        }
        let svd = SVD::new(q.tr_mul(p), true, true);
        (q * svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap())
    };
    let mut order: Vec<usize> = (0..s.len()).filter(|&i| s[i] > tau).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    order.truncate(rank);
    let mut out = DMatrix::zeros(m, n);
    for &i in &order {
        out += u.column(i) * v_t.row(i) * (s[i] - tau);
    }
    out
}

/// Column-wise shrinkage, the proximal map of `tau ||.||_{2,1}`.
pub fn prox_l21(d: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut e = d.clone();
    for mut col in e.column_iter_mut() {
        let norm = col.norm();
        if norm > tau {
            col *= (norm - tau) / norm;
        } else {
            col.fill(0.0);
        }
    }
    e
}

/// `(X^T X + 2I)^{-1}` from a Cholesky factorisation, formed once per solve so
/// each `Z` update is a single product.
pub struct ZSolver {
    gram: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl ZSolver {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let gram = x.tr_mul(x);
        let n = gram.nrows();
        let shifted = &gram + DMatrix::identity(n, n) * 2.0;
        let inverse = Cholesky::new(shifted)
            .expect("X^T X + 2I is positive definite")
            .inverse();
        Self { gram, inverse }
    }

    /// Unclipped minimiser of the `Z` subproblem.
    #[allow(clippy::too_many_arguments)]
    pub fn unconstrained(
        &self,
        x: &DMatrix<f64>,
        e: &DMatrix<f64>,
        j: &DMatrix<f64>,
        w: &DMatrix<f64>,
        gamma1: &DMatrix<f64>,
        gamma2: &DMatrix<f64>,
        gamma3: &DMatrix<f64>,
        mu: f64,
    ) -> DMatrix<f64> {
        let inv_mu = 1.0 / mu;
        let mut rhs = x.tr_mul(&(gamma1 * inv_mu - e));
        rhs += &self.gram;
        rhs += j;
        rhs += w;
        rhs -= (gamma2 + gamma3) * inv_mu;
        &self.inverse * rhs
    }
}

/// `Z = max(Z_hat, 0)` with `Z_hat = (X^T X + 2I)^{-1}(X^T X - X^T E + X^T Gamma1/mu
/// + J - Gamma2/mu + W - Gamma3/mu)`.
#[allow(clippy::too_many_arguments)]
pub fn update_z(
    x: &DMatrix<f64>,
    e: &DMatrix<f64>,
    j: &DMatrix<f64>,
    w: &DMatrix<f64>,
    gamma1: &DMatrix<f64>,
    gamma2: &DMatrix<f64>,
    gamma3: &DMatrix<f64>,
    mu: f64,
) -> DMatrix<f64> {
    ZSolver::new(x)
        .unconstrained(x, e, j, w, gamma1, gamma2, gamma3, mu)
        .map(|v| v.max(0.0))
}

/// Solves `A Y + s Y B = C` (or, in product form, `A Y B + s Y = C`) for
/// symmetric `A`, `B` through their eigendecompositions. Both factorisations
/// are computed once and reused across right-hand sides.
pub struct SymmetricSylvester {
    ua: DMatrix<f64>,
    la: Vec<f64>,
    ub: DMatrix<f64>,
    lb: Vec<f64>,
}

impl SymmetricSylvester {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        let ea = SymmetricEigen::new(a.clone());
        let eb = SymmetricEigen::new(b.clone());
        Self {
            ua: ea.eigenvectors,
            la: ea.eigenvalues.iter().copied().collect(),
            ub: eb.eigenvectors,
            lb: eb.eigenvalues.iter().copied().collect(),
        }
    }

    fn rotated(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        self.ua.tr_mul(c) * &self.ub
    }

    fn unrotated(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        &self.ua * y * self.ub.transpose()
    }

    /// `A Y + s Y B = C`. Entries whose denominator falls below
    /// `1e-12 (max|la| + s max|lb|)` are set to zero (minimum-norm solution).
    pub fn solve_sum(&self, c: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
        let max_a = self.la.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_b = self.lb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = 1e-12 * (max_a + s * max_b);
        let mut y = self.rotated(c);
        for (l, &lb) in self.lb.iter().enumerate() {
            for (k, &la) in self.la.iter().enumerate() {
                let den = la + s * lb;
                y[(k, l)] = if den.abs() < floor || den == 0.0 {
                    0.0
                } else {
                    y[(k, l)] / den
                };
            }
        }
        self.unrotated(&y)
    }

    /// `A Y B + s Y = C` with `s > 0` and `A`, `B` positive semidefinite; the
    /// system is then always nonsingular.
    pub fn solve_product(&self, c: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
        let mut y = self.rotated(c);
        for (l, &lb) in self.lb.iter().enumerate() {
            for (k, &la) in self.la.iter().enumerate() {
                y[(k, l)] /= la * lb + s;
            }
        }
        self.unrotated(&y)
    }
}

/// `J` from `2 gamma X^T X J + mu J G^+ = mu (Z + Gamma2 / mu) G^+`.
pub fn update_j(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    gamma2: &DMatrix<f64>,
    mu: f64,
    gamma: f64,
    g_pinv: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if !graph::is_symmetric(g_pinv, 1e-10) {
        return Err(Error::InvalidArgument("G^+ must be symmetric".into()));
    }
    let a = x.tr_mul(x) * (2.0 * gamma);
    let rhs = (z * mu + gamma2) * g_pinv;
    Ok(SymmetricSylvester::new(&a, g_pinv).solve_sum(&rhs, mu))
}

/// `J` from the exact stationarity condition `2 gamma X^T X J G + mu J = mu Z + Gamma2`.
pub fn update_j_stationary(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    gamma2: &DMatrix<f64>,
    mu: f64,
    gamma: f64,
    laplacian: &DMatrix<f64>,
) -> DMatrix<f64> {
    let a = x.tr_mul(x) * (2.0 * gamma);
    SymmetricSylvester::new(&a, laplacian).solve_product(&(z * mu + gamma2), mu)
}

/// Dual ascent on the three constraints, then `mu <- min(mu_max, rho mu)`.
pub fn update_multipliers(state: &mut LraState, x: &DMatrix<f64>, cfg: &SolverConfig) -> Residuals {
    let r1 = x - x * &state.z - &state.e;
    let r2 = &state.z - &state.j;
    let r3 = &state.z - &state.w;
    let mu = state.mu;
    state.gamma1 += &r1 * mu;
    state.gamma2 += &r2 * mu;
    state.gamma3 += &r3 * mu;
    state.mu = cfg.mu_max.min(cfg.rho * mu);
    Residuals {
        iter: state.iter,
        reconstruction: r1.amax(),
        z_j: r2.amax(),
        z_w: r3.amax(),
        mu,
    }
}

fn ensure_finite(m: &DMatrix<f64>, what: &str, block: usize, iter: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "non-finite {what} in superpixel {block} at iteration {iter}"
        )))
    }
}

/// Runs the inexact ALM loop on one superpixel. Hitting `max_iters` is not an
/// error; the solution comes back with `converged == false`.
pub fn solve(
    block: &SuperpixelBlock,
    prior: &LaplacianPrior,
    cfg: &SolverConfig,
) -> Result<LraSolution> {
    cfg.validate()?;
    let x = &block.matrix;
    let (d, n) = x.shape();
    if prior.laplacian.shape() != (n, n) || prior.pseudoinverse.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: (n, n),
            found: prior.laplacian.shape(),
        });
    }
    ensure_finite(x, "input", block.index, 0)?;

    let z_solver = ZSolver::new(x);
    let a = &z_solver.gram * (2.0 * cfg.gamma);
    let sylvester = match cfg.j_update {
        JUpdate::Stationary => SymmetricSylvester::new(&a, &prior.laplacian),
        JUpdate::Pseudoinverse => SymmetricSylvester::new(&a, &prior.pseudoinverse),
    };

    let mut state = LraState::zeros(d, n, cfg.mu0);
    let mut sketch_rng = seeded_rng(block.index as u64, stream::SVT);
    let mut trace = Vec::new();
    let mut converged = false;
    while state.iter < cfg.max_iters {
        state.iter += 1;
        let mu = state.mu;

        let target = &state.z + &state.gamma3 / mu;
        state.w = if cfg.svt_rank == 0 {
            svt(&target, 1.0 / mu)
        } else {
            svt_truncated(&target, 1.0 / mu, cfg.svt_rank, &mut sketch_rng)
        };

        state.z = z_solver
            .unconstrained(
                x,
                &state.e,
                &state.j,
                &state.w,
                &state.gamma1,
                &state.gamma2,
                &state.gamma3,
                mu,
            )
            .map(|v| v.max(0.0));

        let xz = x * &state.z;
        let shrink_input = x - &xz + &state.gamma1 / mu;
        state.e = prox_l21(&shrink_input, cfg.lambda / mu);

        state.j = match cfg.j_update {
            JUpdate::Stationary => sylvester.solve_product(&(&state.z * mu + &state.gamma2), mu),
            JUpdate::Pseudoinverse => {
                let rhs = (&state.z * mu + &state.gamma2) * &prior.pseudoinverse;
                sylvester.solve_sum(&rhs, mu)
            }
        };
        ensure_finite(&state.j, "J", block.index, state.iter)?;

        let res = update_multipliers(&mut state, x, cfg);
        if !res.max().is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite residual in superpixel {} at iteration {}",
                block.index, state.iter
            )));
        }
        trace.push(res);
        if res.reconstruction <= cfg.epsilon && res.z_j <= cfg.epsilon && res.z_w <= cfg.epsilon {
            converged = true;
            break;
        }
    }
    let denoised = x * &state.z;
    Ok(LraSolution {
        z: state.z,
        e: state.e,
        denoised,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::graph::{build_laplacian, Bandwidth};

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn block(x: DMatrix<f64>) -> SuperpixelBlock {
        let n = x.ncols();
        SuperpixelBlock {
            index: 0,
            matrix: x,
            coords: (0..n).map(|j| (0, j)).collect(),
        }
    }

    #[test]
    fn svt_diagonal() {
        let p = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.5]);
        let w = svt(&p, 1.0);
        assert_relative_eq!(
            w,
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
            epsilon = 1e-12
        );
        assert_eq!(svt(&DMatrix::zeros(3, 3), 0.5), DMatrix::zeros(3, 3));
    }

    #[test]
    fn svt_is_local_minimiser() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random(&mut rng, 5, 5);
        let tau = 0.3;
        let objective = |w: &DMatrix<f64>| {
            let nuc: f64 = w.clone().singular_values().sum();
            nuc + (&p - w).norm_squared() / (2.0 * tau)
        };
        let w = svt(&p, tau);
        let base = objective(&w);
        for _ in 0..100 {
            let mut delta = random(&mut rng, 5, 5);
            delta *= 1e-3 / delta.norm();
            assert!(base <= objective(&(&w + delta)) + 1e-12);
        }
    }

    #[test]
    fn z_update_identity_case() {
        let n = 3;
        let x = DMatrix::zeros(2, n);
        let e = DMatrix::zeros(2, n);
        let g1 = DMatrix::zeros(2, n);
        let zero = DMatrix::zeros(n, n);
        let eye = DMatrix::identity(n, n);
        let z = update_z(&x, &e, &eye, &eye, &g1, &zero, &zero, 0.7);
        assert_relative_eq!(z, eye, epsilon = 1e-14);
    }

    #[test]
    fn z_update_clips_negative_entries() {
        let n = 2;
        let x = DMatrix::zeros(1, n);
        let e = DMatrix::zeros(1, n);
        let g1 = DMatrix::zeros(1, n);
        let zero = DMatrix::zeros(n, n);
        // Z_hat = (J + W) / 2 when X = 0.
        let j = DMatrix::from_row_slice(2, 2, &[-0.6, 1.0, 0.4, 0.0]);
        let z = update_z(&x, &e, &j, &zero, &g1, &zero, &zero, 1.0);
        assert_eq!(z[(0, 0)], 0.0);
        assert_relative_eq!(z[(0, 1)], 0.5);
        assert_relative_eq!(z[(1, 0)], 0.2);
    }

    #[test]
    fn z_update_zeroes_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (d, n, mu) = (4, 3, 0.8);
        let x = random(&mut rng, d, n);
        let e = random(&mut rng, d, n);
        let g1 = random(&mut rng, d, n);
        let j = random(&mut rng, n, n);
        let w = random(&mut rng, n, n);
        let g2 = random(&mut rng, n, n);
        let g3 = random(&mut rng, n, n);
        let f = |z: &DMatrix<f64>| {
            mu / 2.0
                * ((&x - &x * z - &e + &g1 / mu).norm_squared()
                    + (z - &j + &g2 / mu).norm_squared()
                    + (z - &w + &g3 / mu).norm_squared())
        };
        let z_hat = ZSolver::new(&x).unconstrained(&x, &e, &j, &w, &g1, &g2, &g3, mu);
        let h = 1e-5;
        let scale = f(&z_hat).abs().max(1.0);
        for idx in 0..n * n {
            let mut plus = z_hat.clone();
            let mut minus = z_hat.clone();
            plus[idx] += h;
            minus[idx] -= h;
            let grad = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!(grad.abs() <= 1e-5 * scale, "entry {idx}: {grad}");
        }
    }

    #[test]
    fn prox_l21_branches() {
        let d = DMatrix::from_column_slice(2, 3, &[3.0, 4.0, 0.6, 0.8, 1.0, -2.0]);
        let e = prox_l21(&d, 2.0);
        assert_relative_eq!(e.column(0).into_owned(), d.column(0) * 0.6, epsilon = 1e-15);
        assert_eq!(e.column(1).norm(), 0.0);
        assert_eq!(prox_l21(&d, 0.0), d);
    }

    #[test]
    fn j_update_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4;
        let z = random(&mut rng, n, n);
        let g2 = random(&mut rng, n, n);
        let mu = 0.5;
        let x = random(&mut rng, 3, n);
        let b = random(&mut rng, n, n);
        let g_pinv = &b * b.transpose() + DMatrix::identity(n, n);
        let j = update_j(&x, &z, &g2, mu, 0.0, &g_pinv).unwrap();
        assert_relative_eq!(j, &z + &g2 / mu, epsilon = 1e-10);

        // 2 gamma X^T X = I with X = I / sqrt(2 gamma).
        let gamma = 3.0_f64;
        let x = DMatrix::identity(n, n) / (2.0 * gamma).sqrt();
        let eye = DMatrix::identity(n, n);
        let j = update_j(&x, &z, &g2, mu, gamma, &eye).unwrap();
        assert_relative_eq!(j, (&z + &g2 / mu) * (mu / (1.0 + mu)), epsilon = 1e-10);
    }

    #[test]
    fn sylvester_residual_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [1, 3, 7] {
            let ba = random(&mut rng, n, n);
            let bb = random(&mut rng, n, n);
            let a = &ba * ba.transpose();
            let b = &bb * bb.transpose();
            let c = random(&mut rng, n, n);
            let mu = 0.3;
            let s = SymmetricSylvester::new(&a, &b);
            let y = s.solve_sum(&c, mu);
            assert!((&a * &y + &y * &b * mu - &c).norm() <= 1e-8 * c.norm());
            let y = s.solve_product(&c, mu);
            assert!((&a * &y * &b + &y * mu - &c).norm() <= 1e-8 * c.norm());
        }
    }

    #[test]
    fn stationary_j_minimises_subproblem() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (d, n, mu, gamma) = (3, 5, 0.9, 2.0);
        let x = random(&mut rng, d, n);
        let z = random(&mut rng, n, n);
        let g2 = random(&mut rng, n, n);
        let prior = build_laplacian(&block(x.clone()), 3, Bandwidth::MeanNearestNeighbor).unwrap();
        let g = &prior.laplacian;
        let f = |j: &DMatrix<f64>| {
            gamma * (&x * j * g * j.transpose() * x.transpose()).trace()
                + mu / 2.0 * (&z - j + &g2 / mu).norm_squared()
        };
        let j = update_j_stationary(&x, &z, &g2, mu, gamma, g);
        let base = f(&j);
        for _ in 0..50 {
            let mut delta = random(&mut rng, n, n);
            delta *= 1e-3 / delta.norm();
            assert!(base <= f(&(&j + delta)) + 1e-12);
        }
    }

    #[test]
    fn multiplier_update() {
        let cfg = SolverConfig::default();
        let x = DMatrix::from_element(1, 1, 1.0);
        let mut s = LraState::zeros(1, 1, 2.0);
        s.z[(0, 0)] = 1.0;
        s.j[(0, 0)] = 1.0;
        s.w[(0, 0)] = 1.0;
        let r = update_multipliers(&mut s, &x, &cfg);
        assert_eq!(r.max(), 0.0);
        assert_eq!(s.gamma1[(0, 0)], 0.0);
        assert_relative_eq!(s.mu, 2.2);

        s.j[(0, 0)] = 0.0;
        s.mu = 2.0;
        update_multipliers(&mut s, &x, &cfg);
        assert_eq!(s.gamma2[(0, 0)], 2.0);

        s.mu = cfg.mu_max;
        update_multipliers(&mut s, &x, &cfg);
        assert_eq!(s.mu, cfg.mu_max);
    }

    #[test]
    fn singleton_block_solves() {
        let b = block(DMatrix::from_column_slice(3, 1, &[0.3, 0.5, 0.9]));
        let prior = build_laplacian(&b, 10, Bandwidth::MeanNearestNeighbor).unwrap();
        let sol = solve(&b, &prior, &SolverConfig::default()).unwrap();
        assert!(sol.z[(0, 0)] >= 0.0);
        assert!((&b.matrix - &sol.denoised - &sol.e).amax() <= 1e-3);
    }

    #[test]
    fn rank_one_block_is_reconstructed() {
        let spectrum = [0.2, 0.5, 0.7, 0.4, 0.9, 0.3];
        let x = DMatrix::from_fn(6, 12, |i, _| spectrum[i]);
        let b = block(x.clone());
        let prior = build_laplacian(&b, 10, Bandwidth::MeanNearestNeighbor).unwrap();
        let cfg = SolverConfig {
            lambda: 1.0,
            gamma: 0.0,
            ..SolverConfig::default()
        };
        let sol = solve(&b, &prior, &cfg).unwrap();
        assert!(sol.converged);
        assert!(sol.e.norm() <= 1e-2 * x.norm(), "E = {}", sol.e.norm());
        assert!((&x - &sol.denoised).norm() <= 1e-2 * x.norm());
        assert!(sol.trace.last().unwrap().max() <= 1e-3);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let b = block(DMatrix::from_element(2, 3, 1.0));
        let prior = LaplacianPrior {
            laplacian: DMatrix::zeros(2, 2),
            pseudoinverse: DMatrix::zeros(2, 2),
        };
        assert!(solve(&b, &prior, &SolverConfig::default()).is_err());
    }

    #[test]
    fn truncated_svt_matches_exact_on_low_rank_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random(&mut rng, 30, 3) * random(&mut rng, 3, 30);
        let exact = svt(&p, 0.2);
        let sketched = svt_truncated(&p, 0.2, 3, &mut rng);
        assert_relative_eq!(exact, sketched, epsilon = 1e-8);
        let small = random(&mut rng, 4, 5);
        assert_relative_eq!(
            svt(&small, 0.1),
            svt_truncated(&small, 0.1, 8, &mut rng),
            epsilon = 1e-10
        );
    }

    #[test]
    fn truncated_svt_caps_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random(&mut rng, 20, 20);
        let w = svt_truncated(&p, 0.01, 2, &mut rng);
        let kept = w.singular_values().iter().filter(|&&s| s > 1e-9).count();
        assert_eq!(kept, 2);
    }

    #[test]
    fn truncated_solve_converges() {
        let spectrum = [0.2, 0.5, 0.7, 0.4, 0.9, 0.3];
        let x = DMatrix::from_fn(6, 40, |i, j| spectrum[i] * (1.0 + 0.01 * (j % 3) as f64));
        let b = block(x.clone());
        let prior = build_laplacian(&b, 10, Bandwidth::MeanNearestNeighbor).unwrap();
        let cfg = SolverConfig {
            svt_rank: 4,
            ..SolverConfig::default()
        };
        let sol = solve(&b, &prior, &cfg).unwrap();
        assert!(sol.converged);
        assert!((&x - &sol.denoised).norm() <= 1e-2 * x.norm());
    }
}
