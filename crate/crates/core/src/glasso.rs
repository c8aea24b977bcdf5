//! Masked graphical lasso.
//!
//! Minimizes `-ln det K + tr(W K) + sum_ij M_ij |K_ij|` over positive definite
//! `K`, where `M` is an arbitrary symmetric nonnegative [`PenaltyMask`]. The
//! solver runs block coordinate descent on the working covariance estimate:
//! each sweep visits the rows in ascending order and solves one lasso problem
//! per row with that row's mask weights as penalties. Rows whose weights are
//! all zero are solved exactly by a Cholesky solve.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

/// `sign(x) · max(|x| - t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `-ln det K + tr(W K)`.
pub fn neg_log_lik(k: &SymMatrix, w: &SymMatrix) -> Result<f64> {
    if k.dim() != w.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: K is {}, W is {}",
            k.dim(),
            w.dim()
        )));
    }
    Ok(-k.log_det()? + k.trace_product(w)?)
}

/// `neg_log_lik(K, W) + sum_ij M_ij |K_ij|`, the quantity [`glasso_masked`] minimizes.
pub fn masked_objective(k: &SymMatrix, w: &SymMatrix, mask: &PenaltyMask) -> Result<f64> {
    mask.check_dim(k.dim())?;
    let penalty: f64 = k
        .as_matrix()
        .iter()
        .zip(mask.weights.as_matrix().iter())
        .map(|(kij, mij)| mij * kij.abs())
        .sum();
    Ok(neg_log_lik(k, w)? + penalty)
}

/// Largest violation of the subgradient optimality conditions of the masked
/// problem at `k`, measured against the exact inverse of `k`.
///
/// Off-diagonal entries with `K_ij = 0` need `|W_ij - Σ_ij| <= M_ij`; nonzero
/// entries need `W_ij - Σ_ij + M_ij sign(K_ij) = 0`. On the diagonal,
/// `Σ_ii = W_ii + M_ii`.
pub fn kkt_residual(k: &SymMatrix, w: &SymMatrix, mask: &PenaltyMask) -> Result<f64> {
    mask.check_dim(k.dim())?;
    let sigma = k.inverse()?;
    Ok(kkt_residual_with(k, &sigma, w, mask))
}

fn kkt_residual_with(k: &SymMatrix, sigma: &SymMatrix, w: &SymMatrix, mask: &PenaltyMask) -> f64 {
    let n = k.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        worst = worst.max((w[(i, i)] + mask.weight(i, i) - sigma[(i, i)]).abs());
        for j in (i + 1)..n {
            let grad = w[(i, j)] - sigma[(i, j)];
            let m = mask.weight(i, j);
            let kij = k[(i, j)];
            let r = if kij == 0.0 {
                (grad.abs() - m).max(0.0)
            } else {
                (grad + m * kij.signum()).abs()
            };
            worst = worst.max(r);
        }
    }
    worst
}

/// Per-entry nonnegative penalty weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMask {
    weights: SymMatrix,
}

impl PenaltyMask {
    pub fn new(weights: SymMatrix) -> Result<Self> {
        if let Some(v) = weights.as_matrix().iter().find(|v| **v < 0.0) {
            return Err(Error::input(format!(
                "penalty weights must be nonnegative, found {v}"
            )));
        }
        Ok(PenaltyMask { weights })
    }

    /// Weight `lambda` on every off-diagonal entry, zero on the diagonal.
    pub fn uniform(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::input(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        Self::new(SymMatrix::from_upper_fn(dim, |i, j| {
            if i == j {
                0.0
            } else {
                lambda
            }
        }))
    }

    pub fn zeros(dim: usize) -> Self {
        PenaltyMask {
            weights: SymMatrix::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &SymMatrix {
        &self.weights
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::input(format!(
                "mask dimension {} does not match matrix dimension {dim}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Mask for the augmented `(p + r)`-dimensional problem: `lambda` on the
/// off-diagonal observed-observed entries, zero on the diagonal and on every
/// entry that touches a latent coordinate (index `>= p`).
pub fn lvglasso_mask(p: usize, r: usize, lambda: f64) -> Result<PenaltyMask> {
    if p == 0 {
        return Err(Error::input("p must be at least 1"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::input(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    PenaltyMask::new(SymMatrix::from_upper_fn(p + r, |i, j| {
        if i != j && i < p && j < p {
            lambda
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoConfig {
    /// Sweep tolerance on the largest absolute change of the working covariance.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Coordinate-descent cycle limit for each row lasso.
    pub inner_max_iter: usize,
}

impl Default for GlassoConfig {
    fn default() -> Self {
        GlassoConfig {
            tol: 1e-6,
            max_sweeps: 500,
            inner_max_iter: 10_000,
        }
    }
}

impl GlassoConfig {
    /// Row lasso problems are solved to a tenth of the sweep tolerance.
    pub fn inner_tol(&self) -> f64 {
        self.tol / 10.0
    }
}

#[derive(Debug, Clone)]
pub struct GlassoSolution {
    pub precision: SymMatrix,
    /// Working covariance maintained by the sweeps; approximately `precision⁻¹`.
    pub covariance_estimate: SymMatrix,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Number of full sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Objective of the precision recovered after each sweep.
    pub objective_trace: Vec<f64>,
    /// Column `j` holds the row-`j` lasso coefficients (zero at index `j`).
    coefs: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub coef: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `½ βᵀ G β - targetᵀ β + sum_j penalties_j |β_j|` by cyclic
/// coordinate descent. Stops once the KKT residual is at most `tol`; if
/// `max_iter` cycles pass first, the last iterate is returned unconverged.
pub fn lasso_cd(
    gram: &SymMatrix,
    target: &[f64],
    penalties: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<LassoSolution> {
    let n = gram.dim();
    if target.len() != n || penalties.len() != n {
        return Err(Error::input(format!(
            "lasso: gram is {n}x{n} but target has {} and penalties {} entries",
            target.len(),
            penalties.len()
        )));
    }
    if penalties.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::input("lasso penalties must be nonnegative"));
    }
    let mut coef = vec![0.0; n];
    let out = cd_solve(
        gram.as_matrix(),
        target,
        penalties,
        &mut coef,
        tol,
        max_iter,
    )?;
    Ok(LassoSolution {
        coef,
        kkt_residual: out.kkt_residual,
        iterations: out.iterations,
        converged: out.converged,
    })
}

struct CdOutcome {
    kkt_residual: f64,
    iterations: usize,
    converged: bool,
}

fn cd_solve(
    gram: &DMatrix<f64>,
    target: &[f64],
    penalties: &[f64],
    coef: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CdOutcome> {
    let n = target.len();
    for k in 0..n {
        if !(gram[(k, k)] > 0.0) {
            return Err(Error::not_pd(format!(
                "lasso gram has nonpositive diagonal entry {} at {k}",
                gram[(k, k)]
            )));
        }
    }
    // grad = G β - target
    let mut grad = gradient(gram, target, coef);
    let mut kkt = lasso_kkt(&grad, penalties, coef);
    let mut iterations = 0;
    while kkt > tol && iterations < max_iter {
        iterations += 1;
        for k in 0..n {
            let gkk = gram[(k, k)];
            let old = coef[k];
            let z = gkk * old - grad[k];
            let new = soft_threshold(z, penalties[k]) / gkk;
            let delta = new - old;
            if delta != 0.0 {
                coef[k] = new;
                for (i, g) in grad.iter_mut().enumerate() {
                    *g += delta * gram[(i, k)];
                }
            }
        }
        grad = gradient(gram, target, coef);
        kkt = lasso_kkt(&grad, penalties, coef);
    }
    Ok(CdOutcome {
        kkt_residual: kkt,
        iterations,
        converged: kkt <= tol,
    })
}

fn gradient(gram: &DMatrix<f64>, target: &[f64], coef: &[f64]) -> Vec<f64> {
    let n = target.len();
    (0..n)
        .map(|i| (0..n).map(|j| gram[(i, j)] * coef[j]).sum::<f64>() - target[i])
        .collect()
}

fn lasso_kkt(grad: &[f64], penalties: &[f64], coef: &[f64]) -> f64 {
    grad.iter()
        .zip(penalties)
        .zip(coef)
        .map(|((g, p), b)| {
            if *b == 0.0 {
                (g.abs() - p).max(0.0)
            } else {
                (g + p * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Solves the masked graphical lasso for the empirical (or expected)
/// covariance `w`.
///
/// `warm`, when given, seeds the working covariance and the row coefficients;
/// it is a starting point only and does not change the optimum.
pub fn glasso_masked(
    w: &SymMatrix,
    mask: &PenaltyMask,
    cfg: &GlassoConfig,
    warm: Option<&GlassoSolution>,
) -> Result<GlassoSolution> {
    let n = w.dim();
    mask.check_dim(n)?;
    if let Some(i) = (0..n).find(|&i| !(w[(i, i)] > 0.0)) {
        return Err(Error::input(format!(
            "W must have a strictly positive diagonal, W[{i},{i}] = {}",
            w[(i, i)]
        )));
    }
    if !(cfg.tol > 0.0) || cfg.max_sweeps == 0 {
        return Err(Error::input(
            "glasso tolerance must be positive and max_sweeps at least 1",
        ));
    }

    if w.max_abs_off_diagonal() == 0.0 {
        return Ok(diagonal_solution(w, mask));
    }

    let (mut sigma, mut coefs) = starting_point(w, mask, warm)?;
    let inner_tol = cfg.inner_tol();
    let mut objective_trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    let mut idx = Vec::with_capacity(n);
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..n {
            idx.clear();
            idx.extend((0..n).filter(|&i| i != j));
            let gram = DMatrix::from_fn(n - 1, n - 1, |a, b| sigma[(idx[a], idx[b])]);
            let target: Vec<f64> = idx.iter().map(|&i| w[(i, j)]).collect();
            let penalties: Vec<f64> = idx.iter().map(|&i| mask.weight(i, j)).collect();
            let mut beta: Vec<f64> = idx.iter().map(|&i| coefs[(i, j)]).collect();

            if penalties.iter().all(|p| *p == 0.0) {
                let chol = Cholesky::new(gram.clone()).ok_or_else(|| {
                    Error::not_pd(format!("working covariance lost definiteness at row {j}"))
                })?;
                let sol = chol.solve(&DVector::from_column_slice(&target));
                beta.copy_from_slice(sol.as_slice());
            } else {
                // Non-convergence of a row problem is caught by the sweep criterion.
                cd_solve(
                    &gram,
                    &target,
                    &penalties,
                    &mut beta,
                    inner_tol,
                    cfg.inner_max_iter,
                )?;
            }

            let row = &gram * DVector::from_column_slice(&beta);
            for (a, &i) in idx.iter().enumerate() {
                max_change = max_change.max((sigma[(i, j)] - row[a]).abs());
                sigma[(i, j)] = row[a];
                sigma[(j, i)] = row[a];
                coefs[(i, j)] = beta[a];
            }
        }

        let precision = recover_precision(&sigma, &coefs)?;
        objective_trace.push(masked_objective(&precision, w, mask).unwrap_or(f64::INFINITY));

        if max_change <= cfg.tol {
            converged = true;
            break;
        }
    }

    let covariance_estimate = SymMatrix::symmetrize(&sigma)?;
    let precision = recover_precision(&sigma, &coefs)?;
    let precision_cov = precision.inverse().map_err(|_| {
        Error::Numerical("recovered precision matrix is not positive definite".into())
    })?;
    let objective = masked_objective(&precision, w, mask)?;
    let kkt = kkt_residual_with(&precision, &precision_cov, w, mask);
    Ok(GlassoSolution {
        precision,
        covariance_estimate,
        objective,
        kkt_residual: kkt,
        iterations: sweeps,
        converged,
        objective_trace,
        coefs,
    })
}

fn diagonal_solution(w: &SymMatrix, mask: &PenaltyMask) -> GlassoSolution {
    let n = w.dim();
    let diag: Vec<f64> = (0..n).map(|i| w[(i, i)] + mask.weight(i, i)).collect();
    let precision = SymMatrix::from_diagonal(&diag.iter().map(|d| 1.0 / d).collect::<Vec<_>>());
    let covariance_estimate = SymMatrix::from_diagonal(&diag);
    let objective = masked_objective(&precision, w, mask).expect("diagonal precision is PD");
    let kkt = kkt_residual_with(&precision, &covariance_estimate, w, mask);
    GlassoSolution {
        precision,
        covariance_estimate,
        objective,
        kkt_residual: kkt,
        iterations: 0,
        converged: true,
        objective_trace: vec![objective],
        coefs: DMatrix::zeros(n, n),
    }
}

/// Cold start is `W + diag(M)`. A warm start reuses the previous working
/// covariance with its diagonal reset and off-diagonals clipped into
/// `[W_ij - M_ij, W_ij + M_ij]`; if that matrix is not positive definite the
/// cold start is used instead.
fn starting_point(
    w: &SymMatrix,
    mask: &PenaltyMask,
    warm: Option<&GlassoSolution>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = w.dim();
    let box_start = |base: &SymMatrix| {
        DMatrix::from_fn(n, n, |i, j| {
            let m = mask.weight(i, j);
            if i == j {
                w[(i, i)] + m
            } else {
                base[(i, j)].clamp(w[(i, j)] - m, w[(i, j)] + m)
            }
        })
    };
    if let Some(prev) = warm {
        if prev.covariance_estimate.dim() != n {
            return Err(Error::input(format!(
                "warm start has dimension {}, problem has {n}",
                prev.covariance_estimate.dim()
            )));
        }
        let sigma = box_start(&prev.covariance_estimate);
        if Cholesky::new(sigma.clone()).is_some() {
            return Ok((sigma, prev.coefs.clone()));
        }
    }
    Ok((box_start(w), DMatrix::zeros(n, n)))
}

/// Back-substitution of the row solutions: `K_jj = 1 / (Σ_jj - Σ_{-j,j}ᵀ β_j)`
/// and `K_{-j,j} = -β_j K_jj`, followed by symmetrization.
fn recover_precision(sigma: &DMatrix<f64>, coefs: &DMatrix<f64>) -> Result<SymMatrix> {
    let n = sigma.nrows();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut quad = 0.0;
        for i in 0..n {
            if i != j {
                quad += sigma[(i, j)] * coefs[(i, j)];
            }
        }
        let denom = sigma[(j, j)] - quad;
        if !(denom > 0.0) {
            return Err(Error::Numerical(format!(
                "nonpositive Schur complement {denom} while recovering precision row {j}"
            )));
        }
        let kjj = 1.0 / denom;
        k[(j, j)] = kjj;
        for i in 0..n {
            if i != j {
                k[(i, j)] = -coefs[(i, j)] * kjj;
            }
        }
    }
    SymMatrix::symmetrize(&k)
}
