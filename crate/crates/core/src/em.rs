//! Rank-constrained latent variable graphical lasso, fitted by EM.
//!
//! The observed precision is modelled as `S - L` with `S` sparse and
//! `rank(L) <= r`. Equivalently, `r` latent Gaussian coordinates are appended
//! to the `p` observed ones and the full `(p + r)`-dimensional precision `K`
//! is estimated with an l1 penalty on the off-diagonal observed block only.
//! `S = K_O` and `L = K_OH K_H⁻¹ K_HO`.
//!
//! Each EM iteration replaces the unobservable full-data covariance by its
//! conditional expectation ([`e_step`]) and then solves a masked graphical
//! lasso on it ([`m_step`]). An M-step is only accepted when it does not
//! increase the expected objective, which keeps the observed penalized
//! objective non-increasing even though the inner solver is inexact.

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::glasso::{
    glasso_masked, lvglasso_mask, masked_objective, neg_log_lik, GlassoConfig, GlassoSolution,
};
use crate::matrix::SymMatrix;

/// Scale of the pseudorandom observed-latent entries used at initialization.
const INIT_CROSS_SCALE: f64 = 0.01;

/// A full `(p + r)`-dimensional precision with the observed coordinates first.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionPartition {
    p: usize,
    r: usize,
    k: SymMatrix,
}

impl PrecisionPartition {
    pub fn new(p: usize, r: usize, k: SymMatrix) -> Result<Self> {
        if p == 0 {
            return Err(Error::input("observed dimension p must be at least 1"));
        }
        if k.dim() != p + r {
            return Err(Error::input(format!(
                "precision has dimension {}, expected p + r = {}",
                k.dim(),
                p + r
            )));
        }
        if !k.is_positive_definite() {
            return Err(Error::not_pd("full precision K"));
        }
        Ok(PrecisionPartition { p, r, k })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn k(&self) -> &SymMatrix {
        &self.k
    }

    /// `K_O`, the observed-observed block.
    pub fn observed_block(&self) -> SymMatrix {
        self.k.principal(&(0..self.p).collect::<Vec<_>>())
    }

    /// `K_OH`, a `p x r` matrix.
    pub fn cross_block(&self) -> DMatrix<f64> {
        self.k
            .as_matrix()
            .view((0, self.p), (self.p, self.r))
            .into_owned()
    }

    /// `K_H`, an `r x r` matrix (empty when `r = 0`).
    pub fn latent_block(&self) -> DMatrix<f64> {
        self.k
            .as_matrix()
            .view((self.p, self.p), (self.r, self.r))
            .into_owned()
    }
}

/// How [`lambda_path`] starts each fit after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Every fit starts from [`init_k`].
    DiagonalRegularized,
    /// Each fit starts from the previous fit on the path.
    WarmStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Number of latent coordinates, the rank bound on `L`.
    pub r: usize,
    pub lambda: f64,
    /// Relative tolerance on the change of the observed objective.
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub glasso: GlassoConfig,
    pub init_scheme: InitScheme,
    pub init_seed: u64,
    /// Ridge added to the sample covariance before inverting it at initialization.
    pub ridge: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            r: 0,
            lambda: 0.0,
            em_tol: 1e-5,
            em_max_iter: 200,
            glasso: GlassoConfig::default(),
            init_scheme: InitScheme::WarmStart,
            init_seed: 0,
            ridge: 1e-2,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.em_tol > 0.0) {
            return Err(Error::input(format!(
                "em_tol must be positive, got {}",
                self.em_tol
            )));
        }
        if self.em_max_iter == 0 {
            return Err(Error::input("em_max_iter must be at least 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::input(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::input(format!(
                "ridge must be nonnegative, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub lambda: f64,
    pub partition: PrecisionPartition,
    pub s_hat: SymMatrix,
    pub l_hat: SymMatrix,
    /// Observed penalized objective at the initial point and after every iteration.
    pub observed_objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Solution of the last M-step, reused to warm-start the next solve.
    pub m_step: GlassoSolution,
}

impl EmFit {
    pub fn objective(&self) -> f64 {
        *self
            .observed_objective_trace
            .last()
            .expect("trace is never empty")
    }
}

/// `S = K_O` and `L = K_OH K_H⁻¹ K_HO`, so that `S - L = ((K⁻¹)_O)⁻¹`.
pub fn extract_sl(partition: &PrecisionPartition) -> Result<(SymMatrix, SymMatrix)> {
    let s = partition.observed_block();
    let p = partition.p();
    if partition.r() == 0 {
        return Ok((s, SymMatrix::zeros(p)));
    }
    let cross = partition.cross_block();
    let latent =
        Cholesky::new(partition.latent_block()).ok_or_else(|| Error::not_pd("latent block K_H"))?;
    let solved = latent.solve(&cross.transpose());
    let l = SymMatrix::symmetrize(&(&cross * solved))?;
    Ok((s, l))
}

/// `-ln det(S - L) + tr(Σ_O^n (S - L)) + λ sum_{i != j} |S_ij|`.
pub fn observed_objective(
    s: &SymMatrix,
    l: &SymMatrix,
    sigma_o_n: &SymMatrix,
    lambda: f64,
) -> Result<f64> {
    let marginal = s.sub(l)?;
    let off_l1 = s.as_matrix().iter().map(|v| v.abs()).sum::<f64>()
        - s.diagonal().iter().map(|v| v.abs()).sum::<f64>();
    Ok(neg_log_lik(&marginal, sigma_o_n)? + lambda * off_l1)
}

/// Expected full-data sample covariance given the observed sample covariance
/// and the current precision.
///
/// With `Σ = K⁻¹` and `A = Σ_O⁻¹ Σ_OH`, the blocks are `W_O = Σ_O^n`,
/// `W_OH = Σ_O^n A` and `W_H = Σ_H - Σ_HO A + Aᵀ Σ_O^n A`.
pub fn e_step(current: &PrecisionPartition, sigma_o_n: &SymMatrix) -> Result<SymMatrix> {
    let p = current.p();
    let r = current.r();
    if sigma_o_n.dim() != p {
        return Err(Error::input(format!(
            "sample covariance has dimension {}, model has p = {p}",
            sigma_o_n.dim()
        )));
    }
    if r == 0 {
        return Ok(sigma_o_n.clone());
    }
    let sigma = current
        .k()
        .inverse()
        .map_err(|_| Error::Numerical("E-step: current precision is not invertible".into()))?;
    let full = sigma.as_matrix();
    let sigma_o = full.view((0, 0), (p, p)).into_owned();
    let sigma_oh = full.view((0, p), (p, r)).into_owned();
    let sigma_h = full.view((p, p), (r, r)).into_owned();
    let chol_o = Cholesky::new(sigma_o)
        .ok_or_else(|| Error::Numerical("E-step: observed covariance block is singular".into()))?;
    let a = chol_o.solve(&sigma_oh);
    let sn = sigma_o_n.as_matrix();
    let w_oh = sn * &a;
    let w_h = &sigma_h - sigma_oh.transpose() * &a + a.transpose() * &w_oh;

    let n = p + r;
    let mut w = DMatrix::zeros(n, n);
    w.view_mut((0, 0), (p, p)).copy_from(sn);
    w.view_mut((0, p), (p, r)).copy_from(&w_oh);
    w.view_mut((p, 0), (r, p)).copy_from(&w_oh.transpose());
    w.view_mut((p, p), (r, r)).copy_from(&w_h);
    SymMatrix::symmetrize(&w)
}

/// Minimizes `-ln det K + tr(W K) + λ ||K_O†||_1` over positive definite `K`
/// with the latent coordinates left unpenalized.
pub fn m_step(
    w: &SymMatrix,
    cfg: &EmConfig,
    warm: Option<&GlassoSolution>,
) -> Result<(PrecisionPartition, GlassoSolution)> {
    let n = w.dim();
    if n <= cfg.r {
        return Err(Error::input(format!(
            "W has dimension {n}, need more than r = {}",
            cfg.r
        )));
    }
    let p = n - cfg.r;
    if cfg.lambda == 0.0 && !w.is_positive_definite() {
        return Err(Error::Numerical(
            "unpenalized M-step needs a positive definite expected covariance".into(),
        ));
    }
    let mask = lvglasso_mask(p, cfg.r, cfg.lambda)?;
    let sol = glasso_masked(w, &mask, &cfg.glasso, warm)?;
    let partition = PrecisionPartition::new(p, cfg.r, sol.precision.clone())?;
    Ok((partition, sol))
}

/// Starting point: `K_O = (Σ_O^n + ridge·I)⁻¹`, `K_H = I`, and a seeded
/// pseudorandom `K_OH` of scale 0.01. `K_OH = 0` is a fixed point of EM, so
/// the cross block must not start at zero. The latent diagonal is doubled
/// until the result is positive definite.
pub fn init_k(sigma_o_n: &SymMatrix, cfg: &EmConfig) -> Result<PrecisionPartition> {
    let p = sigma_o_n.dim();
    let r = cfg.r;
    let ridged = SymMatrix::from_upper_fn(p, |i, j| {
        sigma_o_n[(i, j)] + if i == j { cfg.ridge } else { 0.0 }
    });
    let k_o = ridged.inverse().map_err(|_| {
        Error::input("sample covariance plus ridge is not positive definite; increase the ridge")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let cross: Vec<f64> = (0..p * r)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            INIT_CROSS_SCALE * z
        })
        .collect();

    let mut latent_diag = 1.0;
    for _ in 0..64 {
        let k = SymMatrix::from_upper_fn(p + r, |i, j| match (i < p, j < p) {
            (true, true) => k_o[(i, j)],
            (true, false) => cross[i * r + (j - p)],
            (false, false) => {
                if i == j {
                    latent_diag
                } else {
                    0.0
                }
            }
            (false, true) => unreachable!("upper triangle only"),
        });
        if k.is_positive_definite() {
            return PrecisionPartition::new(p, r, k);
        }
        latent_diag *= 2.0;
    }
    Err(Error::Numerical(
        "could not make the initial precision positive definite".into(),
    ))
}

fn check_sample_covariance(sigma_o_n: &SymMatrix) -> Result<()> {
    if let Some(i) = (0..sigma_o_n.dim()).find(|&i| !(sigma_o_n[(i, i)] > 0.0)) {
        return Err(Error::input(format!(
            "sample covariance diagonal must be positive, entry {i} is {}",
            sigma_o_n[(i, i)]
        )));
    }
    let trace: f64 = sigma_o_n.diagonal().iter().sum();
    let min_ev = sigma_o_n.min_eigenvalue();
    if min_ev < -1e-10 * trace {
        return Err(Error::input(format!(
            "sample covariance is not positive semidefinite (smallest eigenvalue {min_ev})"
        )));
    }
    Ok(())
}

/// Fits the estimator at one `(λ, r)`.
///
/// With `r = 0` this is a single masked graphical lasso on `Σ_O^n`.
/// Otherwise EM runs from `warm` (when its dimensions match) or from
/// [`init_k`] until the relative change of the observed objective is at most
/// `em_tol`.
pub fn fit(sigma_o_n: &SymMatrix, cfg: &EmConfig, warm: Option<&EmFit>) -> Result<EmFit> {
    cfg.validate()?;
    check_sample_covariance(sigma_o_n)?;
    let p = sigma_o_n.dim();
    let warm = warm.filter(|w| w.partition.p() == p && w.partition.r() == cfg.r);
    let warm_sol = warm.map(|w| &w.m_step);

    if cfg.r == 0 {
        let (partition, sol) = m_step(sigma_o_n, cfg, warm_sol)?;
        let (s_hat, l_hat) = extract_sl(&partition)?;
        let objective = observed_objective(&s_hat, &l_hat, sigma_o_n, cfg.lambda)?;
        return Ok(EmFit {
            lambda: cfg.lambda,
            partition,
            s_hat,
            l_hat,
            observed_objective_trace: vec![objective],
            iterations: 1,
            converged: sol.converged,
            m_step: sol,
        });
    }

    let mut partition = match warm {
        Some(w) => w.partition.clone(),
        None => init_k(sigma_o_n, cfg)?,
    };
    let mask = lvglasso_mask(p, cfg.r, cfg.lambda)?;
    let (s, l) = extract_sl(&partition)?;
    let mut objective = observed_objective(&s, &l, sigma_o_n, cfg.lambda)?;
    let mut trace = vec![objective];
    let mut last_sol: Option<GlassoSolution> = warm_sol.cloned();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.em_max_iter {
        iterations += 1;
        let w = e_step(&partition, sigma_o_n)?;
        let q_current = masked_objective(partition.k(), &w, &mask)?;
        let (candidate, sol) = m_step(&w, cfg, last_sol.as_ref())?;
        let q_candidate = masked_objective(candidate.k(), &w, &mask)?;
        let improved = q_candidate <= q_current;
        if improved {
            partition = candidate;
        }
        last_sol = Some(sol);
        if !improved {
            // The M-step could not improve on the current point at solver precision.
            converged = true;
            break;
        }

        let (s, l) = extract_sl(&partition)?;
        let next = observed_objective(&s, &l, sigma_o_n, cfg.lambda)?;
        trace.push(next);
        let change = (next - objective).abs();
        objective = next;
        if change <= cfg.em_tol * (1.0 + objective.abs()) {
            converged = true;
            break;
        }
    }

    let (s_hat, l_hat) = extract_sl(&partition)?;
    let m_step = match last_sol {
        Some(sol) => sol,
        None => unreachable!("em_max_iter >= 1 guarantees one M-step"),
    };
    Ok(EmFit {
        lambda: cfg.lambda,
        partition,
        s_hat,
        l_hat,
        observed_objective_trace: trace,
        iterations,
        converged,
        m_step,
    })
}

/// Fits every λ in `lambdas` (strictly descending), in order.
///
/// Under [`InitScheme::WarmStart`] each fit starts from the latest successful
/// one. A failure at one λ is reported in its slot and does not stop the path.
pub fn lambda_path(
    sigma_o_n: &SymMatrix,
    lambdas: &[f64],
    cfg: &EmConfig,
) -> Result<Vec<Result<EmFit>>> {
    if lambdas.is_empty() {
        return Err(Error::input("lambda grid is empty"));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::input("lambda values must be nonnegative"));
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::input("lambda grid must be strictly descending"));
    }
    let mut out = Vec::with_capacity(lambdas.len());
    let mut previous: Option<EmFit> = None;
    for &lambda in lambdas {
        let cfg_l = EmConfig {
            lambda,
            ..cfg.clone()
        };
        let warm = match cfg.init_scheme {
            InitScheme::WarmStart => previous.as_ref(),
            InitScheme::DiagonalRegularized => None,
        };
        let res = fit(sigma_o_n, &cfg_l, warm);
        if let Ok(f) = &res {
            previous = Some(f.clone());
        }
        out.push(res);
    }
    Ok(out)
}

/// `count` values from `max` down to `min`, log-spaced or evenly spaced.
pub fn lambda_grid(min: f64, max: f64, count: usize, log_spaced: bool) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::input("lambda grid needs at least one value"));
    }
    if !(min >= 0.0) || !(max >= min) || !max.is_finite() {
        return Err(Error::input(format!("invalid lambda range [{min}, {max}]")));
    }
    if count == 1 {
        return Ok(vec![max]);
    }
    if log_spaced && !(min > 0.0) {
        return Err(Error::input(
            "log-spaced lambda grid needs a positive minimum",
        ));
    }
    if max == min {
        return Err(Error::input(
            "lambda grid with several values needs max > min",
        ));
    }
    let steps = (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            let t = i as f64 / steps;
            if log_spaced {
                (max.ln() + t * (min.ln() - max.ln())).exp()
            } else {
                max + t * (min - max)
            }
        })
        .collect())
}

/// 40 log-spaced values from `0.5 · max_{i != j} |Σ_ij|` down to a
/// thousandth of that.
pub fn default_lambda_grid(sigma_o_n: &SymMatrix) -> Result<Vec<f64>> {
    let top = 0.5 * sigma_o_n.max_abs_off_diagonal();
    if !(top > 0.0) {
        return Err(Error::input(
            "sample covariance has no nonzero off-diagonal entry to scale the lambda grid",
        ));
    }
    lambda_grid(top * 1e-3, top, DEFAULT_GRID_SIZE, true)
}

pub const DEFAULT_GRID_SIZE: usize = 40;

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> SymMatrix {
        SymMatrix::from_rows(&[
            vec![2.0, 0.3, -0.2],
            vec![0.3, 1.5, 0.4],
            vec![-0.2, 0.4, 1.8],
        ])
        .unwrap()
    }

    #[test]
    fn extract_block_diagonal() {
        let k = SymMatrix::from_upper_fn(3, |i, j| match (i, j) {
            (0, 0) => 2.0,
            (1, 1) => 3.0,
            (0, 1) => 0.5,
            (2, 2) => 4.0,
            _ => 0.0,
        });
        let part = PrecisionPartition::new(2, 1, k).unwrap();
        let (s, l) = extract_sl(&part).unwrap();
        assert_eq!(s.as_matrix().as_slice(), &[2.0, 0.5, 0.5, 3.0]);
        assert!(l.as_matrix().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn extract_rank_one_outer_product() {
        let v = [0.3, -0.2];
        let kh = 2.0;
        let k = SymMatrix::from_rows(&[
            vec![1.0, 0.1, v[0]],
            vec![0.1, 1.0, v[1]],
            vec![v[0], v[1], kh],
        ])
        .unwrap();
        let part = PrecisionPartition::new(2, 1, k).unwrap();
        let (_, l) = extract_sl(&part).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((l[(i, j)] - v[i] * v[j] / kh).abs() < 1e-15);
            }
        }
        assert_eq!(l.numerical_rank(1e-8), 1);
    }

    #[test]
    fn observed_objective_closed_forms() {
        let i3 = SymMatrix::identity(3);
        let z = SymMatrix::zeros(3);
        assert!((observed_objective(&i3, &z, &i3, 5.0).unwrap() - 3.0).abs() < 1e-14);
        let sn = spd3();
        let s = sn.inverse().unwrap();
        let v = observed_objective(&s, &z, &sn, 0.0).unwrap();
        assert!((v - (3.0 + sn.log_det().unwrap())).abs() < 1e-12);
    }

    #[test]
    fn observed_objective_rejects_infeasible() {
        let s = SymMatrix::identity(2);
        let l = SymMatrix::identity(2).scale(2.0);
        assert!(observed_objective(&s, &l, &SymMatrix::identity(2), 0.1).is_err());
    }

    #[test]
    fn e_step_decoupled_latent() {
        let k = SymMatrix::from_upper_fn(4, |i, j| {
            if i == j {
                [2.0, 1.5, 1.8, 4.0][i]
            } else if i < 3 && j < 3 {
                spd3()[(i, j)]
            } else {
                0.0
            }
        });
        let part = PrecisionPartition::new(3, 1, k.clone()).unwrap();
        let sn = SymMatrix::from_rows(&[
            vec![1.0, 0.2, 0.0],
            vec![0.2, 1.1, 0.1],
            vec![0.0, 0.1, 0.9],
        ])
        .unwrap();
        let w = e_step(&part, &sn).unwrap();
        for i in 0..3 {
            assert_eq!(w[(i, 3)], 0.0);
        }
        assert!((w[(3, 3)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn e_step_fixed_point_when_model_matches() {
        let k = SymMatrix::from_rows(&[
            vec![2.0, 0.3, 0.2, 0.5],
            vec![0.3, 1.5, 0.1, -0.4],
            vec![0.2, 0.1, 1.8, 0.3],
            vec![0.5, -0.4, 0.3, 2.0],
        ])
        .unwrap();
        let sigma = k.inverse().unwrap();
        let part = PrecisionPartition::new(3, 1, k).unwrap();
        let sn = sigma.principal(&[0, 1, 2]);
        let w = e_step(&part, &sn).unwrap();
        assert!(w.max_abs_diff(&sigma) < 1e-12);
    }

    #[test]
    fn init_k_ridge_and_determinism() {
        let cfg = EmConfig {
            r: 1,
            ridge: 0.01,
            init_seed: 7,
            ..EmConfig::default()
        };
        let a = init_k(&SymMatrix::identity(3), &cfg).unwrap();
        let b = init_k(&SymMatrix::identity(3), &cfg).unwrap();
        assert_eq!(a, b);
        let ko = a.observed_block();
        assert!(ko.max_abs_diff(&SymMatrix::identity(3).scale(1.0 / 1.01)) < 1e-15);
        assert!(a.cross_block().iter().all(|v| *v != 0.0 && v.abs() < 0.1));
        assert_eq!(a.latent_block()[(0, 0)], 1.0);

        let other = init_k(
            &SymMatrix::identity(3),
            &EmConfig {
                init_seed: 8,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(a.cross_block(), other.cross_block());

        let plain = init_k(
            &spd3(),
            &EmConfig {
                r: 0,
                ridge: 0.01,
                ..EmConfig::default()
            },
        )
        .unwrap();
        assert_eq!(plain.r(), 0);
        assert!(plain.k().is_positive_definite());
    }

    #[test]
    fn fit_rejects_bad_input() {
        let bad = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            fit(&bad, &EmConfig::default(), None),
            Err(Error::Input(_))
        ));
        let cfg = EmConfig {
            em_tol: 0.0,
            ..EmConfig::default()
        };
        assert!(fit(&SymMatrix::identity(2), &cfg, None).is_err());
    }

    #[test]
    fn path_requires_descending_grid() {
        let sn = spd3();
        let cfg = EmConfig::default();
        assert!(lambda_path(&sn, &[0.1, 0.2], &cfg).is_err());
        assert!(lambda_path(&sn, &[], &cfg).is_err());
        assert!(lambda_path(&sn, &[0.2, 0.2], &cfg).is_err());
    }
}
