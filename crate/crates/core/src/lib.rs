//! Rank-constrained latent variable graphical lasso.
//!
//! The observed precision matrix is estimated as a sparse matrix minus a
//! low-rank one, `S - L` with `rank(L) <= r`, by an EM algorithm on an
//! augmented model with `r` latent coordinates. The M-step is a graphical
//! lasso with the latent coordinates unpenalized ([`glasso::glasso_masked`]).
//! With `r = 0` the estimator is the plain graphical lasso.
//!
//! Also included: a generator for random geometric latent-variable models
//! ([`simgen`]), support-recovery scoring ([`eval`]) and the `lvglasso`
//! command-line driver ([`cli`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod em;
pub mod error;
pub mod eval;
pub mod glasso;
pub mod io;
pub mod matrix;
pub mod simgen;

pub use em::{
    default_lambda_grid, e_step, extract_sl, fit, init_k, lambda_grid, lambda_path, m_step,
    observed_objective, EmConfig, EmFit, InitScheme, PrecisionPartition,
};
pub use error::{Error, Result};
pub use glasso::{
    glasso_masked, kkt_residual, lasso_cd, lvglasso_mask, masked_objective, neg_log_lik,
    soft_threshold, GlassoConfig, GlassoSolution, LassoSolution, PenaltyMask,
};
pub use matrix::SymMatrix;
