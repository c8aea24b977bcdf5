//! Synthetic latent-variable graphical models.
//!
//! Observed variables sit at uniform random locations in the unit square and
//! are joined by a random geometric graph with a degree cap of four. Every
//! latent variable is connected to every observed one. All randomness comes
//! from explicit seeds.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

pub const MAX_DEGREE: usize = 4;
/// Precision entry on every observed-observed edge.
pub const EDGE_VALUE: f64 = 0.2;
/// Latent-observed precision entries are drawn from `(0, LATENT_MAX)`.
pub const LATENT_MAX: f64 = 0.12;
const DIAG_START: f64 = 1.0;
const DIAG_STEP: f64 = 0.5;
const MAX_INFLATIONS: usize = 20;

const GRAPH_STREAM: u64 = 0;
const PRECISION_STREAM: u64 = 1;

/// Observed-index pairs `(i, j)` with `i < j`, sorted.
pub type EdgeList = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthModel {
    pub p: usize,
    pub h: usize,
    pub locations: Vec<(f64, f64)>,
    pub true_edges: EdgeList,
    pub k_true: SymMatrix,
    pub diag_value: f64,
    pub seed: u64,
}

impl GroundTruthModel {
    /// Observed block of the true precision; its off-diagonal support is `true_edges`.
    pub fn true_s(&self) -> SymMatrix {
        self.k_true.principal(&(0..self.p).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n x p` observed samples.
    pub x: DMatrix<f64>,
    pub sigma_o_n: SymMatrix,
    pub n: usize,
    pub source_seed: u64,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `2 φ(d √p)` with `φ` the standard normal density.
pub fn edge_probability(distance: f64, p: usize) -> f64 {
    let z = distance * (p as f64).sqrt();
    2.0 * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Draws `p` locations and the degree-capped geometric graph among them.
///
/// Pairs are visited in lexicographic order. A pair whose endpoints already
/// include a vertex of degree four is skipped without consuming a draw.
pub fn generate_graph(p: usize, seed: u64) -> Result<(Vec<(f64, f64)>, EdgeList)> {
    if p < 2 {
        return Err(Error::input(format!("graph needs p >= 2, got {p}")));
    }
    let mut rng = rng_for(seed, GRAPH_STREAM);
    let locations: Vec<(f64, f64)> = (0..p)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let edges = geometric_edges(&locations, &mut rng);
    Ok((locations, edges))
}

fn geometric_edges(locations: &[(f64, f64)], rng: &mut impl Rng) -> EdgeList {
    let p = locations.len();
    let mut degree = vec![0usize; p];
    let mut edges = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if degree[i] >= MAX_DEGREE || degree[j] >= MAX_DEGREE {
                continue;
            }
            let (xi, yi) = locations[i];
            let (xj, yj) = locations[j];
            let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            if rng.random::<f64>() < edge_probability(d, p) {
                edges.push((i, j));
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    edges
}

/// Fills the `(p + h)`-dimensional true precision for a given edge set.
pub fn build_precision(
    true_edges: &[(usize, usize)],
    p: usize,
    h: usize,
    seed: u64,
) -> Result<GroundTruthModel> {
    let n = p + h;
    if p == 0 {
        return Err(Error::input("p must be at least 1"));
    }
    let mut off = DMatrix::zeros(n, n);
    for &(i, j) in true_edges {
        if i == j || i >= p || j >= p {
            return Err(Error::input(format!(
                "invalid observed edge ({i}, {j}) for p = {p}"
            )));
        }
        off[(i, j)] = EDGE_VALUE;
        off[(j, i)] = EDGE_VALUE;
    }
    let mut rng = rng_for(seed, PRECISION_STREAM);
    for latent in p..n {
        for obs in 0..p {
            let v = loop {
                let v = rng.random_range(0.0..LATENT_MAX);
                if v > 0.0 {
                    break v;
                }
            };
            off[(latent, obs)] = v;
            off[(obs, latent)] = v;
        }
    }

    let mut diag_value = DIAG_START;
    for _ in 0..=MAX_INFLATIONS {
        let mut m = off.clone();
        m.fill_diagonal(diag_value);
        let k = SymMatrix::new(m)?;
        if k.is_positive_definite() {
            let mut edges = true_edges.to_vec();
            for e in edges.iter_mut() {
                if e.0 > e.1 {
                    *e = (e.1, e.0);
                }
            }
            edges.sort_unstable();
            edges.dedup();
            return Ok(GroundTruthModel {
                p,
                h,
                locations: Vec::new(),
                true_edges: edges,
                k_true: k,
                diag_value,
                seed,
            });
        }
        diag_value += DIAG_STEP;
    }
    Err(Error::Numerical(format!(
        "true precision not positive definite after {MAX_INFLATIONS} diagonal inflations"
    )))
}

/// Graph plus precision from a single seed.
pub fn generate_model(p: usize, h: usize, seed: u64) -> Result<GroundTruthModel> {
    let (locations, edges) = generate_graph(p, seed)?;
    let mut model = build_precision(&edges, p, h, seed)?;
    model.locations = locations;
    Ok(model)
}

/// Draws `n` samples from `N(0, K_true⁻¹)` and keeps the observed coordinates.
pub fn sample_data(model: &GroundTruthModel, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::input(format!("need at least 2 samples, got {n}")));
    }
    let dim = model.p + model.h;
    let covariance = model.k_true.inverse()?;
    let chol = covariance.cholesky()?;
    let lower = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, model.p);
    let mut z = vec![0.0; dim];
    for row in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for col in 0..model.p {
            x[(row, col)] = (0..=col).map(|k| lower[(col, k)] * z[k]).sum();
        }
    }
    let sigma_o_n = sample_covariance(&x)?;
    Ok(Dataset {
        x,
        sigma_o_n,
        n,
        source_seed: seed,
    })
}

/// `(1/n) Xcᵀ Xc` with `Xc` the column-centered data.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<SymMatrix> {
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::input("empty data matrix"));
    }
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let cov = centered.transpose() * &centered / n as f64;
    SymMatrix::symmetrize(&cov)
}
