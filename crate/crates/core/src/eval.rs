//! Support-recovery scoring: confusion counts, ROC curves over a λ path and
//! selection of the estimate closest to the true graph.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::em::EmFit;
use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// Undirected graph on `p` vertices, stored as pairs `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn new(p: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = BTreeSet::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::input(format!("self-loop at vertex {a}")));
            }
            if a >= p || b >= p {
                return Err(Error::input(format!(
                    "edge ({a}, {b}) out of range for p = {p}"
                )));
            }
            edges.insert((a.min(b), a.max(b)));
        }
        Ok(EdgeSet { p, edges })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Number of vertex pairs, `p (p - 1) / 2`.
    pub fn pair_count(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }
}

/// Off-diagonal entries with `|S_ij| > zero_tol`.
pub fn support(s: &SymMatrix, zero_tol: f64) -> EdgeSet {
    let p = s.dim();
    let mut edges = BTreeSet::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if s[(i, j)].abs() > zero_tol {
                edges.insert((i, j));
            }
        }
    }
    EdgeSet { p, edges }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    /// Hamming distance between estimated and true edge sets.
    pub fn distance(&self) -> usize {
        self.fp + self.fn_
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(est: &EdgeSet, truth: &EdgeSet) -> Result<Confusion> {
    if est.p != truth.p {
        return Err(Error::input(format!(
            "edge sets have different vertex counts: {} vs {}",
            est.p, truth.p
        )));
    }
    let tp = est.edges.intersection(&truth.edges).count();
    let fp = est.len() - tp;
    let fn_ = truth.len() - tp;
    let tn = truth.pair_count() - tp - fp - fn_;
    Ok(Confusion { tp, fp, tn, fn_ })
}

/// One fitted estimate on a λ path.
pub trait PathEstimate {
    fn lambda(&self) -> f64;
    /// The sparse component whose off-diagonal support is scored.
    fn sparse_estimate(&self) -> &SymMatrix;
}

impl PathEstimate for EmFit {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn sparse_estimate(&self) -> &SymMatrix {
        &self.s_hat
    }
}

impl PathEstimate for (f64, SymMatrix) {
    fn lambda(&self) -> f64 {
        self.0
    }

    fn sparse_estimate(&self) -> &SymMatrix {
        &self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub lambda: f64,
    #[serde(flatten)]
    pub counts: Confusion,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocSeries {
    /// One point per λ, in path order.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn score_path<E: PathEstimate>(
    path: &[E],
    truth: &EdgeSet,
    zero_tol: f64,
) -> Result<Vec<RocPoint>> {
    if path.is_empty() {
        return Err(Error::input("empty path"));
    }
    path.iter()
        .map(|e| {
            let est = support(e.sparse_estimate(), zero_tol);
            let counts = confusion(&est, truth)?;
            Ok(RocPoint {
                lambda: e.lambda(),
                counts,
                tpr: counts.tpr(),
                fpr: counts.fpr(),
            })
        })
        .collect()
}

pub fn roc<E: PathEstimate>(path: &[E], truth: &EdgeSet, zero_tol: f64) -> Result<RocSeries> {
    let points = score_path(path, truth, zero_tol)?;
    let auc = auc(points.iter().map(|pt| (pt.fpr, pt.tpr)));
    Ok(RocSeries { points, auc })
}

/// Trapezoidal area under `(fpr, tpr)` points augmented with `(0, 0)` and
/// `(1, 1)`, sorted by false positive rate (ties by true positive rate).
pub fn auc(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.into_iter().collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Index of the path estimate with the smallest Hamming distance to the
/// truth; ties go to the larger λ.
pub fn closest_to_truth<E: PathEstimate>(
    path: &[E],
    truth: &EdgeSet,
    zero_tol: f64,
) -> Result<usize> {
    let points = score_path(path, truth, zero_tol)?;
    let mut best = 0;
    for (i, pt) in points.iter().enumerate().skip(1) {
        let d = pt.counts.distance();
        let bd = points[best].counts.distance();
        if d < bd || (d == bd && pt.lambda > points[best].lambda) {
            best = i;
        }
    }
    Ok(best)
}
