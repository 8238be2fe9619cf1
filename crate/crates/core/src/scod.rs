//! Latent variable clustering of factor residuals.
//!
//! Two series belong to the same latent cluster exactly when the difference of
//! their residuals is uncorrelated with every other residual series. The
//! scaled covariance difference (sCOD) measures the largest such correlation;
//! pairs with small sCOD are merged by single-linkage agglomeration up to a
//! data-driven threshold picked at the largest ratio gap in the sorted values.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{uncentered_second_moment, SymmetricMatrix};
use crate::partition::ClusterPartition;

/// Default truncation fraction for the ratio search.
pub const DEFAULT_CQ: f64 = 0.75;

/// Floor added to `delta` so the ratio search never divides zero by zero.
pub const DELTA_FLOOR: f64 = 1e-12;

/// Σ̌_u = T⁻¹ Σ_t û_t û_tᵀ (uncentered).
pub fn residual_cov(residuals: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    if residuals.nrows() == 0 {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    Ok(uncentered_second_moment(residuals))
}

/// Symmetric p×p matrix of empirical sCOD values with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScodMatrix(DMatrix<f64>);

impl ScodMatrix {
    /// Wraps an arbitrary symmetric dissimilarity matrix (used for testing the
    /// clustering step in isolation). The diagonal is forced to zero.
    pub fn from_dense(mut d: DMatrix<f64>) -> Result<Self> {
        if !d.is_square() {
            return Err(Error::DimensionMismatch {
                what: "distance matrix",
                expected: d.nrows(),
                actual: d.ncols(),
            });
        }
        let p = d.nrows();
        for i in 0..p {
            d[(i, i)] = 0.0;
            for j in 0..i {
                if d[(i, j)] != d[(j, i)] {
                    return Err(Error::InvalidParameter(format!(
                        "distance matrix not symmetric at ({j}, {i})"
                    )));
                }
            }
        }
        Ok(ScodMatrix(d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Upper-triangle values `D_ij`, `i < j`, in row-major order.
    pub fn pair_values(&self) -> Vec<f64> {
        let p = self.dim();
        let mut v = Vec::with_capacity(p * p.saturating_sub(1) / 2);
        for i in 0..p {
            for j in i + 1..p {
                v.push(self.0[(i, j)]);
            }
        }
        v
    }
}

/// D̂_ij = max_{l≠i,j} |Σ_il − Σ_jl| / sqrt((Σ_ii + Σ_jj − 2Σ_ij) Σ_ll).
pub fn scod_matrix(sigma_u: &SymmetricMatrix) -> Result<ScodMatrix> {
    let p = sigma_u.dim();
    if p < 3 {
        return Err(Error::InvalidParameter(format!(
            "sCOD needs at least 3 series, got {p}"
        )));
    }
    let s = sigma_u.as_matrix();
    if let Some(l) = (0..p).find(|&l| !(s[(l, l)] > 0.0)) {
        let mut others = (0..p).filter(|&x| x != l);
        let (i, j) = (others.next().unwrap(), others.next().unwrap());
        return Err(Error::DegenerateScod { i, j, l });
    }
    let inv_sd: Vec<f64> = (0..p).map(|l| 1.0 / s[(l, l)].sqrt()).collect();

    // Row i holds D_ij for j > i.
    let rows: Vec<Result<Vec<f64>>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::with_capacity(p - i - 1);
            for j in i + 1..p {
                let vd = s[(i, i)] + s[(j, j)] - 2.0 * s[(i, j)];
                if !(vd > 0.0) {
                    let l = (0..p).find(|&l| l != i && l != j).expect("p >= 3");
                    return Err(Error::DegenerateScod { i, j, l });
                }
                let mut best = 0.0f64;
                for l in 0..p {
                    if l == i || l == j {
                        continue;
                    }
                    let v = (s[(i, l)] - s[(j, l)]).abs() * inv_sd[l];
                    if v > best {
                        best = v;
                    }
                }
                out.push(best / vd.sqrt());
            }
            Ok(out)
        })
        .collect();

    let mut d = DMatrix::zeros(p, p);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row?.into_iter().enumerate() {
            let j = i + 1 + off;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(ScodMatrix(d))
}

/// Outcome of the ratio-based threshold search.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSelection {
    /// All `Q = p(p-1)/2` pair values in descending order.
    pub sorted_values: Vec<f64>,
    /// Chosen rank, 1-based: `gamma == sorted_values[q_hat - 1]`.
    pub q_hat: usize,
    pub gamma: f64,
    /// The `delta` that was requested (before the floor is applied).
    pub delta: f64,
    pub c_q: f64,
}

/// Picks q̂ = argmax_m (D_(m) + δ)/(D_(m+1) + δ) over `m ≤ ⌈c_q·Q⌉` (and
/// `m ≤ Q-1`), with δ floored at [`DELTA_FLOOR`]; ties go to the smallest m.
pub fn select_threshold(dists: &ScodMatrix, delta: f64, c_q: f64) -> Result<ThresholdSelection> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "delta must be finite and nonnegative, got {delta}"
        )));
    }
    if !(c_q > 0.0 && c_q <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "c_q must lie in (0, 1], got {c_q}"
        )));
    }
    let mut sorted = dists.pair_values();
    if sorted.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "threshold selection needs at least 2 pair values, got {}",
            sorted.len()
        )));
    }
    sorted.sort_by(|a, b| b.total_cmp(a));
    select_from_sorted(sorted, delta, c_q)
}

pub(crate) fn select_from_sorted(
    sorted: Vec<f64>,
    delta: f64,
    c_q: f64,
) -> Result<ThresholdSelection> {
    let q = sorted.len();
    let d = delta.max(DELTA_FLOOR);
    let upper = ((c_q * q as f64).ceil() as usize).clamp(1, q - 1);
    let mut q_hat = 1;
    let mut best = f64::NEG_INFINITY;
    for m in 1..=upper {
        let ratio = (sorted[m - 1] + d) / (sorted[m] + d);
        if ratio > best {
            best = ratio;
            q_hat = m;
        }
    }
    Ok(ThresholdSelection {
        gamma: sorted[q_hat - 1],
        sorted_values: sorted,
        q_hat,
        delta,
        c_q,
    })
}

/// One agglomeration step: clusters with smallest members `left < right`
/// were joined at single-linkage distance `distance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
}

/// Single-linkage agglomeration: repeatedly merges the two groups with the
/// smallest between-group minimum distance while it is strictly below `gamma`.
pub fn cluster(dists: &ScodMatrix, gamma: f64) -> Result<ClusterPartition> {
    Ok(cluster_with_merges(dists, gamma)?.0)
}

/// [`cluster`] plus the merge history, in merge order.
///
/// Uses Kruskal's ordering of the pair list, which produces the same merges as
/// the group-pair argmin formulation: the next single-linkage merge is always
/// the cheapest remaining edge between two distinct groups. Equal distances
/// are processed in lexicographic `(i, j)` order.
pub fn cluster_with_merges(dists: &ScodMatrix, gamma: f64) -> Result<(ClusterPartition, Vec<Merge>)> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let p = dists.dim();
    if p == 0 {
        return Err(Error::InvalidParameter("empty distance matrix".into()));
    }
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            let v = dists.get(i, j);
            if v < gamma {
                edges.push((v, i, j));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut uf = UnionFind::new(p);
    let mut merges = Vec::new();
    for (v, i, j) in edges {
        let (ri, rj) = (uf.find(i), uf.find(j));
        if ri != rj {
            let (a, b) = (uf.min_member[ri], uf.min_member[rj]);
            uf.union(ri, rj);
            merges.push(Merge {
                left: a.min(b),
                right: a.max(b),
                distance: v,
            });
            if merges.len() == p - 1 {
                break;
            }
        }
    }
    let labels: Vec<usize> = (0..p).map(|i| uf.find(i)).collect();
    Ok((ClusterPartition::from_labels(&labels)?, merges))
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    min_member: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
            min_member: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (hi, lo) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        self.parent[lo] = hi;
        if self.rank[hi] == self.rank[lo] {
            self.rank[hi] += 1;
        }
        self.min_member[hi] = self.min_member[hi].min(self.min_member[lo]);
    }
}

/// Everything produced by the clustering step.
#[derive(Debug, Clone)]
pub struct ClusteringOutcome {
    pub residual_cov: SymmetricMatrix,
    pub scod: ScodMatrix,
    pub selection: ThresholdSelection,
    pub partition: ClusterPartition,
    /// p×K̂ membership matrix of `partition`.
    pub membership: DMatrix<f64>,
}

/// residual_cov → scod_matrix → select_threshold → cluster.
pub fn run_clustering_pipeline(
    residuals: &DMatrix<f64>,
    delta: f64,
    c_q: f64,
) -> Result<ClusteringOutcome> {
    let residual_cov = residual_cov(residuals)?;
    let scod = scod_matrix(&residual_cov)?;
    let selection = select_threshold(&scod, delta, c_q)?;
    // A zero threshold means every remaining pair sits at distance zero; keep
    // them apart, which is what the strict merge rule does for any gamma <= 0.
    let partition = if selection.gamma > 0.0 {
        cluster(&scod, selection.gamma)?
    } else {
        ClusterPartition::singletons(scod.dim())
    };
    let membership = partition.membership();
    Ok(ClusteringOutcome {
        residual_cov,
        scod,
        selection,
        partition,
        membership,
    })
}
