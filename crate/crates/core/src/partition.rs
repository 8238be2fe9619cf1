//! Partitions of `{0, …, p-1}` into non-empty clusters.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io;

/// A partition of `p` indices into `K` non-empty groups.
///
/// Groups are stored in canonical order: each group is sorted, and groups are
/// ordered by their smallest member. Cluster `k` therefore always contains the
/// smallest index not covered by clusters `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    groups: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

impl ClusterPartition {
    /// Builds from per-index labels. Labels may be arbitrary; they are
    /// renumbered canonically.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("partition of zero indices".into()));
        }
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut canon = Vec::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            let k = *remap.entry(l).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[k].push(i);
            canon.push(k);
        }
        Ok(ClusterPartition {
            groups,
            labels: canon,
        })
    }

    /// Builds from explicit groups, which must be disjoint, non-empty and cover `0..p`.
    pub fn from_groups(p: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; p];
        for (k, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidParameter(format!("group {k} is empty")));
            }
            for &i in g {
                if i >= p {
                    return Err(Error::InvalidParameter(format!(
                        "index {i} out of range for p = {p}"
                    )));
                }
                if labels[i] != usize::MAX {
                    return Err(Error::InvalidParameter(format!(
                        "index {i} appears in more than one group"
                    )));
                }
                labels[i] = k;
            }
        }
        if let Some(i) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::InvalidParameter(format!("index {i} not covered")));
        }
        Self::from_labels(&labels)
    }

    /// Consecutive blocks of the given sizes: the first `sizes[0]` indices form
    /// cluster 0, and so on.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter("cluster sizes must be positive".into()));
        }
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        Self::from_labels(&labels)
    }

    pub fn singletons(p: usize) -> Self {
        Self::from_labels(&(0..p).collect::<Vec<_>>()).expect("p > 0")
    }

    /// Number of indices p.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of clusters K.
    pub fn num_clusters(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Cluster index of every series.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// The p×K 0/1 membership matrix.
    pub fn membership(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.len(), self.num_clusters());
        for (i, &k) in self.labels.iter().enumerate() {
            a[(i, k)] = 1.0;
        }
        a
    }

    /// Applies `perm` (new index `i` holds old index `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let labels: Vec<usize> = perm.iter().map(|&old| self.labels[old]).collect();
        Self::from_labels(&labels).expect("non-empty")
    }

    /// Two-column CSV: `name,cluster_id` with ids in `1..=K`.
    pub fn to_csv(&self, names: &[String]) -> Result<String> {
        if names.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "partition names",
                expected: self.len(),
                actual: names.len(),
            });
        }
        let mut out = String::from("name,cluster_id\n");
        for (name, k) in names.iter().zip(&self.labels) {
            out.push_str(&format!("{name},{}\n", k + 1));
        }
        Ok(out)
    }

    pub fn save_csv(&self, path: &Path, names: &[String]) -> Result<()> {
        io::write_atomic(path, self.to_csv(names)?.as_bytes())
    }

    /// Reads the two-column format written by [`ClusterPartition::save_csv`].
    pub fn load_csv(path: &Path) -> Result<(Vec<String>, Self)> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidPanel(format!("{other:?}")),
        })?;
        let mut names = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: i + 2,
                col: 0,
                msg: e.to_string(),
            })?;
            let id: usize = rec
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .filter(|&k| k >= 1)
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 2,
                    col: 2,
                    msg: "cluster_id must be a positive integer".into(),
                })?;
            names.push(rec[0].to_string());
            labels.push(id - 1);
        }
        Ok((names, Self::from_labels(&labels)?))
    }
}

/// Adjusted Rand index between two partitions of the same index set, in the
/// Hubert–Arabie form. Identical partitions score 1, including the case where
/// both are all singletons or both are a single cluster (0/0 is taken as 1).
pub fn adjusted_rand_index(a: &ClusterPartition, b: &ClusterPartition) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "partition sizes",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let choose2 = |n: usize| (n * n.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *table.entry((x, y)).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sum_a: f64 = a.sizes().into_iter().map(choose2).sum();
    let sum_b: f64 = b.sizes().into_iter().map(choose2).sum();
    let total = choose2(a.len());
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}
