use serde::Serialize;

use super::{ClusteringError, DissimilarityMatrix, MergeTrace};

/// Flat partition of observations. Cluster indices run `0..k` in order of
/// each cluster's smallest observation index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub member_of: Vec<usize>,
}

impl ClusterAssignment {
    /// Relabels arbitrary cluster ids canonically.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let member_of = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        ClusterAssignment {
            k: map.len(),
            member_of,
        }
    }

    pub fn n(&self) -> usize {
        self.member_of.len()
    }

    /// Observation indices per cluster, ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.member_of.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Undoes the last `k − 1` merges of `trace`.
pub fn cut_tree(trace: &MergeTrace, k: usize) -> Result<ClusterAssignment, ClusteringError> {
    let n = trace.n();
    if k < 1 || k > n {
        return Err(ClusteringError::InvalidK { k, n });
    }
    // Reference r < n is an observation; n + t is the cluster from step t.
    // Each merged cluster is represented by its left child's representative.
    let mut parent: Vec<usize> = (0..n).collect();
    let mut rep: Vec<usize> = (0..n).collect();
    for m in &trace.steps()[..n - k] {
        let a = find(&mut parent, rep[m.left]);
        let b = find(&mut parent, rep[m.right]);
        parent[b] = a;
        rep.push(a);
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    Ok(ClusterAssignment::from_labels(&roots))
}

/// Mean silhouette width. Observations in singleton clusters score 0, as do
/// observations whose `a` and `b` are both zero.
pub fn silhouette_width(d: &DissimilarityMatrix, assignment: &ClusterAssignment) -> Result<f64, ClusteringError> {
    let n = d.n();
    if assignment.n() != n {
        return Err(ClusteringError::Shape(format!(
            "assignment covers {} observations, matrix has {n}",
            assignment.n()
        )));
    }
    let k = assignment.k;
    if k < 2 || k + 1 > n {
        return Err(ClusteringError::InvalidK { k, n });
    }
    let clusters = assignment.clusters();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = assignment.member_of[i];
        if clusters[own].len() == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, &c) in assignment.member_of.iter().enumerate() {
            sums[c] += d.get(i, j);
        }
        let a = sums[own] / (clusters[own].len() - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / clusters[c].len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KChoice {
    pub k: usize,
    /// Mean silhouette at the chosen `k`; absent when no k could be scored.
    pub silhouette: Option<f64>,
    /// `(k, mean silhouette)` for every evaluated k.
    pub scores: Vec<(usize, f64)>,
    /// Set when fewer than three observations made scoring impossible.
    pub degenerate: bool,
}

/// Default search range: `[2, min(8, n − 1)]`.
pub fn default_k_range(n: usize) -> (usize, usize) {
    (2, 8.min(n.saturating_sub(1)))
}

/// Picks the number of flat clusters maximizing mean silhouette over
/// `range` (inclusive, clamped to `[2, n − 1]`). Ties go to the smaller k.
pub fn choose_k(
    trace: &MergeTrace,
    d: &DissimilarityMatrix,
    range: Option<(usize, usize)>,
) -> Result<KChoice, ClusteringError> {
    let n = trace.n();
    if d.n() != n {
        return Err(ClusteringError::Shape(format!(
            "trace over {n} observations, matrix over {}",
            d.n()
        )));
    }
    if n < 3 {
        return Ok(KChoice {
            k: n.min(2),
            silhouette: None,
            scores: Vec::new(),
            degenerate: true,
        });
    }
    let (lo, hi) = range.unwrap_or_else(|| default_k_range(n));
    let (lo, hi) = (lo.max(2), hi.min(n - 1));
    let mut scores = Vec::new();
    for k in lo..=hi {
        let s = silhouette_width(d, &cut_tree(trace, k)?)?;
        scores.push((k, s));
    }
    let best = scores
        .iter()
        .copied()
        .reduce(|best, cur| if cur.1 > best.1 { cur } else { best });
    Ok(match best {
        Some((k, s)) => KChoice {
            k,
            silhouette: Some(s),
            scores,
            degenerate: false,
        },
        None => KChoice {
            k: 2,
            silhouette: None,
            scores,
            degenerate: false,
        },
    })
}
