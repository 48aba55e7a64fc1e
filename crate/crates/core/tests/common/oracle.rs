//! From-scratch reference implementations used only by tests.
//!
//! Nothing here shares code with the library's clustering path: every
//! inter-cluster distance is recomputed from the raw pairwise values at
//! every step.

#![allow(dead_code)]

use classroom_core::clustering::{DissimilarityMatrix, Linkage};

/// One merge as seen by the oracle: the canonical (smallest) member of each
/// side, smaller first, plus height and merged size.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMerge {
    pub lo: usize,
    pub hi: usize,
    pub height: f64,
    pub size: usize,
}

/// Gower computed cell by cell from the textbook definition.
pub fn gower(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let mut ranges = vec![0.0; p];
    for j in 0..p {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let max = col.iter().cloned().fold(f64::MIN, f64::max);
        let min = col.iter().cloned().fold(f64::MAX, f64::min);
        ranges[j] = max - min;
    }
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if i == k {
                continue;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..p {
                if ranges[j] > 0.0 {
                    num += (rows[i][j] - rows[k][j]).abs() / ranges[j];
                    den += 1.0;
                }
            }
            d[i][k] = num / den;
        }
    }
    d
}

fn cluster_distance(d: &DissimilarityMatrix, a: &[usize], b: &[usize], linkage: Linkage) -> f64 {
    match linkage {
        Linkage::Single => {
            let mut best = f64::INFINITY;
            for &i in a {
                for &j in b {
                    best = best.min(d.get(i, j));
                }
            }
            best
        }
        Linkage::Complete => {
            let mut best = f64::NEG_INFINITY;
            for &i in a {
                for &j in b {
                    best = best.max(d.get(i, j));
                }
            }
            best
        }
        Linkage::Average => {
            let mut sum = 0.0;
            for &i in a {
                for &j in b {
                    sum += d.get(i, j);
                }
            }
            sum / (a.len() * b.len()) as f64
        }
        Linkage::Ward => {
            // Squared Ward criterion written in terms of pairwise squared
            // dissimilarities: 2·|A||B|/(|A|+|B|) times the generalized squared
            // centroid distance.
            let sq = |xs: &[usize], ys: &[usize]| {
                let mut s = 0.0;
                for &i in xs {
                    for &j in ys {
                        s += d.get(i, j) * d.get(i, j);
                    }
                }
                s
            };
            let (na, nb) = (a.len() as f64, b.len() as f64);
            let between = sq(a, b) / (na * nb);
            let within_a = sq(a, a) / (2.0 * na * na);
            let within_b = sq(b, b) / (2.0 * nb * nb);
            2.0 * na * nb / (na + nb) * (between - within_a - within_b)
        }
    }
}

/// Naive O(n³)-per-step agglomeration.
pub fn naive_agnes(d: &DissimilarityMatrix, linkage: Linkage) -> Vec<OracleMerge> {
    let n = d.n();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        clusters.sort_by_key(|c| c[0]);
        let mut best = (f64::INFINITY, 0, 0);
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let v = cluster_distance(d, &clusters[x], &clusters[y], linkage);
                if v < best.0 {
                    best = (v, x, y);
                }
            }
        }
        let (v, x, y) = best;
        let height = if linkage == Linkage::Ward { v.max(0.0).sqrt() } else { v };
        let b = clusters.remove(y);
        let a = &mut clusters[x];
        out.push(OracleMerge {
            lo: a[0],
            hi: b[0],
            height,
            size: a.len() + b.len(),
        });
        a.extend(b);
        a.sort_unstable();
    }
    out
}

/// Agglomerative coefficient straight from its definition.
pub fn naive_ac(n: usize, merges: &[OracleMerge]) -> f64 {
    let final_h = merges.last().map_or(0.0, |m| m.height);
    if final_h <= 0.0 {
        return 0.0;
    }
    let mut first = vec![None; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for m in merges {
        let ia = members.iter().position(|c| c[0] == m.lo).unwrap();
        let ib = members.iter().position(|c| c[0] == m.hi).unwrap();
        for &i in members[ia].iter().chain(members[ib].iter()) {
            if first[i].is_none() {
                first[i] = Some(m.height);
            }
        }
        let b = members[ib].clone();
        members[ia].extend(b);
        members[ia].sort_unstable();
        members.remove(ib);
    }
    first.iter().map(|h| 1.0 - h.unwrap() / final_h).sum::<f64>() / n as f64
}

/// Kruskal over all pairs; returns the sorted tree edge weights.
pub fn mst_weights(d: &DissimilarityMatrix) -> Vec<f64> {
    let n = d.n();
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((d.get(i, j), i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut comp: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for (w, i, j) in edges {
        let (ci, cj) = (comp[i], comp[j]);
        if ci != cj {
            for c in comp.iter_mut() {
                if *c == cj {
                    *c = ci;
                }
            }
            out.push(w);
        }
    }
    out
}

/// Mean silhouette by brute force over the definition.
pub fn naive_silhouette(d: &DissimilarityMatrix, labels: &[usize]) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for i in 0..n {
        let same: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if same.is_empty() {
            continue;
        }
        let a = same.iter().map(|&j| d.get(i, j)).sum::<f64>() / same.len() as f64;
        let mut others: Vec<usize> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
        others.sort_unstable();
        others.dedup();
        let b = others
            .iter()
            .map(|&c| {
                let m: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                m.iter().map(|&j| d.get(i, j)).sum::<f64>() / m.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let den = a.max(b);
        if den > 0.0 {
            total += (b - a) / den;
        }
    }
    total / n as f64
}

/// Exact-arithmetic oracle for integer feature matrices.
///
/// Gower distances, average-linkage means and Ward criteria are all
/// rational for integer input, so ties are decided exactly and the
/// lexicographic tie rule can be checked without rounding noise.
pub mod exact {
    use classroom_core::clustering::Linkage;
    use num_rational::Ratio;

    pub type Q = Ratio<i128>;

    fn q(v: i128) -> Q {
        Q::from_integer(v)
    }

    pub fn to_f64(v: &Q) -> f64 {
        *v.numer() as f64 / *v.denom() as f64
    }

    /// `None` when no column varies (and n ≥ 2).
    pub fn gower(rows: &[Vec<i64>]) -> Option<Vec<Vec<Q>>> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let ranges: Vec<i128> = (0..p)
            .map(|j| {
                let max = rows.iter().map(|r| r[j]).max().unwrap();
                let min = rows.iter().map(|r| r[j]).min().unwrap();
                (max - min) as i128
            })
            .collect();
        let usable = ranges.iter().filter(|&&r| r > 0).count() as i128;
        if usable == 0 && n >= 2 {
            return None;
        }
        let mut d = vec![vec![q(0); n]; n];
        for i in 0..n {
            for k in 0..n {
                if i == k {
                    continue;
                }
                let mut sum = q(0);
                for j in 0..p {
                    if ranges[j] > 0 {
                        sum += Q::new((rows[i][j] - rows[k][j]).abs() as i128, ranges[j]);
                    }
                }
                d[i][k] = sum / q(usable);
            }
        }
        Some(d)
    }

    /// For Ward this is the squared criterion.
    fn cluster_distance(d: &[Vec<Q>], a: &[usize], b: &[usize], linkage: Linkage) -> Q {
        let pairs = || a.iter().flat_map(move |&i| b.iter().map(move |&j| d[i][j]));
        match linkage {
            Linkage::Single => pairs().min().unwrap(),
            Linkage::Complete => pairs().max().unwrap(),
            Linkage::Average => pairs().fold(q(0), |s, v| s + v) / q((a.len() * b.len()) as i128),
            Linkage::Ward => {
                let sq = |xs: &[usize], ys: &[usize]| {
                    let mut s = q(0);
                    for &i in xs {
                        for &j in ys {
                            s += d[i][j] * d[i][j];
                        }
                    }
                    s
                };
                let (na, nb) = (q(a.len() as i128), q(b.len() as i128));
                let between = sq(a, b) / (na * nb);
                let within_a = sq(a, a) / (q(2) * na * na);
                let within_b = sq(b, b) / (q(2) * nb * nb);
                q(2) * na * nb / (na + nb) * (between - within_a - within_b)
            }
        }
    }

    /// `(smaller canonical id, larger canonical id, height, size)` per step.
    pub fn agnes(d: &[Vec<Q>], linkage: Linkage) -> Vec<(usize, usize, f64, usize)> {
        let n = d.len();
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut out = Vec::new();
        while clusters.len() > 1 {
            clusters.sort_by_key(|c| c[0]);
            let mut best: Option<(Q, usize, usize)> = None;
            for x in 0..clusters.len() {
                for y in x + 1..clusters.len() {
                    let v = cluster_distance(d, &clusters[x], &clusters[y], linkage);
                    if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                        best = Some((v, x, y));
                    }
                }
            }
            let (v, x, y) = best.unwrap();
            let h = to_f64(&v);
            let height = if linkage == Linkage::Ward { h.max(0.0).sqrt() } else { h };
            let b = clusters.remove(y);
            let a = &mut clusters[x];
            out.push((a[0], b[0], height, a.len() + b.len()));
            a.extend(b);
            a.sort_unstable();
        }
        out
    }
}
