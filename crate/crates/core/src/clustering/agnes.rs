use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ClusteringError, DissimilarityMatrix};

/// Inter-cluster distance rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    Average,
    Ward,
}

impl Linkage {
    pub const ALL: [Linkage; 4] = [Linkage::Single, Linkage::Complete, Linkage::Average, Linkage::Ward];

    /// Tie-break rank when agglomerative coefficients are equal; higher wins.
    fn preference(self) -> u8 {
        match self {
            Linkage::Ward => 3,
            Linkage::Complete => 2,
            Linkage::Average => 1,
            Linkage::Single => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
            Linkage::Ward => "ward",
        }
    }

    /// Lance–Williams coefficients for merging clusters `i` and `j` (sizes
    /// `ni`, `nj`) and measuring the result against cluster `k`.
    ///
    /// Ward's coefficients apply to squared dissimilarities.
    pub fn coefficients(self, ni: usize, nj: usize, nk: usize) -> LanceWilliams {
        let (ni, nj, nk) = (ni as f64, nj as f64, nk as f64);
        match self {
            Linkage::Single => LanceWilliams {
                alpha_i: 0.5,
                alpha_j: 0.5,
                beta: 0.0,
                gamma: -0.5,
            },
            Linkage::Complete => LanceWilliams {
                alpha_i: 0.5,
                alpha_j: 0.5,
                beta: 0.0,
                gamma: 0.5,
            },
            Linkage::Average => LanceWilliams {
                alpha_i: ni / (ni + nj),
                alpha_j: nj / (ni + nj),
                beta: 0.0,
                gamma: 0.0,
            },
            Linkage::Ward => {
                let total = ni + nj + nk;
                LanceWilliams {
                    alpha_i: (ni + nk) / total,
                    alpha_j: (nj + nk) / total,
                    beta: -nk / total,
                    gamma: 0.0,
                }
            }
        }
    }

    /// Distance from the union of `i` and `j` to `k`.
    ///
    /// Single and complete use `min`/`max`, which is what their coefficients
    /// reduce to, so the result is always one of the original entries with
    /// no rounding.
    #[inline]
    fn update(self, d_ik: f64, d_jk: f64, d_ij: f64, ni: usize, nj: usize, nk: usize) -> f64 {
        match self {
            Linkage::Single => d_ik.min(d_jk),
            Linkage::Complete => d_ik.max(d_jk),
            Linkage::Average => {
                let (ni, nj) = (ni as f64, nj as f64);
                (ni * d_ik + nj * d_jk) / (ni + nj)
            }
            Linkage::Ward => {
                let (ni, nj, nk) = (ni as f64, nj as f64, nk as f64);
                ((ni + nk) * d_ik + (nj + nk) * d_jk - nk * d_ij) / (ni + nj + nk)
            }
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Linkage {
    type Err = ClusteringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            "ward" => Ok(Linkage::Ward),
            other => Err(ClusteringError::UnknownLinkage(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanceWilliams {
    pub alpha_i: f64,
    pub alpha_j: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LanceWilliams {
    pub fn apply(&self, d_ik: f64, d_jk: f64, d_ij: f64) -> f64 {
        self.alpha_i * d_ik + self.alpha_j * d_jk + self.beta * d_ij + self.gamma * (d_ik - d_jk).abs()
    }
}

/// One agglomeration step. Cluster references `0..n` are observations and
/// `n + t` is the cluster created at step `t`. `left` always holds the
/// smaller original index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

impl Serialize for Merge {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.left, self.right, self.height, self.size).serialize(serializer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeTrace {
    n: usize,
    steps: Vec<Merge>,
}

impl MergeTrace {
    /// Checks that `steps` is a complete agglomeration of `n` observations:
    /// n − 1 steps, every reference used exactly once and only after it
    /// exists, sizes consistent and heights finite and non-negative.
    pub fn new(n: usize, steps: Vec<Merge>) -> Result<Self, ClusteringError> {
        if n == 0 {
            return Err(ClusteringError::Empty);
        }
        if steps.len() != n - 1 {
            return Err(ClusteringError::InvalidTrace(format!(
                "{} steps for {n} observations",
                steps.len()
            )));
        }
        let mut sizes = vec![1usize; n];
        sizes.reserve(n - 1);
        let mut used = vec![false; 2 * n - 1];
        for (t, m) in steps.iter().enumerate() {
            let limit = n + t;
            for r in [m.left, m.right] {
                if r >= limit {
                    return Err(ClusteringError::InvalidTrace(format!(
                        "step {t} references cluster {r} before it exists"
                    )));
                }
                if used[r] {
                    return Err(ClusteringError::InvalidTrace(format!("cluster {r} merged twice")));
                }
                used[r] = true;
            }
            if m.left == m.right {
                return Err(ClusteringError::InvalidTrace(format!(
                    "step {t} merges {} with itself",
                    m.left
                )));
            }
            if !m.height.is_finite() || m.height < 0.0 {
                return Err(ClusteringError::InvalidTrace(format!(
                    "step {t} has height {}",
                    m.height
                )));
            }
            let size = sizes[m.left] + sizes[m.right];
            if size != m.size {
                return Err(ClusteringError::InvalidTrace(format!(
                    "step {t} reports size {}, members add to {size}",
                    m.size
                )));
            }
            sizes.push(size);
        }
        Ok(MergeTrace { n, steps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> &[Merge] {
        &self.steps
    }

    pub fn heights(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|m| m.height)
    }

    /// Original observations under each cluster reference, `2n − 1` entries,
    /// each sorted ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
        for m in &self.steps {
            let mut merged = out[m.left].clone();
            merged.extend_from_slice(&out[m.right]);
            merged.sort_unstable();
            out.push(merged);
        }
        out
    }
}

/// Agglomerative coefficient plus a flag for the all-identical case where
/// the final merge height is zero and the ratio is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgglomerativeCoefficient {
    pub value: f64,
    pub degenerate: bool,
}

/// Mean over observations of `1 - h_first(i) / h_final`, where `h_first(i)`
/// is the height at which observation `i` first joins a cluster.
pub fn agglomerative_coefficient(trace: &MergeTrace) -> AgglomerativeCoefficient {
    let n = trace.n();
    let final_height = trace.steps().last().map_or(0.0, |m| m.height);
    if n < 2 || final_height <= 0.0 {
        return AgglomerativeCoefficient {
            value: 0.0,
            degenerate: true,
        };
    }
    let mut first = vec![0.0; n];
    for m in trace.steps() {
        for r in [m.left, m.right] {
            if r < n {
                first[r] = m.height;
            }
        }
    }
    let sum: f64 = first.iter().map(|&h| (1.0 - h / final_height).clamp(0.0, 1.0)).sum();
    AgglomerativeCoefficient {
        value: sum / n as f64,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringModel {
    pub linkage: Linkage,
    pub trace: MergeTrace,
    pub ac: AgglomerativeCoefficient,
}

/// Distances within this fraction of the largest input dissimilarity (its
/// square for Ward) of the step minimum count as tied. Rationally equal
/// inter-cluster distances reached through different update sequences can
/// differ in the last bits; without a band such ties would be broken by
/// rounding noise instead of by canonical id.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-12;

/// Agglomerative nesting with Lance–Williams updates.
///
/// At each step the closest pair of active clusters is merged. Tied
/// distances (see [`TIE_RELATIVE_TOLERANCE`]) go to the pair whose
/// (smaller, larger) canonical ids are lexicographically least, a cluster's
/// canonical id being its smallest original index.
///
/// Ward runs the recurrence on squared dissimilarities and reports square
/// roots as heights. On non-Euclidean input such as Gower it is a heuristic.
pub fn agnes(d: &DissimilarityMatrix, linkage: Linkage) -> Result<ClusteringModel, ClusteringError> {
    let n = d.n();
    if n < 2 {
        return Err(ClusteringError::InsufficientObservations(n));
    }
    let squared = linkage == Linkage::Ward;
    // Slot i always holds the cluster whose canonical id is i: merged
    // clusters are stored in the slot with the smaller index.
    let mut dist: Vec<f64> = (0..n * n)
        .map(|idx| {
            let v = d.get(idx / n, idx % n);
            if squared {
                v * v
            } else {
                v
            }
        })
        .collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut cluster_ref: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut steps = Vec::with_capacity(n - 1);

    let scale = dist.iter().copied().fold(0.0, f64::max);
    let tie_band = TIE_RELATIVE_TOLERANCE * scale;

    for t in 0..n - 1 {
        let mut min = f64::INFINITY;
        for (ai, &a) in active.iter().enumerate() {
            let row = &dist[a * n..(a + 1) * n];
            for &b in &active[ai + 1..] {
                min = min.min(row[b]);
            }
        }
        if !min.is_finite() {
            return Err(ClusteringError::NumericFailure(format!(
                "non-finite inter-cluster distance at step {t}"
            )));
        }
        // active is ascending, so the first hit is the lexicographically
        // least (canonical id) pair among the tied minima
        let (a, b) = active
            .iter()
            .enumerate()
            .find_map(|(ai, &a)| {
                active[ai + 1..]
                    .iter()
                    .find(|&&b| dist[a * n + b] <= min + tie_band)
                    .map(|&b| (a, b))
            })
            .expect("a finite minimum exists");
        let d_ab = dist[a * n + b];
        if !d_ab.is_finite() {
            return Err(ClusteringError::NumericFailure(format!(
                "non-finite inter-cluster distance at step {t}"
            )));
        }
        let height = if squared { d_ab.max(0.0).sqrt() } else { d_ab };
        let (na, nb) = (size[a], size[b]);
        steps.push(Merge {
            left: cluster_ref[a],
            right: cluster_ref[b],
            height,
            size: na + nb,
        });

        for &k in &active {
            if k == a || k == b {
                continue;
            }
            let v = linkage.update(dist[a * n + k], dist[b * n + k], d_ab, na, nb, size[k]);
            dist[a * n + k] = v;
            dist[k * n + a] = v;
        }
        size[a] = na + nb;
        cluster_ref[a] = n + t;
        active.retain(|&s| s != b);
    }

    let trace = MergeTrace { n, steps };
    let ac = agglomerative_coefficient(&trace);
    Ok(ClusteringModel { linkage, trace, ac })
}

/// Fits every linkage on the same dissimilarities, in [`Linkage::ALL`] order.
pub fn fit_all(d: &DissimilarityMatrix) -> Result<Vec<ClusteringModel>, ClusteringError> {
    Linkage::ALL.iter().map(|&l| agnes(d, l)).collect()
}

/// Highest agglomerative coefficient wins; equal coefficients resolve
/// Ward > Complete > Average > Single. `None` only for an empty slice.
pub fn select_model(models: &[ClusteringModel]) -> Option<&ClusteringModel> {
    models.iter().max_by(|x, y| {
        x.ac.value
            .total_cmp(&y.ac.value)
            .then(x.linkage.preference().cmp(&y.linkage.preference()))
    })
}
