use serde::Serialize;

use super::ClusteringError;
use crate::domain::{FeatureKind, FeatureMatrix};

/// Symmetric pairwise dissimilarities with a zero diagonal, stored as a full
/// row-major n × n buffer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissimilarityMatrix {
    labels: Vec<String>,
    d: Vec<f64>,
    /// Range of each numeric column used for normalization; `None` for
    /// categorical columns. Empty when built directly from values.
    feature_ranges: Vec<Option<f64>>,
}

impl DissimilarityMatrix {
    /// Builds from explicit values. Checks square shape, zero diagonal,
    /// symmetry, finiteness and non-negativity.
    pub fn from_rows(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, ClusteringError> {
        let n = rows.len();
        if labels.len() != n {
            return Err(ClusteringError::Shape(format!("{} labels for {n} rows", labels.len())));
        }
        let mut d = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ClusteringError::Shape(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            d.extend_from_slice(row);
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(ClusteringError::Shape(format!("d[{i}][{i}] is not zero")));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(ClusteringError::InvalidDistance { i, j, value: v });
                }
                if v != d[j * n + i] {
                    return Err(ClusteringError::Shape(format!("d[{i}][{j}] != d[{j}][{i}]")));
                }
            }
        }
        Ok(DissimilarityMatrix {
            labels,
            d,
            feature_ranges: Vec::new(),
        })
    }

    /// Builds from the strict upper triangle, row by row
    /// (`d01, d02, …, d0n, d12, …`).
    pub fn from_condensed(n: usize, condensed: &[f64]) -> Result<Self, ClusteringError> {
        if condensed.len() != n * n.saturating_sub(1) / 2 {
            return Err(ClusteringError::Shape(format!(
                "{} condensed entries for n = {n}",
                condensed.len()
            )));
        }
        let mut rows = vec![vec![0.0; n]; n];
        let mut it = condensed.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().expect("length checked");
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        DissimilarityMatrix::from_rows((0..n).map(|i| i.to_string()).collect(), rows)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.d[i * n..(i + 1) * n]
    }

    pub fn feature_ranges(&self) -> &[Option<f64>] {
        &self.feature_ranges
    }

    /// Number of columns that contributed to the distances.
    pub fn usable_features(&self) -> usize {
        self.feature_ranges.iter().filter(|r| r.is_none_or(|r| r > 0.0)).count()
    }
}

struct Column {
    index: usize,
    /// `Some(range)` for numeric columns.
    range: Option<f64>,
}

/// Gower dissimilarity over mixed numeric/categorical columns.
///
/// Numeric columns contribute `|x_i - x_j| / range`, categorical columns
/// contribute 0 on a match and 1 otherwise, and the result is the mean over
/// usable columns. Zero-range numeric columns and single-valued categorical
/// columns are left out of both the sum and the count.
pub fn gower_dissimilarity(fm: &FeatureMatrix) -> Result<DissimilarityMatrix, ClusteringError> {
    let n = fm.n_rows();
    if n == 0 {
        return Err(ClusteringError::Empty);
    }
    let rows = fm.rows();
    let mut feature_ranges = Vec::with_capacity(fm.n_cols());
    let mut usable = Vec::new();
    for (j, kind) in fm.feature_kinds().iter().enumerate() {
        match kind {
            FeatureKind::Numeric => {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[j]), hi.max(r[j]))
                });
                let range = hi - lo;
                feature_ranges.push(Some(range));
                if range > 0.0 {
                    usable.push(Column {
                        index: j,
                        range: Some(range),
                    });
                }
            }
            FeatureKind::Categorical => {
                feature_ranges.push(None);
                let first = rows[0][j];
                if rows.iter().any(|r| r[j] != first) {
                    usable.push(Column { index: j, range: None });
                }
            }
        }
    }
    if usable.is_empty() && n >= 2 {
        return Err(ClusteringError::DegenerateFeatures);
    }

    let m = usable.len() as f64;
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for k in i + 1..n {
            let sum: f64 = usable
                .iter()
                .map(|c| {
                    let (a, b) = (rows[i][c.index], rows[k][c.index]);
                    match c.range {
                        Some(r) => (a - b).abs() / r,
                        None => {
                            if a == b {
                                0.0
                            } else {
                                1.0
                            }
                        }
                    }
                })
                .sum();
            let v = sum / m;
            d[i * n + k] = v;
            d[k * n + i] = v;
        }
    }
    Ok(DissimilarityMatrix {
        labels: fm.students().to_vec(),
        d,
        feature_ranges,
    })
}
