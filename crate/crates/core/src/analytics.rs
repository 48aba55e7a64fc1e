//! Dashboard quantities: scores, KPIs, per-KC totals and the score histogram.

use serde::Serialize;
use thiserror::Error;

use crate::domain::{class_progress, ActivityEvent, ActivitySpec, FeatureMatrix, StudentProgress};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("bin width {0} does not divide 100")]
    InvalidBinWidth(u32),
    #[error("feature matrix carries no knowledge-component columns")]
    NoKcColumns,
}

/// Percentage of answered questions whose first response was correct, or
/// `None` when nothing has been answered yet.
pub fn student_score(progress: &StudentProgress) -> Option<f64> {
    let answered = progress.answered();
    (answered > 0).then(|| 100.0 * progress.first_correct() as f64 / answered as f64)
}

/// Average of the two central values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiSnapshot {
    pub min_score: Option<f64>,
    pub max_score: Option<f64>,
    pub median_score: Option<f64>,
    pub mean_score: Option<f64>,
    pub completed_count: usize,
    pub active_students: usize,
    pub roster_size: usize,
    pub events_seen: usize,
    pub version: u64,
}

/// Score statistics over students with at least one answer.
pub fn kpis_from_progress(progress: &[StudentProgress], events_seen: usize, version: u64) -> KpiSnapshot {
    let scores: Vec<f64> = progress.iter().filter_map(student_score).collect();
    let active_students = progress
        .iter()
        .filter(|p| p.answered() > 0 || p.total_hints() > 0)
        .count();
    let completed_count = progress
        .iter()
        .filter(|p| !p.questions.is_empty() && p.is_complete())
        .count();
    let (min_score, max_score, mean_score) = if scores.is_empty() {
        (None, None, None)
    } else {
        (
            scores.iter().copied().reduce(f64::min),
            scores.iter().copied().reduce(f64::max),
            Some(scores.iter().sum::<f64>() / scores.len() as f64),
        )
    };
    KpiSnapshot {
        min_score,
        max_score,
        median_score: median(&scores),
        mean_score,
        completed_count,
        active_students,
        roster_size: progress.len(),
        events_seen,
        version,
    }
}

pub fn compute_kpis(log: &[ActivityEvent], spec: &ActivitySpec, version: u64) -> KpiSnapshot {
    kpis_from_progress(&class_progress(log, spec), log.len(), version)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KcTotals {
    pub kc_id: String,
    pub incorrect_total: u64,
    pub hints_total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KcSummary {
    pub kcs: Vec<KcTotals>,
}

/// Column sums of the incorrect and hint families. Meant for full-roster
/// matrices, though any row subset works (e.g. one cluster's members).
pub fn kc_summary(fm: &FeatureMatrix) -> Result<KcSummary, AnalyticsError> {
    kc_summary_for_rows(fm, 0..fm.n_rows())
}

pub fn kc_summary_for_rows(
    fm: &FeatureMatrix,
    rows: impl IntoIterator<Item = usize> + Clone,
) -> Result<KcSummary, AnalyticsError> {
    if fm.kc_ids().is_empty() && fm.n_cols() > 0 {
        return Err(AnalyticsError::NoKcColumns);
    }
    let kcs = fm
        .kc_ids()
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let (mut incorrect_total, mut hints_total) = (0u64, 0u64);
            for r in rows.clone() {
                incorrect_total += fm.value(r, fm.incorrect_column(k)) as u64;
                hints_total += fm.value(r, fm.hints_column(k)) as u64;
            }
            KcTotals {
                kc_id: id.clone(),
                incorrect_total,
                hints_total,
            }
        })
        .collect();
    Ok(KcSummary { kcs })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreHistogram {
    pub bin_width: u32,
    pub bins: Vec<u64>,
}

/// Bins `[b·w, (b+1)·w)`, with the last bin closed at 100. Scores outside
/// `[0, 100]` are clamped into the end bins.
pub fn score_histogram(scores: &[f64], bin_width: u32) -> Result<ScoreHistogram, AnalyticsError> {
    if bin_width == 0 || 100 % bin_width != 0 {
        return Err(AnalyticsError::InvalidBinWidth(bin_width));
    }
    let n_bins = (100 / bin_width) as usize;
    let mut bins = vec![0u64; n_bins];
    for &s in scores {
        let b = ((s / bin_width as f64).floor().max(0.0) as usize).min(n_bins - 1);
        bins[b] += 1;
    }
    Ok(ScoreHistogram { bin_width, bins })
}

/// One scorecard row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgressRow {
    pub student_id: String,
    pub display_name: String,
    pub score: Option<f64>,
    pub answered: usize,
    pub completed: bool,
    pub hints: u64,
    pub questions: Vec<crate::domain::QuestionProgress>,
}

pub fn progress_rows(progress: &[StudentProgress], spec: &ActivitySpec) -> Vec<ProgressRow> {
    progress
        .iter()
        .map(|p| ProgressRow {
            student_id: p.student_id.clone(),
            display_name: spec.display_name(&p.student_id).unwrap_or_default().to_owned(),
            score: student_score(p),
            answered: p.answered(),
            completed: p.is_complete(),
            hints: p.total_hints(),
            questions: p.questions.clone(),
        })
        .collect()
}
